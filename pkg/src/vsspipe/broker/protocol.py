"""Line protocol spoken between broker clients and ``broker serve``.

Every frame is one UTF-8 line ``<req-id> <VERB> <args...>\\n``. ``req-id`` is
1-32 characters from ``[A-Za-z0-9_-]``; the server echoes it on replies.

Client frames::

    <id> GET <path>
    <id> SET <path> <tag> <literal>
    <id> SUBSCRIBE <path> [<path> ...]
    <id> UNSUBSCRIBE              (id of the SUBSCRIBE to cancel)
    <id> PING

Server frames::

    <id> ACK                                   PING, UNSUBSCRIBE
    <id> ACK <timestamp>                       SET
    <id> ACK <timestamp> <tag> <literal>       GET, value present
    <id> ACK NONE                              GET, never written
    <id> ACK <count>                           SUBSCRIBE, then snapshot EVENTs
    <id> EVENT <path> <timestamp> <tag> <literal>
    <id> ERR <code> <message>                  code: UNKNOWN_SIGNAL | TYPE_MISMATCH | BAD_FRAME

Values are ``(tag, literal)`` pairs: ``bool true|false``, ``int`` decimal,
``real`` Python float repr (finite), ``text`` JSON string literal. A frame
that cannot be parsed is answered with ``- ERR BAD_FRAME ...`` (or its own id
when readable) and the connection is closed.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

UNKNOWN_SIGNAL = "UNKNOWN_SIGNAL"
TYPE_MISMATCH = "TYPE_MISMATCH"
BAD_FRAME = "BAD_FRAME"

CLIENT_VERBS = ("GET", "SET", "SUBSCRIBE", "UNSUBSCRIBE", "PING")
SERVER_VERBS = ("ACK", "EVENT", "ERR")

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,32}$")
_INT_RE = re.compile(r"^[-+]?\d+$")
MAX_FRAME = 64 * 1024


class FrameError(ValueError):
    def __init__(self, message: str, req_id: str = "-"):
        super().__init__(message)
        self.req_id = req_id


@dataclass(frozen=True)
class Frame:
    req_id: str
    verb: str
    rest: str = ""

    def encode(self) -> bytes:
        line = f"{self.req_id} {self.verb}" + (f" {self.rest}" if self.rest else "")
        return (line + "\n").encode("utf-8")


def encode_value(value) -> str:
    if isinstance(value, bool):
        return "bool " + ("true" if value else "false")
    if isinstance(value, int):
        return f"int {value}"
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("non-finite reals are not encodable")
        return f"real {value!r}"
    if isinstance(value, str):
        return "text " + json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot encode {type(value).__name__}")


def decode_value(tag: str, literal: str):
    if tag == "bool":
        if literal not in ("true", "false"):
            raise FrameError(f"bad bool literal {literal!r}")
        return literal == "true"
    if tag == "int":
        if not _INT_RE.match(literal):
            raise FrameError(f"bad int literal {literal!r}")
        return int(literal)
    if tag == "real":
        try:
            v = float(literal)
        except ValueError:
            raise FrameError(f"bad real literal {literal!r}") from None
        if not math.isfinite(v):
            raise FrameError("non-finite real")
        return v
    if tag == "text":
        try:
            v = json.loads(literal)
        except ValueError:
            raise FrameError(f"bad text literal {literal!r}") from None
        if not isinstance(v, str):
            raise FrameError("text literal must be a JSON string")
        return v
    raise FrameError(f"unknown value tag {tag!r}")


def split_value(rest: str):
    parts = rest.split(" ", 1)
    if len(parts) != 2:
        raise FrameError("missing value literal")
    return decode_value(parts[0], parts[1])


def parse_frame(line: bytes | str, verbs=CLIENT_VERBS + SERVER_VERBS) -> Frame:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise FrameError("frame is not UTF-8") from None
    line = line.rstrip("\n")
    if "\n" in line or "\r" in line:
        raise FrameError("embedded line break")
    parts = line.split(" ", 2)
    if len(parts) < 2 or not _ID_RE.match(parts[0]):
        raise FrameError("frame must start with '<req-id> <VERB>'")
    req_id, verb = parts[0], parts[1]
    if verb not in verbs:
        raise FrameError(f"unknown verb {verb!r}", req_id)
    return Frame(req_id, verb, parts[2] if len(parts) == 3 else "")


def parse_timestamp(token: str) -> float:
    try:
        ts = float(token)
    except ValueError:
        raise FrameError(f"bad timestamp {token!r}") from None
    return ts
