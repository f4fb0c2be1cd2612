import socket

import pytest
from hypothesis import given, strategies as st

from vsspipe.broker import Broker, BrokerClient, Datapoint, FrameError, TypeMismatch, parse_frame, serve
from vsspipe.broker.protocol import decode_value, encode_value
from vsspipe.catalog import UnknownSignal
from vsspipe.clock import VirtualClock

CHILD = "Vehicle.Cabin.ChildPresenceDetection.IsChildDetected"
TEMP = "Vehicle.Cabin.HVAC.CabinTemperature"
IGN = "Vehicle.LowVoltageSystemState"
STAGE = "Vehicle.Cabin.ChildPresenceDetection.EscalationStage"


@pytest.fixture
def server(catalog):
    srv = serve(Broker(catalog, VirtualClock()), "127.0.0.1:0")
    yield srv
    srv.shutdown()


def _addr(srv):
    return "%s:%d" % srv.address


def test_set_then_get(broker):
    broker.set_current(CHILD, Datapoint(True))
    assert broker.get_current(CHILD).value is True


def test_type_mismatch_names_variants(broker):
    with pytest.raises(TypeMismatch) as err:
        broker.set_current(TEMP, "hot")
    assert "real" in err.value.expected and err.value.given == "text"
    assert broker.get_current(TEMP) is None


def test_unknown_path_never_created(broker):
    with pytest.raises(UnknownSignal):
        broker.set_current("Vehicle.Cabin.Nope", 1)
    with pytest.raises(UnknownSignal):
        broker.get_current("Vehicle.Cabin.Nope")


def test_int_range_and_enum_checks(broker):
    with pytest.raises(TypeMismatch):
        broker.set_current(STAGE, 300)
    with pytest.raises(TypeMismatch):
        broker.set_current(STAGE, True)
    with pytest.raises(TypeMismatch):
        broker.set_current(IGN, "PARKED_SOMEWHERE")
    broker.set_current(IGN, "OFF")


def test_fresh_get_and_last_write_wins(catalog):
    clock = VirtualClock()
    b = Broker(catalog, clock)
    assert b.get_current(TEMP) is None
    b.set_current(TEMP, 18.0)
    clock.advance(1.0)
    b.set_current(TEMP, 22.0)
    dp = b.get_current(TEMP)
    assert dp.value == 22.0 and dp.timestamp == 1.0
    assert [(t.previous, t.value) for t in b.history(TEMP)] == [(None, 18.0), (18.0, 22.0)]


def test_subscribe_then_set_one_event(broker):
    sub = broker.subscribe([CHILD])
    broker.set_current(CHILD, True)
    assert [(p, dp.value) for p, dp in sub.drain()] == [(CHILD, True)]


def test_subscription_fifo_per_path(broker):
    sub = broker.subscribe([TEMP, CHILD])
    broker.set_current(TEMP, 19.0)
    broker.set_current(TEMP, 20.0)
    assert [(p, dp.value) for p, dp in sub.drain()] == [(TEMP, 19.0), (TEMP, 20.0)]


def test_subscribe_snapshot_first(broker):
    broker.set_current(TEMP, 18.0)
    sub = broker.subscribe([TEMP, CHILD])
    broker.set_current(CHILD, True)
    assert [p for p, _ in sub.drain()] == [TEMP, CHILD]


def test_subscribe_unknown_is_atomic(broker):
    with pytest.raises(UnknownSignal):
        broker.subscribe([TEMP, "Vehicle.Nope"])
    assert broker._subs == []


def test_unsubscribe_stops_delivery(broker):
    sub = broker.subscribe([TEMP])
    sub.close()
    broker.set_current(TEMP, 1.0)
    assert sub.drain() == []


@pytest.mark.parametrize("value", [True, False, 0, -17, 2 ** 40, 0.1, -1e300, 22.0, "", "a b", 'quo"te', "ümlaut\tx"])
def test_value_codec_round_trip(value):
    tag, literal = encode_value(value).split(" ", 1)
    out = decode_value(tag, literal)
    assert out == value and type(out) is type(value)


@given(st.one_of(st.booleans(), st.integers(), st.floats(allow_nan=False, allow_infinity=False), st.text()))
def test_value_codec_property(value):
    tag, literal = encode_value(value).split(" ", 1)
    assert "\n" not in literal
    out = decode_value(tag, literal)
    assert out == value and type(out) is type(value)


@pytest.mark.parametrize("line", [b"", b"GET\n", b"1 FROB x\n", b"bad id! GET x\n", b"\xff\xfe GET\n"])
def test_bad_frames(line):
    with pytest.raises(FrameError):
        parse_frame(line)


def test_frame_parse():
    f = parse_frame(b"r1 SET Vehicle.Speed real 1.5\n")
    assert (f.req_id, f.verb, f.rest) == ("r1", "SET", "Vehicle.Speed real 1.5")
    assert f.encode() == b"r1 SET Vehicle.Speed real 1.5\n"


def test_tcp_value_visible_across_clients(server):
    with BrokerClient.connect(_addr(server)) as a, BrokerClient.connect(_addr(server)) as b:
        a.set_current(TEMP, 21.5)
        assert b.get_current(TEMP).value == 21.5
        assert b.get_current(CHILD) is None


def test_tcp_errors_map_to_exceptions(server):
    with BrokerClient.connect(_addr(server)) as c:
        with pytest.raises(TypeMismatch):
            c.set_current(TEMP, "hot")
        with pytest.raises(UnknownSignal):
            c.get_current("Vehicle.Nope")
        with pytest.raises(UnknownSignal):
            c.subscribe([TEMP, "Vehicle.Nope"])
        c.set_current(CHILD, True)


def test_tcp_fan_out(server):
    with BrokerClient.connect(_addr(server)) as a, BrokerClient.connect(_addr(server)) as b, \
            BrokerClient.connect(_addr(server)) as w:
        sa, sb = a.subscribe([CHILD]), b.subscribe([CHILD])
        w.set_current(CHILD, True)
        w.sync()
        a.sync()
        b.sync()
        assert [dp.value for _, dp in sa.drain()] == [True]
        assert [dp.value for _, dp in sb.drain()] == [True]


def test_tcp_snapshot_and_sink(server):
    got = []
    with BrokerClient.connect(_addr(server)) as c:
        c.set_current(IGN, "OFF")
        c.subscribe([IGN, TEMP], sink=lambda p, dp: got.append((p, dp.value)))
        c.set_current(TEMP, 18.0)
        c.sync()
    assert got == [(IGN, "OFF"), (TEMP, 18.0)]


def _raw(server, payload):
    s = socket.create_connection(server.address, timeout=2)
    s.sendall(payload)
    data = b""
    while True:
        chunk = s.recv(4096)
        if not chunk:
            break
        data += chunk
    s.close()
    return data


def test_malformed_frame_gets_error_then_close(server):
    data = _raw(server, b"!!! not a frame\n" + b"x1 PING\n")
    assert data.startswith(b"- ERR BAD_FRAME")
    assert data.count(b"\n") == 1
    assert _raw(server, b"this is not a frame\n").startswith(b"this ERR BAD_FRAME")


def test_wire_error_codes(server):
    data = _raw(server, b"a1 GET Vehicle.Nope\na2 SET " + TEMP.encode() + b" text \"hot\"\na3 PING\na4 FROB\n")
    lines = data.decode().splitlines()
    assert lines[0] == "a1 ERR UNKNOWN_SIGNAL Vehicle.Nope"
    assert lines[1].startswith("a2 ERR TYPE_MISMATCH ")
    assert lines[2] == "a3 ACK"
    assert lines[3].startswith("a4 ERR BAD_FRAME")
