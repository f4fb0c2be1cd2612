"""Child presence detection escalation logic, driven by broker signals.

The transition function :func:`step` is pure; :func:`run_sut` wraps it in a
run-to-completion worker that reads signal events from a broker
subscription and timer firings from a :class:`VirtualClock`.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, replace
from typing import Callable, Union

from .clock import VirtualClock

log = logging.getLogger(__name__)

S0 = "S0_Standby"
S1 = "S1_Evaluate"
S2 = "S2_ChildConfirmed"
S3 = "S3_NotifyDriver"
S4 = "S4_AlertEscalation"
S5 = "S5_HvacIntervention"
S6 = "S6_ContactCarers"
S7 = "S7_Emergency"
STATES = (S0, S1, S2, S3, S4, S5, S6, S7)
ESCALATION = (S1, S2, S3, S4, S5, S6, S7)
ACK_STATES = (S3, S4, S5, S6)

_CPD = "Vehicle.Cabin.ChildPresenceDetection."
_APP = "Vehicle.Cabin.Infotainment.DriverAppNotification."

IS_CHILD_DETECTED = _CPD + "IsChildDetected"
IS_ESCALATION_ACTIVE = _CPD + "IsEscalationActive"
ESCALATION_STAGE = _CPD + "EscalationStage"
IS_MINIMAL_ENERGY = _CPD + "IsMinimalEnergyModeActive"
ARE_CARERS_NOTIFIED = _CPD + "AreCarersNotified"
IS_ECALL_REQUESTED = _CPD + "IsEmergencyCallRequested"
BATTERY_GUARD = _CPD + "BatteryGuardThreshold"
IS_DRIVER_NOTIFIED = _APP + "IsDriverNotified"
HAS_DRIVER_ACK = _APP + "HasDriverAcknowledged"
ACK_COUNTDOWN = _APP + "AckCountdown"
AUTO_OVERRIDE = "Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive"
CABIN_TEMPERATURE = "Vehicle.Cabin.HVAC.CabinTemperature"
IGNITION = "Vehicle.LowVoltageSystemState"
SOC_TRACTION = "Vehicle.Powertrain.TractionBattery.StateOfCharge.Current"
SOC_LOW_VOLTAGE = "Vehicle.LowVoltageBattery.StateOfCharge.Current"
HAZARD = "Vehicle.Body.Lights.Hazard.IsSignaling"
HORN = "Vehicle.Body.Horn.IsActive"

INPUTS = (IS_CHILD_DETECTED, HAS_DRIVER_ACK, IGNITION, SOC_TRACTION, SOC_LOW_VOLTAGE, BATTERY_GUARD)
OUTPUTS = (IS_ESCALATION_ACTIVE, ESCALATION_STAGE, IS_MINIMAL_ENERGY, ARE_CARERS_NOTIFIED,
           IS_ECALL_REQUESTED, IS_DRIVER_NOTIFIED, HAS_DRIVER_ACK, ACK_COUNTDOWN, AUTO_OVERRIDE,
           CABIN_TEMPERATURE, HAZARD, HORN)
PARKED = ("OFF", "LOCK")

T_EVAL, T_ACK_1, T_ACK_2, T_ACK_3, T_CARERS = "t_eval", "t_ack_1", "t_ack_2", "t_ack_3", "t_carers"

LOG_PREFIX = "APPL:     "


@dataclass(frozen=True)
class CpdsConfig:
    eval_window: float = 10.0
    t_ack_1: float = 300.0
    t_ack_2: float = 300.0
    t_ack_3: float = 300.0
    t_carers: float = 300.0
    safe_min_c: float = 18.0
    safe_max_c: float = 24.0
    hvac_target_c: float = 22.0
    soc_guard_pct: float = 30.0
    soc_crit_pct: float = 10.0
    time_scale: float = 1.0

    def __post_init__(self):
        for name in ("eval_window", "t_ack_1", "t_ack_2", "t_ack_3", "t_carers", "time_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.safe_min_c < self.hvac_target_c <= self.safe_max_c:
            raise ValueError("need safe_min_c < hvac_target_c <= safe_max_c")
        if not self.soc_crit_pct < self.soc_guard_pct:
            raise ValueError("need soc_crit_pct < soc_guard_pct")

    @classmethod
    def from_mapping(cls, data) -> "CpdsConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data or {}) - known
        if extra:
            raise ValueError(f"unknown cpds settings: {sorted(extra)}")
        return cls(**{k: float(v) for k, v in (data or {}).items()})


@dataclass(frozen=True)
class CpdsState:
    current: str = S0
    entered_at: float = 0.0
    active_timer: tuple[str, float] | None = None
    child_detected: bool = False
    ignition: str | None = None
    soc_traction: float | None = None
    soc_low_voltage: float | None = None
    guard_override: float | None = None

    def soc(self) -> float | None:
        known = [s for s in (self.soc_traction, self.soc_low_voltage) if s is not None]
        return min(known) if known else None


@dataclass(frozen=True)
class SignalEvent:
    path: str
    value: object


@dataclass(frozen=True)
class TimerFired:
    name: str


Event = Union[SignalEvent, TimerFired]


@dataclass(frozen=True)
class Transition:
    state: CpdsState
    commands: tuple[tuple[str, object], ...] = ()
    entered: tuple[str, ...] = ()
    logs: tuple[str, ...] = ()


def _minutes(seconds: float) -> str:
    if seconds % 60 == 0:
        m = int(seconds // 60)
        return f"{m} minute" + ("" if m == 1 else "s")
    return f"{seconds:g} seconds"


class _Builder:
    def __init__(self, state: CpdsState, config: CpdsConfig, now: float):
        self.state = state
        self.config = config
        self.now = now
        self.commands: list[tuple[str, object]] = []
        self.entered: list[str] = []
        self.logs: list[str] = []

    def guard(self) -> float:
        g = self.state.guard_override
        return self.config.soc_guard_pct if g is None else g

    def below(self, threshold: float) -> bool:
        soc = self.state.soc()
        return soc is not None and soc < threshold

    def enter(self, target: str, timer: str | None = None, window: float = 0.0):
        active = (timer, self.now + window) if timer else None
        self.state = replace(self.state, current=target, entered_at=self.now, active_timer=active)
        self.entered.append(target)
        if target != S0:
            self.commands.append((ESCALATION_STAGE, STATES.index(target)))
        getattr(self, "_on_" + target[:2].lower())()

    def _on_s0(self):
        self.commands.extend([
            (ESCALATION_STAGE, 0), (IS_ESCALATION_ACTIVE, False), (IS_DRIVER_NOTIFIED, False),
            (ACK_COUNTDOWN, 0), (AUTO_OVERRIDE, False), (IS_MINIMAL_ENERGY, False),
            (HAZARD, False), (HORN, False), (ARE_CARERS_NOTIFIED, False), (IS_ECALL_REQUESTED, False),
        ])
        self.logs.append("CPDS standby, all outputs reset")

    def _on_s1(self):
        self.logs.append(f"Ignition {self.state.ignition}, evaluating cabin sensors")

    def _on_s2(self):
        self.logs.append("Child presence confirmed")
        self.enter(S3, T_ACK_1, self.config.t_ack_1)

    def _on_s3(self):
        self.commands.extend([
            (HAS_DRIVER_ACK, False), (IS_ESCALATION_ACTIVE, True),
            (IS_DRIVER_NOTIFIED, True), (ACK_COUNTDOWN, int(self.config.t_ack_1)),
        ])
        self.logs.append("Driver notified, waiting for acknowledgment")

    def _on_s4(self):
        self.commands.extend([(HAZARD, True), (HORN, True), (ACK_COUNTDOWN, int(self.config.t_ack_2))])
        self.logs.append("No acknowledgment, hazard lights and horn activated")

    def _on_s5(self):
        minimal = self.below(self.guard())
        self.commands.extend([
            (AUTO_OVERRIDE, True), (CABIN_TEMPERATURE, float(self.config.hvac_target_c)),
            (IS_MINIMAL_ENERGY, minimal), (ACK_COUNTDOWN, int(self.config.t_ack_3)),
        ])
        self.logs.append(f"HVAC intervention started, cabin target {self.config.hvac_target_c:g} C"
                         + (" in minimal energy mode" if minimal else ""))

    def _on_s6(self):
        if self.below(self.config.soc_crit_pct):
            self.commands.extend([(AUTO_OVERRIDE, False), (IS_MINIMAL_ENERGY, True)])
            self.logs.append("Battery critical, HVAC hold skipped")
        self.commands.extend([(ARE_CARERS_NOTIFIED, True), (ACK_COUNTDOWN, int(self.config.t_carers))])
        self.logs.append("Carers contacted")

    def _on_s7(self):
        self.commands.extend([(IS_ECALL_REQUESTED, True), (ACK_COUNTDOWN, 0)])
        self.logs.append("Emergency call requested")

    def escalate_to_hvac(self):
        if self.below(self.config.soc_crit_pct):
            self.enter(S6, T_CARERS, self.config.t_carers)
        else:
            self.enter(S5, T_ACK_3, self.config.t_ack_3)

    def done(self) -> Transition:
        return Transition(self.state, tuple(self.commands), tuple(self.entered), tuple(self.logs))


def _update_inputs(state: CpdsState, ev: SignalEvent, config: CpdsConfig) -> tuple[CpdsState, str | None]:
    p, v = ev.path, ev.value
    if p == IS_CHILD_DETECTED:
        return replace(state, child_detected=bool(v)), None
    if p == IGNITION:
        return replace(state, ignition=str(v)), None
    if p == SOC_TRACTION:
        return replace(state, soc_traction=float(v)), None
    if p == SOC_LOW_VOLTAGE:
        return replace(state, soc_low_voltage=float(v)), None
    if p == BATTERY_GUARD:
        if float(v) <= config.soc_crit_pct:
            return state, f"Battery guard {v} not above critical level, ignored"
        return replace(state, guard_override=float(v)), None
    return state, None


def step(state: CpdsState, event: Event, config: CpdsConfig, now: float) -> Transition:
    """Apply one event; returns the new state with the broker commands it implies."""
    b = _Builder(state, config, now)
    cur = state.current

    if isinstance(event, TimerFired):
        if state.active_timer is None or state.active_timer[0] != event.name:
            b.logs.append(f"Stale timer {event.name} ignored")
            return b.done()
        if cur == S1:
            b.logs.append("No child detected within evaluation window")
            b.enter(S0)
        elif cur == S3:
            b.enter(S4, T_ACK_2, config.t_ack_2)
        elif cur == S4:
            b.escalate_to_hvac()
        elif cur == S5:
            b.enter(S6, T_CARERS, config.t_carers)
        elif cur == S6:
            b.enter(S7)
        return b.done()

    if not isinstance(event, SignalEvent):
        b.logs.append(f"Unknown event {event!r} ignored")
        return b.done()

    b.state, note = _update_inputs(state, event, config)
    if note:
        b.logs.append(note)
    path, value = event.path, event.value

    if path == HAS_DRIVER_ACK and value is True and cur in ACK_STATES:
        if cur == S5:
            early = now - state.entered_at < config.t_ack_3
            b.logs.append(f"HVAC hold acknowledged {'within' if early else 'after'} T_ACK_3 "
                          f"({_minutes(config.t_ack_3)}), moving to standby")
        else:
            b.logs.append(f"Driver acknowledged in {cur}, moving to standby")
        b.enter(S0)
    elif path == IGNITION:
        if cur == S0 and value in PARKED:
            b.enter(S1, T_EVAL, config.eval_window)
            if b.state.child_detected:
                b.enter(S2)
        elif cur == S1 and value not in PARKED:
            b.logs.append("Ignition back on, evaluation cancelled")
            b.enter(S0)
    elif path == IS_CHILD_DETECTED:
        if cur == S1 and value is True:
            b.enter(S2)
    elif path in (SOC_TRACTION, SOC_LOW_VOLTAGE, BATTERY_GUARD) and cur == S5:
        if b.below(config.soc_crit_pct):
            b.enter(S6, T_CARERS, config.t_carers)
        elif b.below(b.guard()):
            b.commands.append((IS_MINIMAL_ENERGY, True))
            b.logs.append("Battery guard active, minimal energy mode")
    return b.done()


class SutError(RuntimeError):
    pass


class SutHandle:
    """A running SUT bound to one broker connection and one virtual clock."""

    def __init__(self, broker, config: CpdsConfig, clock: VirtualClock,
                 echo: Callable[[str], None] | None = None):
        self.broker = broker
        self.config = config
        self.clock = clock
        self.echo = echo
        self.state = CpdsState(entered_at=clock.now())
        self.log: list[str] = []
        self.visited: list[str] = [S0]
        self.commands: list[tuple[str, object]] = []
        self._events: queue.Queue = queue.Queue()
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._work, daemon=True, name="cpds-sut")
        self._ticker: threading.Thread | None = None
        self.error: BaseException | None = None
        self._sub = None

    def start(self) -> "SutHandle":
        self._write([(p, v) for p, v in _reset_commands()])
        self._sub = self.broker.subscribe(INPUTS, sink=lambda p, dp: self._events.put(SignalEvent(p, dp.value)))
        self._worker.start()
        return self

    def _emit(self, message: str):
        line = LOG_PREFIX + message
        self.log.append(line)
        if self.echo:
            self.echo(line)

    def _write(self, commands):
        for path, value in commands:
            self.broker.set_current(path, value)

    def _apply(self, event: Event):
        with self._lock:
            tr = step(self.state, event, self.config, self.clock.now())
            old = self.state.active_timer
            self.state = tr.state
            if old != tr.state.active_timer:
                if old:
                    self.clock.cancel(old[0])
                if tr.state.active_timer:
                    self.clock.schedule(*tr.state.active_timer)
            for msg in tr.logs:
                self._emit(msg)
            self.visited.extend(tr.entered)
            self.commands.extend(tr.commands)
            self._write(tr.commands)

    def _work(self):
        while True:
            ev = self._events.get()
            try:
                if ev is None:
                    return
                self._apply(ev)
            except BaseException as exc:  # surfaced by settle()
                self.error = exc
                log.exception("SUT event failed")
            finally:
                self._events.task_done()

    def settle(self, timeout: float = 5.0) -> None:
        """Wait until every broker event committed so far has been processed."""
        self.broker.sync()
        deadline = time.monotonic() + timeout
        while self._events.unfinished_tasks:
            if time.monotonic() > deadline:
                raise SutError("SUT did not drain its event queue")
            time.sleep(0.0005)
        if self.error is not None:
            raise SutError(f"SUT failed: {self.error}") from self.error

    def advance_clock(self, duration: float) -> list[str]:
        if self._events.unfinished_tasks:
            raise SutError("advance_clock requires a drained event queue; call settle() first")
        with self._lock:
            return self.clock.advance(duration, lambda name: self._apply(TimerFired(name)))

    def run_free(self, tick: float = 0.01) -> None:
        """Advance virtual time with the wall clock, scaled by ``config.time_scale``."""
        def loop():
            last = time.monotonic()
            while not self._stop.wait(tick):
                t = time.monotonic()
                self._events.join()
                with self._lock:
                    self.clock.advance((t - last) * self.config.time_scale,
                                       lambda name: self._apply(TimerFired(name)))
                last = t
        self._ticker = threading.Thread(target=loop, daemon=True, name="cpds-clock")
        self._ticker.start()

    @property
    def current(self) -> str:
        return self.state.current

    def stop(self) -> None:
        self._stop.set()
        if self._sub is not None:
            self._sub.close()
        self._events.put(None)
        self._worker.join(timeout=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def _reset_commands():
    b = _Builder(CpdsState(), CpdsConfig(), 0.0)
    b._on_s0()
    return b.commands


def run_sut(endpoint, config: CpdsConfig | None = None, clock: VirtualClock | None = None,
            echo: Callable[[str], None] | None = None) -> SutHandle:
    from .broker import connect
    try:
        broker = connect(endpoint)
    except OSError as exc:
        raise SutError(f"cannot reach broker at {endpoint}: {exc}") from exc
    handle = SutHandle(broker, config or CpdsConfig(), clock or VirtualClock(), echo)
    try:
        return handle.start()
    except Exception as exc:
        raise SutError(f"SUT startup failed: {exc}") from exc
