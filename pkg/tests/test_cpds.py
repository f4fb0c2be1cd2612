import pytest

from vsspipe.broker import Broker, serve
from vsspipe.clock import VirtualClock
from vsspipe.cpds import (
    AUTO_OVERRIDE, CABIN_TEMPERATURE, HAS_DRIVER_ACK, IGNITION, IS_CHILD_DETECTED, IS_DRIVER_NOTIFIED,
    IS_ESCALATION_ACTIVE, S0, S1, S2, S3, S4, S5, S6, SOC_TRACTION, T_ACK_1, T_ACK_2, T_EVAL,
    CpdsConfig, CpdsState, SignalEvent, SutError, SutHandle, TimerFired, run_sut, step,
)

CFG = CpdsConfig()


def _cmds(tr):
    return dict(tr.commands)


def test_config_defaults_and_invariants():
    assert (CFG.eval_window, CFG.t_ack_1, CFG.hvac_target_c) == (10.0, 300.0, 22.0)
    with pytest.raises(ValueError):
        CpdsConfig(safe_min_c=23.0)
    with pytest.raises(ValueError):
        CpdsConfig(soc_crit_pct=40.0)
    with pytest.raises(ValueError):
        CpdsConfig(t_ack_2=0)
    with pytest.raises(ValueError):
        CpdsConfig.from_mapping({"t_ack_9": 1})


def test_ignition_off_starts_evaluation():
    tr = step(CpdsState(), SignalEvent(IGNITION, "OFF"), CFG, now=100.0)
    assert tr.state.current == S1
    assert tr.state.active_timer == (T_EVAL, 110.0)


def test_ack_in_s3_returns_to_standby():
    s3 = CpdsState(S3, 0.0, (T_ACK_1, 300.0))
    tr = step(s3, SignalEvent(HAS_DRIVER_ACK, True), CFG, now=30.0)
    assert tr.state.current == S0
    assert tr.state.active_timer is None
    c = _cmds(tr)
    assert c[IS_DRIVER_NOTIFIED] is False
    assert c[IS_ESCALATION_ACTIVE] is False
    assert c[AUTO_OVERRIDE] is False


def test_t_ack_2_enters_hvac_intervention():
    s4 = CpdsState(S4, 300.0, (T_ACK_2, 600.0), soc_traction=80.0)
    tr = step(s4, TimerFired(T_ACK_2), CFG, now=600.0)
    assert tr.state.current == S5
    c = _cmds(tr)
    assert c[AUTO_OVERRIDE] is True
    assert c[CABIN_TEMPERATURE] == 22.0


def test_eval_window_without_child():
    s1 = CpdsState(S1, 0.0, (T_EVAL, 10.0))
    assert step(s1, TimerFired(T_EVAL), CFG, now=10.0).state.current == S0


def test_child_during_evaluation_reaches_notification():
    s1 = CpdsState(S1, 0.0, (T_EVAL, 10.0))
    tr = step(s1, SignalEvent(IS_CHILD_DETECTED, True), CFG, now=3.0)
    assert tr.entered == (S2, S3)
    assert tr.state.active_timer == (T_ACK_1, 303.0)
    assert _cmds(tr)[IS_DRIVER_NOTIFIED] is True


def test_stale_timer_ignored():
    s3 = CpdsState(S3, 0.0, (T_ACK_1, 300.0))
    tr = step(s3, TimerFired(T_EVAL), CFG, now=10.0)
    assert tr.state == s3 and tr.commands == ()


def test_critical_soc_skips_hvac_hold():
    s4 = CpdsState(S4, 300.0, (T_ACK_2, 600.0), soc_traction=5.0)
    tr = step(s4, TimerFired(T_ACK_2), CFG, now=600.0)
    assert tr.state.current == S6
    assert _cmds(tr).get(CABIN_TEMPERATURE) is None


def test_guard_selects_minimal_energy():
    s5 = CpdsState(S5, 600.0, ("t_ack_3", 900.0), soc_traction=80.0)
    tr = step(s5, SignalEvent(SOC_TRACTION, 25.0), CFG, now=650.0)
    assert tr.state.current == S5
    assert _cmds(tr) == {"Vehicle.Cabin.ChildPresenceDetection.IsMinimalEnergyModeActive": True}


def test_unknown_event_is_logged():
    tr = step(CpdsState(), object(), CFG, now=0.0)
    assert tr.state == CpdsState()
    assert tr.logs


def test_clock_fires_in_deadline_order():
    clock = VirtualClock()
    clock.schedule("late", 20.0)
    clock.schedule("early", 5.0)
    assert clock.advance(0) == []
    seen = []
    assert clock.advance(30.0, lambda n: seen.append((n, clock.now()))) == ["early", "late"]
    assert seen == [("early", 5.0), ("late", 20.0)]
    assert clock.now() == 30.0


def test_clock_cancel_and_reschedule():
    clock = VirtualClock()
    clock.schedule("t", 5.0)
    clock.schedule("t", 8.0)
    clock.schedule("u", 6.0)
    clock.cancel("u")
    assert clock.pending == [(8.0, "t")]
    assert clock.advance(10.0) == ["t"]
    with pytest.raises(ValueError):
        clock.advance(-1)
    with pytest.raises(ValueError):
        clock.schedule("x", 1.0)


def _sut(catalog, **cfg):
    clock = VirtualClock()
    broker = Broker(catalog, clock)
    return broker, SutHandle(broker, CpdsConfig(**cfg), clock).start()


def _to_s3(broker, sut):
    broker.set_current(IS_CHILD_DETECTED, True)
    broker.set_current(IGNITION, "OFF")
    sut.settle()
    assert sut.current == S3


def test_sut_idle_stays_in_standby(catalog):
    broker, sut = _sut(catalog)
    with sut:
        sut.advance_clock(3600)
        assert sut.current == S0
        assert broker.get_current(IS_ESCALATION_ACTIVE).value is False


def test_sut_t_ack_1_expiry(catalog):
    broker, sut = _sut(catalog)
    with sut:
        _to_s3(broker, sut)
        assert sut.advance_clock(CFG.t_ack_1) == [T_ACK_1]
        assert sut.current == S4


def test_sut_ack_before_t_ack_1(catalog):
    broker, sut = _sut(catalog)
    with sut:
        _to_s3(broker, sut)
        sut.advance_clock(60)
        broker.set_current(HAS_DRIVER_ACK, True)
        sut.settle()
        sut.advance_clock(3600)
        assert sut.current == S0
        assert S4 not in sut.visited and S5 not in sut.visited
        assert not any("hazard" in line for line in sut.log)


def test_sut_hvac_then_standby(catalog):
    broker, sut = _sut(catalog)
    with sut:
        broker.set_current(CABIN_TEMPERATURE, 18.0)
        _to_s3(broker, sut)
        sut.advance_clock(600)
        assert sut.current == S5
        assert broker.get_current(CABIN_TEMPERATURE).value == 22.0
        broker.set_current(HAS_DRIVER_ACK, True)
        sut.settle()
        assert sut.current == S0
        assert any("moving to standby" in line for line in sut.log)
        assert all(line.startswith("APPL:") for line in sut.log)
        assert broker.get_current(AUTO_OVERRIDE).value is False
        assert sut.visited == [S0, S1, S2, S3, S4, S5, S0]


def test_advance_requires_drained_queue(catalog):
    broker, sut = _sut(catalog)
    with sut:
        sut._events.put(SignalEvent(IGNITION, "ON"))
        try:
            with pytest.raises(SutError):
                sut.advance_clock(1)
        finally:
            sut.settle()


def test_run_sut_over_tcp(catalog):
    srv = serve(Broker(catalog, VirtualClock()), "127.0.0.1:0")
    try:
        sut = run_sut("%s:%d" % srv.address)
        with sut:
            sut.broker.set_current(IS_CHILD_DETECTED, True)
            sut.broker.set_current(IGNITION, "OFF")
            sut.settle()
            assert sut.current == S3
    finally:
        srv.shutdown()


def test_run_sut_unreachable():
    with pytest.raises(SutError):
        run_sut("127.0.0.1:9")
