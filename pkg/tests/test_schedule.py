import io

import numpy as np
import pytest

from smartsolve.sampling import substream
from smartsolve.schedule import (
    DelaySchedule,
    HistoryBuffer,
    ReplayLog,
    ReplayRecord,
    delayed_read,
    inconsistency,
)


def _rows(*states):
    """Rows of single-block states for readability."""
    return [(np.array([float(s)]),) for s in states]


def test_history_buffer_indexing_and_eviction():
    rows = _rows(0, 1, 2, 3)
    buf = HistoryBuffer(3, rows[0])
    for r in rows[1:]:
        buf.push(r)
    assert buf.latest() is rows[3]
    assert buf.read(2) is rows[2]
    assert buf.read(1) is rows[1]
    with pytest.raises(IndexError):
        buf.read(0)  # evicted
    with pytest.raises(IndexError):
        buf.read(4)  # not produced yet


def test_history_clamps_prehistory_to_initial():
    rows = _rows(0, 1)
    buf = HistoryBuffer(4, rows[0])
    buf.push(rows[1])
    assert buf.read(-3) is rows[0]


def test_delayed_read_zero_is_bit_identical():
    buf = HistoryBuffer(3, (np.array([1.0, 2.0]), np.array([3.0])))
    buf.push((np.array([4.0, 5.0]), np.array([6.0])))
    got = delayed_read(buf, 1, np.zeros(2, dtype=int))
    assert got[0] is buf.latest()[0] and got[1] is buf.latest()[1]


def test_delayed_read_mixed_ages_example():
    # states x^0=(0|0), x^1=(1|1), x^2=(2|2); delays (0, 2) at k=2 -> (2|0)
    buf = HistoryBuffer(3, (np.array([0.0]), np.array([0.0])))
    buf.push((np.array([1.0]), np.array([1.0])))
    buf.push((np.array([2.0]), np.array([2.0])))
    got = delayed_read(buf, 2, np.array([0, 2]))
    assert got[0][0] == 2.0 and got[1][0] == 0.0


def test_cyclic_mode_reaches_initial_state():
    tau_p = 3
    sched = DelaySchedule(tau_p=tau_p, tau_d=0, mode="cyclic", m=2, n=1)
    buf = HistoryBuffer(tau_p + 1, (np.array([0.0]), np.array([10.0])))
    for s in range(1, tau_p + 1):
        buf.push((np.array([float(s)]), np.array([10.0 + s])))
    d = sched.primal_delays(tau_p)
    np.testing.assert_array_equal(d, [tau_p, tau_p])
    got = delayed_read(buf, tau_p, d)
    assert got[0][0] == 0.0 and got[1][0] == 10.0


def test_delay_bounds_respected_by_all_modes():
    rng = substream(3, "delays")
    for mode in ("zero", "constant-max", "cyclic", "uniform-random"):
        sched = DelaySchedule(tau_p=5, tau_d=4, mode=mode, m=3, n=2,
                              rng=rng if mode == "uniform-random" else None)
        for k in range(50):
            d = sched.primal_delays(k)
            assert np.all((0 <= d) & (d <= 5))
            e = np.asarray(sched.dual_delays(k))
            assert np.all((0 <= e) & (e <= 4))


def test_delayed_read_rejects_over_capacity():
    buf = HistoryBuffer(2, (np.array([0.0]),))
    with pytest.raises(ValueError):
        delayed_read(buf, 0, np.array([2]))


def test_inconsistency_examples():
    assert inconsistency([np.array([2, 2, 2]), np.array([1, 1, 1])]) == 0
    assert inconsistency([np.array([0, 1, 3])]) == 3
    with pytest.raises(ValueError):
        inconsistency([])


def test_inconsistency_bounded_by_cap_under_uniform_random():
    sched = DelaySchedule(tau_p=5, tau_d=5, mode="uniform-random", m=4, n=1,
                          rng=substream(4, "delays"))
    ds = [sched.primal_delays(k) for k in range(1000)]
    assert inconsistency(ds) <= 5


def test_svrg_cycle_schedule():
    sched = DelaySchedule.svrg_cycle(tau=3, m=1, n=4)
    np.testing.assert_array_equal([sched.dual_delays(k) for k in range(9)],
                                  [0, 1, 2, 3, 0, 1, 2, 3, 0])
    assert not sched.primal_delays(7).any()


def test_replay_log_round_trip():
    log = ReplayLog(m=3, n=2, tau_p=4, tau_d=2)
    rng = np.random.default_rng(0)
    for k in range(57):
        blocks = tuple(sorted(rng.choice(3, size=rng.integers(0, 3), replace=False)))
        rec = ReplayRecord(
            blocks=tuple(int(b) for b in blocks),
            op_index=None if not blocks else int(rng.integers(0, 2)),
            eps=int(rng.integers(0, 2)),
            d=rng.integers(0, 5, size=3),
            e=int(rng.integers(0, 3)) if rng.random() < 0.5
            else rng.integers(0, 3, size=2),
        )
        log.append(rec)
    blob = log.dumps()
    back = ReplayLog.loads(blob)
    assert (back.m, back.n, back.tau_p, back.tau_d) == (3, 2, 4, 2)
    assert len(back) == len(log)
    for a, b in zip(log, back):
        assert a.blocks == b.blocks and a.op_index == b.op_index and a.eps == b.eps
        np.testing.assert_array_equal(a.d, b.d)
        np.testing.assert_array_equal(np.asarray(a.e), np.asarray(b.e))


def test_recorded_mode_replays_bit_identically():
    log = ReplayLog(m=2, n=1, tau_p=3, tau_d=3)
    rng = np.random.default_rng(1)
    for _ in range(20):
        log.append(ReplayRecord((0,), 0, 1, rng.integers(0, 4, size=2), int(rng.integers(0, 4))))
    sched = DelaySchedule(tau_p=3, tau_d=3, mode="recorded", m=2, n=1, log=log)
    for k in range(20):
        np.testing.assert_array_equal(sched.primal_delays(k), log.records[k].d)
        assert sched.dual_delays(k) == log.records[k].e


def test_bad_log_rejected():
    with pytest.raises(ValueError):
        ReplayLog.load(io.BytesIO(b"nope"))
    with pytest.raises(ValueError):
        DelaySchedule(tau_p=1, tau_d=1, mode="recorded", m=1, n=1)  # no log
    with pytest.raises(ValueError):
        DelaySchedule(tau_p=1, tau_d=1, mode="uniform-random", m=1, n=1)  # no rng
