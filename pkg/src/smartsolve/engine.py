"""The core iteration: sampled, delayed primal updates with a triggered dual table.

One iteration does three things.  A joint sample picks the active blocks,
one operator, and the dual-update coin.  The primal update changes only the
sampled blocks, combining a fresh (but possibly delayed-input) evaluation of
the sampled operator with stored dual values:

    x_j <- x_j - lam/(q_j m) * [ (S_i(x_read))_j / (n p_ij)
                                 - y_ij_read / (n p_ij)
                                 + (1/n) sum_i' y_i'j_read ]

where ``x_read`` mixes block ages according to the primal delay vector and
the dual reads come from a table that is ``e`` iterations old.  Finally, if
the coin came up, every dual variable triggered by the sampled operator
refreshes its sampled-block entries to the fresh evaluation at ``x_read``.

The engine is strictly single-threaded; all asynchrony is simulated through
the delay schedule.  Runs record their draws and delays, and a recorded run
replays bit-identically, which is the audit path for the threaded executor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blockspace import BlockVector, norm_sq
from .operators import OperatorFamily, aggregate
from .sampling import SamplingLaw, TriggerGraph, draw
from .schedule import DelaySchedule, HistoryBuffer, ReplayLog, ReplayRecord, delayed_read

__all__ = [
    "StepSizes",
    "DualTable",
    "DualSnapshot",
    "SmartState",
    "init_state",
    "step",
    "run",
    "RunResult",
    "Trace",
]

# exact-recompute cadence for the maintained dual block sums
RESUM_EVERY = 1000
RESUM_DRIFT_TOL = 1e-9


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepSizes:
    """Constant step or a bounded per-iteration rule ``lam_k in [lo, hi]``."""

    lo: float
    hi: float
    rule: callable = None

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValueError("need 0 < lo <= hi")

    @classmethod
    def constant(cls, lam: float) -> "StepSizes":
        return cls(lam, lam)

    def value(self, k: int) -> float:
        if self.rule is None:
            return self.lo
        lam = float(self.rule(k))
        if not self.lo <= lam <= self.hi:
            raise EngineError(f"step rule left its band at k={k}: {lam}")
        return lam


@dataclass(frozen=True)
class DualSnapshot:
    """Immutable view of the dual table: entries plus per-block column sums."""

    entries: tuple          # n tuples of m arrays
    colsums: tuple          # m arrays

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.entries[i][j]


class DualTable:
    """n x m table of stored operator blocks with an incrementally kept sum.

    Entries masked off by the zero pattern stay exactly zero forever (they
    are never written).  Each commit produces a fresh snapshot sharing the
    untouched rows, so histories hold cheap references.  Every
    ``RESUM_EVERY`` commits the column sums are recomputed exactly and
    checked against the maintained ones.
    """

    def __init__(self, family: OperatorFamily, x0: BlockVector, init: str = "operator-values"):
        n, m, dims = family.n, family.m, family.layout.dims
        self.mask = family.star_pattern
        rows = []
        for i in range(n):
            if init == "operator-values":
                val = family.ops[i](x0)
                row = tuple(
                    val.blocks[j] if self.mask[i, j] else np.zeros(dims[j])
                    for j in range(m)
                )
            elif init == "zero":
                row = tuple(np.zeros(dims[j]) for j in range(m))
            else:
                raise ValueError(f"unknown dual init {init!r}")
            rows.append(row)
        colsums = tuple(
            np.sum([rows[i][j] for i in range(n)], axis=0) for j in range(m)
        )
        self.current = DualSnapshot(tuple(rows), colsums)
        self.commits = 0

    def commit(self, updates) -> DualSnapshot:
        """Apply ``(i, j, value)`` writes and return the new snapshot."""
        if not updates:
            return self.current
        entries = list(self.current.entries)
        colsums = list(self.current.colsums)
        touched_rows = {}
        for i, j, val in updates:
            if not self.mask[i, j]:
                raise EngineError(f"write to masked dual entry ({i}, {j})")
            row = touched_rows.get(i)
            if row is None:
                row = list(entries[i])
                touched_rows[i] = row
            colsums[j] = colsums[j] - row[j] + val
            row[j] = val
        for i, row in touched_rows.items():
            entries[i] = tuple(row)
        self.commits += 1
        if self.commits % RESUM_EVERY == 0:
            exact = [
                np.sum([entries[i][j] for i in range(len(entries))], axis=0)
                for j in range(len(colsums))
            ]
            drift = max(
                float(np.max(np.abs(a - b))) if a.size else 0.0
                for a, b in zip(exact, colsums)
            )
            if drift > RESUM_DRIFT_TOL:
                raise EngineError(f"dual sum drift {drift:.3e} exceeds tolerance")
            colsums = exact
        snap = DualSnapshot(tuple(entries), tuple(colsums))
        self.current = snap
        return snap


@dataclass
class SmartState:
    """Mutable run state: iterate histories, dual table, counter, rng."""

    family: OperatorFamily
    primal_hist: HistoryBuffer
    dual_hist: HistoryBuffer
    dual_table: DualTable
    k: int = 0
    rng: np.random.Generator = None

    @property
    def x(self) -> BlockVector:
        return BlockVector(self.family.layout, tuple(self.primal_hist.latest()))


def init_state(
    family: OperatorFamily,
    x0: BlockVector,
    tau_p: int = 0,
    tau_d: int = 0,
    rng: np.random.Generator | None = None,
    dual_init: str = "operator-values",
) -> SmartState:
    if x0.layout.dims != family.layout.dims:
        raise EngineError("initial point has the wrong layout")
    table = DualTable(family, x0, init=dual_init)
    primal = HistoryBuffer(tau_p + 1, tuple(x0.blocks))
    dual = HistoryBuffer(tau_d + 1, table.current)
    return SmartState(family, primal, dual, table, k=0, rng=rng)


def _primal_block_update(x_j, lam_over_qm, a, sblk, y_ik_j, ysum_j, n):
    # shared by the deterministic engine and the threaded executor; replay
    # fidelity depends on both paths running this exact expression
    return x_j - lam_over_qm * (a * sblk - a * y_ik_j + ysum_j / n)


def _resolve_dual_reads(state: SmartState, k: int, e, i_k: int, blocks):
    """Values of ``y[i_k, j]`` and ``sum_i y[i, j]`` at the delayed table age.

    ``e`` may be a scalar (one age for the whole table), an (n,) vector
    (consistent per-operator ages) or an (n, m) array.
    """
    n = state.family.n
    if np.isscalar(e) or np.ndim(e) == 0:
        snap = state.dual_hist.read(k - int(e))
        return {j: snap.entry(i_k, j) for j in blocks}, {
            j: snap.colsums[j] for j in blocks
        }
    e = np.asarray(e)
    snaps = {}

    def snap_at(t):
        if t not in snaps:
            snaps[t] = state.dual_hist.read(t)
        return snaps[t]

    y_ik, ysum = {}, {}
    for j in blocks:
        if e.ndim == 1:
            y_ik[j] = snap_at(k - int(e[i_k])).entry(i_k, j)
            total = snap_at(k - int(e[0])).entry(0, j)
            for i in range(1, n):
                total = total + snap_at(k - int(e[i])).entry(i, j)
        else:
            y_ik[j] = snap_at(k - int(e[i_k, j])).entry(i_k, j)
            total = snap_at(k - int(e[0, j])).entry(0, j)
            for i in range(1, n):
                total = total + snap_at(k - int(e[i, j])).entry(i, j)
        ysum[j] = total
    return y_ik, ysum


def step(
    state: SmartState,
    law: SamplingLaw,
    graph: TriggerGraph,
    sched: DelaySchedule,
    steps: StepSizes,
    forced_draw=None,
    forced_delays=None,
) -> ReplayRecord:
    """Advance one iteration in place and return its replay record."""
    family = state.family
    k = state.k
    if forced_draw is not None:
        blocks, i_k, eps = forced_draw
    else:
        blocks, i_k, eps = draw(law, state.rng)
    if forced_delays is not None:
        d, e = forced_delays
    else:
        d, e = sched.primal_delays(k), sched.dual_delays(k)

    lam = steps.value(k)
    cur = state.primal_hist.latest()

    if blocks:
        x_read_blocks = delayed_read(state.primal_hist, k, d)
        x_read = BlockVector(family.layout, x_read_blocks)
        y_ik, ysum = _resolve_dual_reads(state, k, e, i_k, blocks)

        evals = {}

        def s_block(i, j):
            if (i, j) not in evals:
                evals[(i, j)] = family.ops[i].block(x_read, j)
            return evals[(i, j)]

        n, m = family.n, family.m
        new_row = list(cur)
        for j in blocks:
            p_ij = law.p[i_k, j]
            if p_ij <= 0.0:
                raise EngineError(
                    f"drawn operator {i_k} has zero conditional mass in block {j}"
                )
            a = 1.0 / (n * p_ij)
            lam_over_qm = lam / (law.q[j] * m)
            new_row[j] = _primal_block_update(
                cur[j], lam_over_qm, a, s_block(i_k, j), y_ik[j], ysum[j], n
            )
        state.primal_hist.push(tuple(new_row))

        if eps:
            updates = []
            for i in graph.triggered_by(i_k):
                for j in blocks:
                    if family.star_pattern[i, j]:
                        updates.append((i, j, s_block(i, j)))
            snap = state.dual_table.commit(updates)
            state.dual_hist.push(snap)
        else:
            state.dual_hist.push(state.dual_table.current)
    else:
        # legal empty draw: the iteration counts but nothing moves
        state.primal_hist.push(cur)
        state.dual_hist.push(state.dual_table.current)
        d = np.zeros(family.m, dtype=np.int64)
        e = 0

    state.k = k + 1
    return ReplayRecord(
        blocks=blocks,
        op_index=i_k,
        eps=int(eps),
        d=np.asarray(d, dtype=np.int64),
        e=e,
    )


@dataclass
class Trace:
    """Thinned per-run measurements, one row per recorded iteration."""

    iters: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    dist_sq: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    op_index: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    delay_max: list = field(default_factory=list)

    def append(self, k, res, dsq, lam, i_k, eps, dmax):
        self.iters.append(k)
        self.residual.append(res)
        self.dist_sq.append(dsq)
        self.lam.append(lam)
        self.op_index.append(i_k)
        self.eps.append(eps)
        self.delay_max.append(dmax)

    def to_csv(self, fh):
        fh.write("iter,residual,dist_sq,lambda,i_k,eps_k,delay_max\n")
        for row in zip(
            self.iters, self.residual, self.dist_sq, self.lam,
            self.op_index, self.eps, self.delay_max,
        ):
            k, res, dsq, lam, i_k, eps, dmax = row
            dsq_s = "" if dsq is None else repr(dsq)
            i_s = "" if i_k is None else str(i_k)
            fh.write(f"{k},{res!r},{dsq_s},{lam!r},{i_s},{eps},{dmax}\n")


@dataclass
class RunResult:
    x: BlockVector
    trace: Trace
    log: ReplayLog
    iterations: int
    final_residual: float
    stopped_on: str
    state: SmartState = field(repr=False, default=None)


def _residual(family: OperatorFamily, x: BlockVector) -> float:
    return float(np.sqrt(norm_sq(family.metric, aggregate(family, x))))


def run(
    x0: BlockVector,
    family: OperatorFamily,
    law: SamplingLaw,
    graph: TriggerGraph,
    sched: DelaySchedule,
    steps: StepSizes,
    max_iters: int,
    stop_resid: float | None = None,
    rng: np.random.Generator | None = None,
    oracle=None,
    trace_stride: int = 50,
    dual_init: str = "operator-values",
    replay: ReplayLog | None = None,
) -> RunResult:
    """Iterate until the budget or the residual target is hit.

    ``oracle``, when given, must expose ``dist_sq(x)``; its values land in
    the trace.  ``replay`` substitutes recorded draws and delays for fresh
    ones, reproducing a recorded run exactly.  The returned log replays the
    run that was just performed.
    """
    if replay is not None:
        max_iters = min(max_iters, len(replay))
    state = init_state(
        family, x0, tau_p=sched.tau_p, tau_d=sched.tau_d, rng=rng, dual_init=dual_init
    )
    log = ReplayLog(family.m, family.n, sched.tau_p, sched.tau_d)
    trace = Trace()
    stopped_on = "max-iterations"

    def observe(k, rec: ReplayRecord | None):
        res = _residual(family, state.x)
        dsq = None if oracle is None else float(oracle.dist_sq(state.x))
        lam = steps.value(max(k - 1, 0))
        i_k = None if rec is None else rec.op_index
        eps = 0 if rec is None else rec.eps
        dmax = 0 if rec is None else rec.max_delay()
        trace.append(k, res, dsq, lam, i_k, eps, dmax)
        return res

    observe(0, None)
    last = None
    for k in range(max_iters):
        if replay is not None:
            r = replay.records[k]
            last = step(
                state, law, graph, sched, steps,
                forced_draw=(r.blocks, r.op_index, r.eps),
                forced_delays=(r.d, r.e),
            )
        else:
            last = step(state, law, graph, sched, steps)
        log.append(last)
        if (k + 1) % trace_stride == 0 or k + 1 == max_iters:
            res = observe(k + 1, last)
            if stop_resid is not None and res <= stop_resid:
                stopped_on = "residual"
                break

    final_res = trace.residual[-1]
    return RunResult(
        x=state.x,
        trace=trace,
        log=log,
        iterations=state.k,
        final_residual=final_res,
        stopped_on=stopped_on,
        state=state,
    )
