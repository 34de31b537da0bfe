"""Branch tracking for the delay-coupled oscillator pair.

Reproduces the quasi-static protocols used to chart phase-locked
solutions of the coupled pair: bidirectional sweeps of the common delay
tau at fixed coupling strength K, detection of bistability intervals
where the two sweep directions disagree, a two-parameter (K, tau)
attractor map seeded from several initial phase offsets, and a global
delayed mean-field feedback variant.

Stability here is assessed by forward simulation: a branch is followed
by warm-starting each run from the previous attractor (plus a small
random perturbation that breaks the exactly invariant symmetric
subspaces), and unstable branches are inferred from the bistability
boundaries rather than computed directly.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _fast
from .brusselator import BrusselatorParams, EngineeredCoupling, LimitCycle
from .dde import (
    NonFiniteState,
    NoPeaks,
    NotLocked,
    SummaryStats,
    Trajectory,
    circular_distance,
    summarize,
)

__all__ = [
    "AttractorClass",
    "Direction",
    "BranchSummary",
    "BistabilityInterval",
    "BistabilityReport",
    "MapCell",
    "TwoParamMap",
    "GridMismatch",
    "classify_stats",
    "tau_sweep",
    "detect_bistability",
    "two_param_map",
    "mean_field_feedback_sim",
    "sweep_to_csv",
    "param_map_to_csv",
]

TWO_PI = 2.0 * math.pi


class GridMismatch(ValueError):
    """Forward and backward sweeps were taken on different grids."""


class AttractorClass(str, Enum):
    IN_PHASE = "in_phase"
    ANTI_PHASE = "anti_phase"
    OUT_OF_PHASE = "out_of_phase"
    NOT_LOCKED = "not_locked"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class BranchSummary:
    """One record of a parameter sweep."""

    parameter: float
    stats: SummaryStats | None
    attractor_class: AttractorClass
    direction: Direction


def classify_stats(stats: SummaryStats | None, tol=0.2):
    """Attractor class from the phase difference: within ``tol`` of 0
    (mod 2*pi) is in-phase, within ``tol`` of pi anti-phase, any other
    locked value out-of-phase."""
    if stats is None:
        return AttractorClass.NOT_LOCKED
    if circular_distance(stats.psi, 0.0) <= tol:
        return AttractorClass.IN_PHASE
    if circular_distance(stats.psi, math.pi) <= tol:
        return AttractorClass.ANTI_PHASE
    return AttractorClass.OUT_OF_PHASE


def _history_arrays(lc: LimitCycle, alpha, h, span):
    """Initial history on the step grid: oscillator 1 on the cycle,
    oscillator 2 retarded in phase by ``alpha``.

    Returns (states, derivs) of shape (n+1, 4) covering [-span, 0], with
    derivatives taken exactly from the Fourier reconstruction.
    """
    n = int(math.ceil(span / h)) + 2
    ts = np.arange(-n, 1) * h
    om = lc.omega
    nf = lc.n_fourier
    orders = np.arange(-nf, nf + 1)
    states = np.empty((n + 1, 4))
    derivs = np.empty((n + 1, 4))
    for comp in range(2):
        for osc, shift in ((0, 0.0), (1, alpha)):
            coeffs = lc.fourier[comp] * np.exp(-1j * orders * shift)
            basis = np.exp(1j * np.multiply.outer(om * ts, orders))
            col = 2 * osc + comp
            states[:, col] = np.real(basis @ coeffs)
            derivs[:, col] = np.real(basis @ (1j * orders * om * coeffs))
    return states, derivs


def _run_pair(p, coupling, K, tau, h, n_steps, rec_from, hist_states, hist_derivs):
    """Allocate node buffers, run the compiled pair kernel, and return
    (record, tail_states, tail_derivs) where the tails are reusable as
    the next warm-start history."""
    t0_idx = hist_states.shape[0] - 1
    ntot = t0_idx + 1 + n_steps
    Y = np.empty((ntot, 4))
    Fv = np.empty((ntot, 4))
    Y[: t0_idx + 1] = hist_states
    Fv[: t0_idx + 1] = hist_derivs
    rec, ok = _fast.integrate_coupled_pair(
        p.A, p.B, K, coupling.k1, coupling.tau1, coupling.k2, coupling.tau2,
        tau, h, n_steps, Y, Fv, t0_idx, rec_from,
    )
    if not ok:
        raise NonFiniteState(rec_from * h)
    keep = t0_idx + 1
    return rec, Y[-keep:].copy(), Fv[-keep:].copy()


def _max_lag(coupling, tau_values):
    return max(tau_values) + max(coupling.tau1, coupling.tau2)


def _check_step(coupling, tau_values, h):
    min_lag = min(tau_values) + min(coupling.tau1, coupling.tau2)
    if min_lag > 0 and h > min_lag / 4 + 1e-12:
        raise ValueError(
            f"step {h:.4g} exceeds min positive lag / 4 = {min_lag / 4:.4g}"
        )


def _summarize_record(rec, h, settle_steps):
    """SummaryStats of the recorded tail (already past the transient)."""
    times = np.arange(rec.shape[0]) * h + settle_steps * h
    traj = Trajectory(times=times, states=rec, dt=h)
    return summarize(traj, 0, 2, window=1.0)


def tau_sweep(p: BrusselatorParams, lc: LimitCycle, coupling: EngineeredCoupling,
              K, tau_grid, direction=Direction.FORWARD, settle_periods=100,
              measure_periods=30, warm_start=True, ic_alpha=None,
              perturbation_scale=1e-3, rng_seed=0, step=None, class_tol=0.2):
    """Quasi-static sweep of the common delay at fixed coupling strength.

    ``tau_grid`` must be ascending; a backward sweep visits it in
    reverse.  Each point runs for settle_periods + measure_periods
    cycle periods; the tail is summarized and classified.  With
    ``warm_start`` the next point continues from the final history of
    the previous one, with a small uniform perturbation added to the
    second oscillator's x history (symmetric states are exactly
    invariant without it); the first point (and every point, if
    ``warm_start`` is false) starts cold from a phase-shifted cycle
    history with offset ``ic_alpha`` (default: 0 forward, pi backward).

    Unlocked tails are reported as NOT_LOCKED records, not failures;
    a non-finite state raises NonFiniteState.  Requires settle_periods
    >= 20.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if len(tau_grid) == 0:
        raise ValueError("tau_grid is empty")
    if len(tau_grid) > 1 and not np.all(np.diff(tau_grid) > 0):
        raise ValueError("tau_grid must be strictly ascending")
    if settle_periods < 20:
        raise ValueError("settle_periods must be at least 20")
    direction = Direction(direction)
    T = lc.period
    h = T / 2000.0 if step is None else float(step)
    _check_step(coupling, tau_grid, h)
    if ic_alpha is None:
        ic_alpha = 0.0 if direction == Direction.FORWARD else math.pi
    order = tau_grid if direction == Direction.FORWARD else tau_grid[::-1]
    span = _max_lag(coupling, tau_grid) + 2 * h
    n_steps = int(round((settle_periods + measure_periods) * T / h))
    rec_from = n_steps - int(round(measure_periods * T / h))
    rng = np.random.default_rng(rng_seed)
    cold = _history_arrays(lc, ic_alpha, h, span)
    hist = cold
    out = []
    for i, tau in enumerate(order):
        if i > 0:
            if warm_start:
                states, derivs = hist
                states = states.copy()
                states[:, 2] += rng.uniform(-perturbation_scale, perturbation_scale)
                use = (states, derivs)
            else:
                use = cold
        else:
            use = hist
        rec, tail_s, tail_d = _run_pair(
            p, coupling, float(K), float(tau), h, n_steps, rec_from, use[0], use[1]
        )
        hist = (tail_s, tail_d)
        try:
            stats = _summarize_record(rec, h, rec_from)
        except (NoPeaks, NotLocked):
            stats = None
        out.append(
            BranchSummary(
                parameter=float(tau),
                stats=stats,
                attractor_class=classify_stats(stats, tol=class_tol),
                direction=direction,
            )
        )
    return out


@dataclass(frozen=True)
class BistabilityInterval:
    tau_lo: float
    tau_hi: float
    cells: tuple  # (tau, psi_forward, psi_backward) per flagged grid point


@dataclass(frozen=True)
class BistabilityReport:
    intervals: tuple
    threshold: float

    @property
    def is_empty(self):
        return len(self.intervals) == 0

    def to_json(self):
        return json.dumps(
            {
                "threshold": self.threshold,
                "intervals": [
                    {
                        "tau_lo": iv.tau_lo,
                        "tau_hi": iv.tau_hi,
                        "cells": [list(c) for c in iv.cells],
                    }
                    for iv in self.intervals
                ],
            }
        )


def detect_bistability(forward, backward, threshold=0.5):
    """Mark grid cells where the two sweep directions disagree.

    ``forward`` and ``backward`` are BranchSummary lists over the same
    tau grid (the backward list in descending order, as produced by
    tau_sweep).  Cells whose circular phase-difference distance exceeds
    ``threshold`` are flagged and merged into maximal contiguous
    intervals.  Cells where either direction is unlocked are skipped
    (no phase difference to compare).  Raises GridMismatch when the two
    grids differ.
    """
    fwd = sorted(forward, key=lambda b: b.parameter)
    bwd = sorted(backward, key=lambda b: b.parameter)
    if len(fwd) != len(bwd) or any(
        abs(a.parameter - b.parameter) > 1e-9 for a, b in zip(fwd, bwd)
    ):
        raise GridMismatch("forward and backward sweeps use different grids")
    flagged = []
    for a, b in zip(fwd, bwd):
        if a.stats is None or b.stats is None:
            flagged.append(None)
            continue
        d = circular_distance(a.stats.psi, b.stats.psi)
        flagged.append((a.parameter, a.stats.psi, b.stats.psi) if d > threshold else None)
    intervals = []
    run = []
    for cell in flagged + [None]:
        if cell is not None:
            run.append(cell)
        elif run:
            intervals.append(
                BistabilityInterval(
                    tau_lo=run[0][0], tau_hi=run[-1][0], cells=tuple(run)
                )
            )
            run = []
    return BistabilityReport(intervals=tuple(intervals), threshold=float(threshold))


@dataclass(frozen=True)
class MapCell:
    """One (K, tau) cell of the two-parameter map."""

    K: float
    tau: float
    classes: tuple          # AttractorClass per initial condition
    psis: tuple             # psi per initial condition (nan if unlocked)
    bistable: bool
    dA_relative: float      # of the out-of-phase attractor, nan if none
    failed: bool            # a run blew up (non-finite state)


@dataclass(frozen=True)
class TwoParamMap:
    K_grid: np.ndarray
    tau_grid: np.ndarray
    ic_alphas: tuple
    cells: tuple            # rows indexed by K, columns by tau

    def cell(self, i, j):
        return self.cells[i][j]

    def row_has_out_of_phase(self, i):
        return any(
            AttractorClass.OUT_OF_PHASE in c.classes for c in self.cells[i]
        )


def _map_row(args):
    (p, lc, coupling, K, tau_grid, ic_alphas, settle_periods, measure_periods,
     h, class_tol) = args
    T = lc.period
    n_steps = int(round((settle_periods + measure_periods) * T / h))
    rec_from = n_steps - int(round(measure_periods * T / h))
    span = _max_lag(coupling, tau_grid) + 2 * h
    histories = {alpha: _history_arrays(lc, alpha, h, span) for alpha in ic_alphas}
    row = []
    for tau in tau_grid:
        classes = []
        psis = []
        dA = math.nan
        failed = False
        for alpha in ic_alphas:
            states, derivs = histories[alpha]
            try:
                rec, _, _ = _run_pair(
                    p, coupling, float(K), float(tau), h, n_steps, rec_from,
                    states.copy(), derivs,
                )
                stats = _summarize_record(rec, h, rec_from)
            except NonFiniteState:
                failed = True
                classes.append(AttractorClass.NOT_LOCKED)
                psis.append(math.nan)
                continue
            except (NoPeaks, NotLocked):
                classes.append(AttractorClass.NOT_LOCKED)
                psis.append(math.nan)
                continue
            cls = classify_stats(stats, tol=class_tol)
            classes.append(cls)
            psis.append(stats.psi)
            if cls == AttractorClass.OUT_OF_PHASE and math.isnan(dA):
                dA = stats.dA_relative
        locked = {c for c in classes if c != AttractorClass.NOT_LOCKED}
        row.append(
            MapCell(
                K=float(K),
                tau=float(tau),
                classes=tuple(classes),
                psis=tuple(psis),
                bistable=len(locked) > 1,
                dA_relative=dA,
                failed=failed,
            )
        )
    return row


def two_param_map(p: BrusselatorParams, lc: LimitCycle, coupling: EngineeredCoupling,
                  K_grid, tau_grid, ic_alphas=(0.0, math.pi, math.pi / 3, 2 * math.pi / 3),
                  settle_periods=80, measure_periods=30, step=None, jobs=1,
                  class_tol=0.2):
    """Attractor map over a (K, tau) grid from a set of cold starts.

    Every cell is simulated once per entry of ``ic_alphas`` (phase
    offsets of the initial cycle histories); the attractor reached from
    each is classified, cells reached from distinct initial conditions
    with distinct locked classes are marked bistable, and the relative
    amplitude asymmetry of any out-of-phase attractor is recorded.  Rows
    (fixed K) are independent and are distributed over ``jobs``
    processes; results are merged by row index, so the output does not
    depend on ``jobs``.
    """
    K_grid = np.asarray(K_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if K_grid.size == 0 or tau_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if K_grid[0] <= 0:
        raise ValueError("K_grid must start at a positive value")
    T = lc.period
    h = T / 2000.0 if step is None else float(step)
    _check_step(coupling, tau_grid, h)
    tasks = [
        (p, lc, coupling, float(K), tau_grid, tuple(ic_alphas), settle_periods,
         measure_periods, h, class_tol)
        for K in K_grid
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_map_row, tasks))
    else:
        rows = [_map_row(t) for t in tasks]
    return TwoParamMap(
        K_grid=K_grid,
        tau_grid=tau_grid,
        ic_alphas=tuple(ic_alphas),
        cells=tuple(tuple(r) for r in rows),
    )


def mean_field_feedback_sim(p: BrusselatorParams, lc: LimitCycle, K, tau, t_end,
                            window_periods=10, ic_alpha=0.0, step=None,
                            record_last=None):
    """Pair under global delayed mean-field feedback on the x equations.

    The feedback K * (x1(t - tau) + x2(t - tau) - m) is applied to both
    oscillators, with m the running mean of x1 + x2 over a trailing
    window of ``window_periods`` cycle periods.  Initial histories are
    cycle states with oscillator 2 retarded by ``ic_alpha``; the
    window's mean starts at the cycle average.  Requires t_end >= 50
    periods.  Returns a 5-component Trajectory (x1, y1, x2, y2, m).
    """
    T = lc.period
    if t_end < 50 * T:
        raise ValueError("t_end must cover at least 50 periods")
    h = T / 2000.0 if step is None else float(step)
    win = window_periods * T
    lags = [l for l in (float(tau), win) if l > 0]
    if lags and h > min(lags) / 4:
        raise ValueError("step exceeds min positive lag / 4")
    span = max(float(tau), win) + 2 * h
    states4, derivs4 = _history_arrays(lc, ic_alpha, h, span)
    n_hist = states4.shape[0]
    m0 = 2.0 * float(lc.fourier[0][lc.n_fourier].real)  # window mean of x1 + x2
    states = np.column_stack([states4, np.full(n_hist, m0)])
    derivs = np.column_stack([derivs4, np.zeros(n_hist)])
    n_steps = int(round(t_end / h))
    rec_from = 0 if record_last is None else n_steps - int(round(record_last / h))
    t0_idx = n_hist - 1
    ntot = t0_idx + 1 + n_steps
    Y = np.empty((ntot, 5))
    Fv = np.empty((ntot, 5))
    Y[: t0_idx + 1] = states
    Fv[: t0_idx + 1] = derivs
    rec, ok = _fast.integrate_mean_field_pair(
        p.A, p.B, float(K), float(tau), win, h, n_steps, Y, Fv, t0_idx, rec_from
    )
    if not ok:
        raise NonFiniteState(t_end)
    times = (np.arange(rec.shape[0]) + rec_from) * h
    return Trajectory(times=times, states=rec, dt=h)


def sweep_to_csv(path, summaries, period_ref):
    """CSV rows (tau_over_T, psi, period, dA_signed, dA_relative, class,
    direction); unlocked rows carry nan statistics."""
    with open(path, "w") as fh:
        fh.write("tau_over_T,psi,period,dA_signed,dA_relative,class,direction\n")
        for b in summaries:
            if b.stats is None:
                vals = [math.nan] * 4
            else:
                vals = [b.stats.psi, b.stats.period, b.stats.dA_signed,
                        b.stats.dA_relative]
            fh.write(
                ",".join(
                    [repr(b.parameter / period_ref)]
                    + [repr(float(v)) for v in vals]
                    + [b.attractor_class.value, b.direction.value]
                )
                + "\n"
            )


def param_map_to_csv(path, pmap: TwoParamMap, period_ref):
    """CSV rows (K, tau_over_T, class_per_ic, bistable, dA_relative, failed)."""
    with open(path, "w") as fh:
        fh.write("K,tau_over_T,classes,bistable,dA_relative,failed\n")
        for row in pmap.cells:
            for cell in row:
                classes = ";".join(c.value for c in cell.classes)
                fh.write(
                    f"{cell.K!r},{cell.tau / period_ref!r},{classes},"
                    f"{int(cell.bistable)},{cell.dA_relative!r},{int(cell.failed)}\n"
                )
