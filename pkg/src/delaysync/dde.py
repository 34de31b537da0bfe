"""Constant-delay DDE integration by the method of steps, plus trajectory
post-processing: peak detection and locked-state summary statistics.

The integrator is fixed-step RK4; delayed states are read from a history
buffer of (time, state, derivative) nodes with cubic Hermite
interpolation.  Initial histories are supplied as callables on
[-max_lag, 0] and sampled once onto the step grid; a finished
integration hands back its buffer so a follow-up run can warm-start
from the final state (useful for quasi-static parameter sweeps).

This module is the plain-Python reference engine.  The specialized
compiled kernels in ``_fast`` used by the branch tracker are validated
against it in the test suite.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DelaySystem",
    "HistoryBuffer",
    "Trajectory",
    "SummaryStats",
    "NonFiniteState",
    "StepTooLarge",
    "NoPeaks",
    "NotLocked",
    "integrate_dde",
    "detect_peaks",
    "summarize",
    "circular_distance",
]


class NonFiniteState(RuntimeError):
    """A state component became non-finite; carries the failure time."""

    def __init__(self, t):
        super().__init__(f"state became non-finite at t = {t:.6g}")
        self.t = t


class StepTooLarge(ValueError):
    """Step exceeds min(positive lags)/4, invalidating the method of steps."""


class NoPeaks(ValueError):
    """The requested component has no interior local extrema."""


class NotLocked(RuntimeError):
    """Peak offsets scatter too widely for a phase difference to be defined."""


@dataclass(frozen=True)
class DelaySystem:
    """A constant-delay system dx/dt = rhs(t, x(t), [x(t - lag) per lag]).

    ``rhs`` receives the time, the current state vector, and a list of
    delayed state vectors, one per entry of ``lags`` (in order), and must
    return the state derivative.  Lags must be sorted, distinct, and
    nonnegative; a zero lag is served the current state.
    """

    dim: int
    lags: tuple
    rhs: object

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        lags = tuple(float(l) for l in self.lags)
        if any(l < 0 for l in lags):
            raise ValueError("lags must be nonnegative")
        if list(lags) != sorted(set(lags)):
            raise ValueError("lags must be sorted and distinct")
        object.__setattr__(self, "lags", lags)

    @property
    def max_lag(self):
        return max(self.lags) if self.lags else 0.0

    @property
    def min_positive_lag(self):
        pos = [l for l in self.lags if l > 0]
        return min(pos) if pos else 0.0


class HistoryBuffer:
    """Time-ordered (t, state, derivative) nodes with cubic Hermite reads.

    Nodes are uniformly spaced at the integration step.  The buffer spans
    at least ``keep_span`` into the past from its newest node; older
    nodes are dropped in batches.  Interpolation order marker: 3.
    """

    order = 3

    def __init__(self, times, states, derivs, keep_span):
        self.times = list(times)
        self.states = [np.asarray(s, dtype=float) for s in states]
        self.derivs = [np.asarray(d, dtype=float) for d in derivs]
        self.keep_span = float(keep_span)
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ValueError("buffer times must be strictly increasing")

    @property
    def t_last(self):
        return self.times[-1]

    @property
    def span(self):
        return self.times[-1] - self.times[0]

    def append(self, t, state, deriv):
        self.times.append(t)
        self.states.append(state)
        self.derivs.append(deriv)
        # drop old nodes occasionally, preserving keep_span plus slack
        if len(self.times) % 4096 == 0:
            cutoff = self.t_last - self.keep_span
            k = bisect_right(self.times, cutoff) - 1
            if k > 0:
                del self.times[:k]
                del self.states[:k]
                del self.derivs[:k]

    def interpolate(self, t):
        """Hermite-interpolated state at time t (clamped to the span)."""
        ts = self.times
        if t <= ts[0]:
            return self.states[0]
        if t >= ts[-1]:
            return self.states[-1]
        j = bisect_right(ts, t) - 1
        hj = ts[j + 1] - ts[j]
        u = (t - ts[j]) / hj
        u2 = u * u
        u3 = u2 * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        return (
            h00 * self.states[j]
            + h10 * hj * self.derivs[j]
            + h01 * self.states[j + 1]
            + h11 * hj * self.derivs[j + 1]
        )


@dataclass
class Trajectory:
    """Uniformly sampled trajectory over the recorded window."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    final_history: HistoryBuffer | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("sample interval must be positive")
        if len(self.times) != len(self.states):
            raise ValueError("times/states length mismatch")

    def component(self, i):
        return self.states[:, i]

    def to_csv(self, path, downsample=1, header=None):
        """Write (t, components...) rows; floats use shortest round-trip repr."""
        n_comp = self.states.shape[1]
        if header is None:
            header = "t," + ",".join(f"x{i}" for i in range(n_comp))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for k in range(0, len(self.times), downsample):
                row = [repr(float(self.times[k]))]
                row += [repr(float(v)) for v in self.states[k]]
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class SummaryStats:
    """Locked-state summary: phase difference, period, amplitude asymmetry."""

    psi: float            # radians in [0, 2*pi)
    period: float         # mean peak spacing of the reference component
    dA_signed: float      # A_2 - A_1 (peak-to-peak)
    dA_relative: float    # |A_1 - A_2| / min(A_1, A_2)

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.dA_relative < 0:
            raise ValueError("relative asymmetry must be nonnegative")

    def to_json(self):
        return json.dumps(
            {
                "psi": self.psi,
                "period": self.period,
                "dA_signed": self.dA_signed,
                "dA_relative": self.dA_relative,
            }
        )


def _sample_history(history, t0, max_lag, step):
    """Sample a callable history onto the step grid ending at t0.

    Derivatives are estimated with a Richardson-extrapolated centered
    difference (one-sided at the final node, which owns the history's
    left-derivative); the grid extends one extra node into the past so
    lag lookups at exactly t0 - max_lag stay interior.
    """
    n = int(math.ceil(max_lag / step - 1e-12)) + 1 if max_lag > 0 else 1
    times = [t0 - (n - k) * step for k in range(n + 1)]
    states = [np.asarray(history(t), dtype=float) for t in times]
    eps = step / 16.0

    def h_at(t):
        return np.asarray(history(t), dtype=float)

    derivs = []
    for k, t in enumerate(times):
        if k == n:
            # one-sided 4th-order stencil into the past
            d = (
                25.0 * states[k]
                - 48.0 * h_at(t - eps)
                + 36.0 * h_at(t - 2 * eps)
                - 16.0 * h_at(t - 3 * eps)
                + 3.0 * h_at(t - 4 * eps)
            ) / (12.0 * eps)
        else:
            d = (
                8.0 * (h_at(t + eps) - h_at(t - eps))
                - (h_at(t + 2 * eps) - h_at(t - 2 * eps))
            ) / (12.0 * eps)
        derivs.append(d)
    return times, states, derivs


def integrate_dde(sys: DelaySystem, init_history, t_end, step,
                  record_last=None, keep_history_span=None):
    """Integrate a constant-delay system with fixed-step RK4.

    Parameters
    ----------
    sys : DelaySystem
    init_history : callable or HistoryBuffer
        Callable t -> state on [-max_lag, 0] (cold start, integration
        begins at t = 0), or a buffer returned by a previous run (warm
        start, integration resumes at its final time).
    t_end : float
        Final time; must exceed the start time.  Rounded to a whole
        number of steps.
    step : float
        Integration step.  For positive lags must satisfy
        step <= min(positive lags)/4 so that stage lookups never run
        ahead of completed nodes.
    record_last : float, optional
        If given, only the final window of this duration is recorded in
        the returned trajectory (the buffer still advances normally).
    keep_history_span : float, optional
        Span of past nodes to retain (default max_lag plus ten steps).
        Pass a larger span when the buffer will warm-start a follow-up
        run with longer lags.

    Returns a Trajectory whose ``final_history`` field carries the
    buffer for warm restarts.  Raises NonFiniteState on blow-up and
    StepTooLarge if the step precondition is violated.
    """
    step = float(step)
    if step <= 0:
        raise ValueError("step must be positive")
    min_lag = sys.min_positive_lag
    if min_lag > 0 and step > min_lag / 4 + 1e-12:
        raise StepTooLarge(
            f"step {step:.6g} exceeds min positive lag / 4 = {min_lag / 4:.6g}"
        )
    if keep_history_span is None:
        keep_history_span = sys.max_lag + 10 * step

    if isinstance(init_history, HistoryBuffer):
        buf = init_history
        buf.keep_span = max(buf.keep_span, keep_history_span)
        t0 = buf.t_last
        y = np.array(buf.states[-1], dtype=float)
        if buf.span + 1e-12 < sys.max_lag and len(buf.times) > 1:
            raise ValueError(
                f"warm-start buffer spans {buf.span:.6g} < max lag {sys.max_lag:.6g}"
            )
    else:
        t0 = 0.0
        if sys.lags and sys.max_lag > 0:
            times, states, derivs = _sample_history(init_history, t0, sys.max_lag, step)
        else:
            y0 = np.asarray(init_history(t0), dtype=float)
            times, states, derivs = [t0], [y0], [np.zeros_like(y0)]
        buf = HistoryBuffer(times, states, derivs, keep_history_span)
        y = np.array(states[-1], dtype=float)

    if t_end <= t0:
        raise ValueError("t_end must exceed the start time")
    n_steps = int(round((t_end - t0) / step))
    if n_steps < 1:
        raise ValueError("t_end - t0 is smaller than one step")

    lags = sys.lags

    def delayed(ts, y_stage):
        out = []
        for lag in lags:
            if lag == 0.0:
                out.append(y_stage)
            else:
                out.append(buf.interpolate(ts - lag))
        return out

    if record_last is None:
        rec_start = t0
    else:
        rec_start = t_end - float(record_last)
    rec_times = []
    rec_states = []

    if rec_start <= t0:
        rec_times.append(t0)
        rec_states.append(y.copy())
    # the start node's stored derivative stays the history's (its
    # left-derivative generally differs from the rhs value across the
    # junction); the fresh rhs value below is used only as the k1 stage
    f_node = np.asarray(sys.rhs(t0, y, delayed(t0, y)), dtype=float)
    for n in range(n_steps):
        t = t0 + n * step
        k1 = f_node
        th = t + 0.5 * step
        y2 = y + 0.5 * step * k1
        k2 = np.asarray(sys.rhs(th, y2, delayed(th, y2)), dtype=float)
        y3 = y + 0.5 * step * k2
        k3 = np.asarray(sys.rhs(th, y3, delayed(th, y3)), dtype=float)
        tf = t + step
        y4 = y + step * k3
        k4 = np.asarray(sys.rhs(tf, y4, delayed(tf, y4)), dtype=float)
        y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(tf)
        f_node = np.asarray(sys.rhs(tf, y, delayed(tf, y)), dtype=float)
        buf.append(tf, y.copy(), f_node)
        if tf >= rec_start - 1e-12:
            rec_times.append(tf)
            rec_states.append(y.copy())

    return Trajectory(
        times=np.asarray(rec_times),
        states=np.asarray(rec_states),
        dt=step,
        final_history=buf,
    )


def detect_peaks(traj: Trajectory, component, kind="peaks"):
    """Local extrema of one component, refined by quadratic interpolation.

    Returns a list of (time, value) pairs.  ``kind`` selects "peaks"
    (maxima) or "troughs" (minima).  Raises NoPeaks when the component
    is monotone or constant (no interior sign change of the slope).
    """
    v = np.asarray(traj.component(component), dtype=float)
    if len(v) < 3:
        raise NoPeaks("trajectory has fewer than 3 samples")
    if kind == "troughs":
        v = -v
    elif kind != "peaks":
        raise ValueError("kind must be 'peaks' or 'troughs'")
    d = np.diff(v)
    idx = np.nonzero((d[:-1] > 0) & (d[1:] <= 0))[0] + 1
    if len(idx) == 0:
        raise NoPeaks("no interior local extrema found")
    t0 = float(traj.times[0])
    dt = traj.dt
    out = []
    for i in idx:
        a, b, c = v[i - 1], v[i], v[i + 1]
        den = a - 2 * b + c
        delta = 0.5 * (a - c) / den if den != 0 else 0.0
        t_peak = t0 + (i + delta) * dt
        v_peak = b - 0.25 * (a - c) * delta
        out.append((t_peak, v_peak if kind == "peaks" else -v_peak))
    return out


def circular_distance(a, b):
    """Distance between two angles on the circle, in [0, pi]."""
    return abs(math.remainder(a - b, 2 * math.pi))


def summarize(traj: Trajectory, i1, i2, window=0.25, lock_tol=0.05):
    """Phase difference, period, and amplitude asymmetry over the tail.

    The final ``window`` fraction of the trajectory is analyzed.  The
    period is the mean spacing of component-``i1`` peaks; for each such
    peak the offset to the nearest component-``i2`` peak at or after it
    is reduced modulo the period and converted to a phase in [0, 2*pi).
    The reported psi is the circular mean of these phases (oscillator
    ``i1`` is the reference).  Amplitudes are max - min per component
    over the window.

    Raises NoPeaks if either component has fewer than 3 peaks in the
    window, and NotLocked if the circular spread of the offsets exceeds
    ``lock_tol`` of the period.
    """
    n = len(traj.times)
    k0 = int(math.floor((1.0 - window) * (n - 1)))
    tail = Trajectory(times=traj.times[k0:], states=traj.states[k0:], dt=traj.dt)
    p1 = detect_peaks(tail, i1)
    p2 = detect_peaks(tail, i2)
    if len(p1) < 3 or len(p2) < 3:
        raise NoPeaks(
            f"need >= 3 peaks per component in the window, got {len(p1)} and {len(p2)}"
        )
    t1 = np.array([t for t, _ in p1])
    t2 = np.array([t for t, _ in p2])
    period = float(np.mean(np.diff(t1)))
    tie = 1e-9 * period
    phases = []
    for tp in t1:
        j = np.searchsorted(t2, tp - tie)
        if j >= len(t2):
            continue
        offset = (t2[j] - tp) % period
        phases.append(2 * math.pi * offset / period)
    if len(phases) < 2:
        raise NoPeaks("too few peak pairs in the window")
    z = np.exp(1j * np.asarray(phases))
    zbar = z.mean()
    psi = float(np.angle(zbar) % (2 * math.pi))
    rbar = abs(zbar)
    # circular standard deviation, converted to time units
    circ_std = math.sqrt(max(0.0, -2.0 * math.log(rbar))) if rbar > 0 else math.inf
    if circ_std * period / (2 * math.pi) > lock_tol * period:
        raise NotLocked(
            f"peak offsets scatter by {circ_std * period / (2 * math.pi):.3g} "
            f"time units (> {lock_tol:.0%} of the period)"
        )
    x1 = tail.component(i1)
    x2 = tail.component(i2)
    a1 = float(x1.max() - x1.min())
    a2 = float(x2.max() - x2.min())
    if min(a1, a2) <= 0:
        raise NoPeaks("a component is constant over the window")
    return SummaryStats(
        psi=psi,
        period=period,
        dA_signed=a2 - a1,
        dA_relative=abs(a1 - a2) / min(a1, a2),
    )
