"""Quasi-static sweeps and parameter maps for the phase-difference flow.

``pseudocontinuation_sweep`` integrates dpsi/dt = F(psi; alpha) to its
asymptotic state at each alpha in grid order, warm-starting each run
from the previous asymptotic state plus a small seeded perturbation.
Running the grid in both directions and comparing exposes hysteresis.

``criticality_map`` scans an (r, s) grid of three-harmonic couplings,
locates the bifurcation of psi = 0 and psi = pi nearest alpha = pi/2,
classifies both, and labels the cells where the two transitions have
distinct criticality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .phase_model import (
    CriticalityTag,
    HarmonicCoupling,
    classify_criticality,
    nearest_bifurcation,
)

__all__ = [
    "SweepProtocol",
    "CriticalityMap",
    "pseudocontinuation_sweep",
    "criticality_map",
    "combine_tags",
    "sweep_to_csv",
    "map_to_csv",
]

TWO_PI = 2.0 * math.pi

COMBINED_LABELS = ("zero_cont_pi_disc", "zero_disc_pi_cont", "same", "undetermined")


@dataclass(frozen=True)
class SweepProtocol:
    """Protocol for a quasi-static alpha sweep.

    alpha_grid must be strictly monotone (ascending or descending); each
    grid point is integrated for ``settle_time`` with fixed RK4 step
    ``integrator_step``, warm-started from the previous point's state
    plus a uniform perturbation in [-perturbation_scale,
    +perturbation_scale] drawn from a generator seeded with ``rng_seed``.
    """

    alpha_grid: np.ndarray
    settle_time: float = 5000.0
    perturbation_scale: float = 1e-3
    rng_seed: int = 0
    integrator_step: float = 0.01

    def __post_init__(self):
        grid = np.asarray(self.alpha_grid, dtype=float)
        object.__setattr__(self, "alpha_grid", grid)
        if grid.ndim != 1 or len(grid) < 1:
            raise ValueError("alpha_grid must be a nonempty 1-d array")
        if len(grid) > 1:
            d = np.diff(grid)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("alpha_grid must be strictly monotone")
        if self.settle_time <= 0:
            raise ValueError("settle_time must be positive")
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be nonnegative")
        if self.integrator_step <= 0:
            raise ValueError("integrator_step must be positive")


def pseudocontinuation_sweep(c: HarmonicCoupling, proto: SweepProtocol, psi_init):
    """Asymptotic phase difference at each alpha of a quasi-static sweep.

    The first grid point starts exactly at ``psi_init``; every later
    point warm-starts from the previous asymptotic state plus the
    protocol's random perturbation.  The reported psi* is the time
    average over the final 1% of each run, reduced to [0, 2*pi).

    Returns a list of (alpha, psi_star) pairs in grid order.
    """
    grid = proto.alpha_grid
    h = proto.integrator_step
    n_steps = max(1, int(round(proto.settle_time / h)))
    n_tail = max(1, n_steps // 100)
    m = c.harmonic_orders()
    amps = np.asarray(c.amplitudes)
    phs = np.asarray(c.phases)
    weights = amps * np.cos(np.multiply.outer(grid, m) + phs)

    rng = np.random.default_rng(proto.rng_seed)
    out = []
    psi = float(psi_init)
    for i in range(len(grid)):
        start = psi if i == 0 else psi + rng.uniform(
            -proto.perturbation_scale, proto.perturbation_scale
        )
        finals, tails = _fast.sweep_scalar_flow(
            weights[i : i + 1], n_steps, n_tail, h, np.array([start])
        )
        psi = float(tails[0]) % TWO_PI
        out.append((float(grid[i]), psi))
    return out


def combine_tags(tag0, tag_pi):
    """Combined region label from the two per-base criticality tags.

    None (no bifurcation found) on either base, or a degenerate tag
    paired with a non-degenerate one, yields "undetermined"; equal tags
    yield "same"; the two mixed continuous/discontinuous pairs get their
    own labels.
    """
    if tag0 is None or tag_pi is None:
        return "undetermined"
    if tag0 == tag_pi:
        return "same"
    pair = {tag0, tag_pi}
    if pair == {CriticalityTag.CONTINUOUS, CriticalityTag.DISCONTINUOUS}:
        if tag0 == CriticalityTag.CONTINUOUS:
            return "zero_cont_pi_disc"
        return "zero_disc_pi_cont"
    return "undetermined"


@dataclass
class CriticalityMap:
    """Per-cell criticality tags over an (r, s) grid (fixed gamma_2, gamma_3)."""

    r_grid: np.ndarray
    s_grid: np.ndarray
    gamma2: float
    gamma3: float
    tag0: list = field(repr=False)          # [i][j] -> CriticalityTag or None
    tag_pi: list = field(repr=False)
    combined: list = field(repr=False)      # [i][j] -> str label

    def cell(self, i, j):
        return self.tag0[i][j], self.tag_pi[i][j], self.combined[i][j]


def criticality_map(gamma2, gamma3, r_grid, s_grid, tol_c=1e-9):
    """Classify the nearest-pi/2 bifurcations over an (r, s) grid.

    For each cell, the bifurcation of each base equilibrium closest to
    alpha = pi/2 within (0, pi) is located and classified; cells where a
    base has no bifurcation in (0, pi) are labeled undetermined.  Any
    per-cell numerical failure degrades to undetermined rather than
    aborting the map.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if r_grid.size == 0 or s_grid.size == 0:
        raise ValueError("grids must be nonempty")
    tag0 = []
    tag_pi = []
    combined = []
    for r in r_grid:
        row0 = []
        row_pi = []
        row_c = []
        for s in s_grid:
            c = HarmonicCoupling.from_rs(float(r), float(s), gamma2, gamma3)
            tags = []
            for base in (0.0, math.pi):
                try:
                    alpha_star = nearest_bifurcation(c, base)
                    if alpha_star is None:
                        tags.append(None)
                    else:
                        tags.append(
                            classify_criticality(c, base, alpha_star, tol_c=tol_c).tag
                        )
                except (ValueError, RuntimeError):
                    tags.append(None)
            row0.append(tags[0])
            row_pi.append(tags[1])
            row_c.append(combine_tags(tags[0], tags[1]))
        tag0.append(row0)
        tag_pi.append(row_pi)
        combined.append(row_c)
    return CriticalityMap(
        r_grid=r_grid,
        s_grid=s_grid,
        gamma2=float(gamma2),
        gamma3=float(gamma3),
        tag0=tag0,
        tag_pi=tag_pi,
        combined=combined,
    )


def sweep_to_csv(path, ascending, descending=None):
    """Write sweep results as CSV rows (alpha, psi_star, direction)."""
    with open(path, "w") as fh:
        fh.write("alpha,psi_star,direction\n")
        for alpha, psi in ascending:
            fh.write(f"{alpha!r},{psi!r},ascending\n")
        for alpha, psi in descending or []:
            fh.write(f"{alpha!r},{psi!r},descending\n")


def map_to_csv(path, cmap: CriticalityMap):
    """Write a criticality map as CSV rows (r, s, tag0, tag_pi, combined)."""

    def name(tag):
        return tag.value if tag is not None else "none"

    with open(path, "w") as fh:
        fh.write("r,s,tag0,tag_pi,combined\n")
        for i, r in enumerate(cmap.r_grid):
            for j, s in enumerate(cmap.s_grid):
                fh.write(
                    f"{float(r)!r},{float(s)!r},{name(cmap.tag0[i][j])},"
                    f"{name(cmap.tag_pi[i][j])},{cmap.combined[i][j]}\n"
                )
