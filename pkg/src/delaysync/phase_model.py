"""Multi-harmonic phase-difference model for two symmetrically coupled oscillators.

The phase difference psi between two identical phase oscillators with a
2*pi-periodic coupling function evolves according to the scalar flow

    dpsi/dt = F(psi; alpha) = sum_m a_m cos(m*alpha + gamma_m) sin(m*psi),

where (a_m, gamma_m) are the coupling function's harmonic amplitudes and
phase shifts and alpha is a common phase-shift parameter.  psi = 0
(in-phase) and psi = pi (anti-phase) are equilibria for every alpha; this
module locates the parameter values alpha* at which they bifurcate and
classifies the transition observed there as the parameter is swept.

Functions
---------
eval_phase_diff_rhs(): evaluate F(psi; alpha).
d1(): linear coefficient of F around psi = 0 or pi.
d3(): cubic coefficient of F around psi = 0 or pi.
find_bifurcation_alpha(): root of d1 within a bracket (Brent).
find_all_bifurcations(): all d1 roots on an interval by sign-change scan.
nearest_bifurcation(): the root closest to a target alpha (default pi/2).
classify_criticality(): continuous / discontinuous / degenerate tag.
approx_bifurcation(): small-coefficient closed-form estimates for
    three-harmonic couplings.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "HarmonicCoupling",
    "CriticalityTag",
    "CriticalityClass",
    "ApproxBifurcation",
    "NoSignChange",
    "NotABifurcationPoint",
    "DegenerateDenominator",
    "IllConditionedRootWarning",
    "eval_phase_diff_rhs",
    "d1",
    "d3",
    "find_bifurcation_alpha",
    "find_all_bifurcations",
    "nearest_bifurcation",
    "classify_criticality",
    "approx_bifurcation",
    "coupling_to_json",
    "coupling_from_json",
]

TWO_PI = 2.0 * math.pi


class NoSignChange(ValueError):
    """d1 has the same sign at both bracket ends; no root is bracketed."""


class NotABifurcationPoint(ValueError):
    """alpha passed to classify_criticality does not satisfy d1 ~ 0."""


class DegenerateDenominator(ValueError):
    """approx_bifurcation called with 3*s too close to 1."""


class IllConditionedRootWarning(UserWarning):
    """d1 is nearly tangent at the located root; alpha* is poorly conditioned."""


def _reduce_angle(x):
    """Reduce an angle to the interval (-pi, pi]."""
    y = math.fmod(x, TWO_PI)
    if y <= -math.pi:
        y += TWO_PI
    elif y > math.pi:
        y -= TWO_PI
    return y


@dataclass(frozen=True)
class HarmonicCoupling:
    """Harmonic content of the phase coupling function.

    Parameters
    ----------
    amplitudes : tuple of float
        Amplitudes a_m for m = 1..n.
    phases : tuple of float
        Phase shifts gamma_m in radians, stored reduced to (-pi, pi].

    Use ``HarmonicCoupling.from_pairs`` or ``HarmonicCoupling.from_rs``
    to construct; ``normalize=True`` rescales so a_1 = 1 and rotates the
    common phase so gamma_1 = 0 (the convention the analysis assumes).
    Normalization is never applied silently.
    """

    amplitudes: tuple
    phases: tuple

    def __post_init__(self):
        if len(self.amplitudes) < 1:
            raise ValueError("at least one harmonic is required")
        if len(self.amplitudes) != len(self.phases):
            raise ValueError("amplitudes and phases must have equal length")
        for v in (*self.amplitudes, *self.phases):
            if not math.isfinite(v):
                raise ValueError("harmonic coefficients must be finite")

    @classmethod
    def from_pairs(cls, harmonics, normalize=False):
        """Build from an iterable of (a_m, gamma_m) pairs, m = 1..n.

        With ``normalize=True`` the amplitudes are divided by a_1 and each
        gamma_m is replaced by gamma_m - m*gamma_1, so that a_1 = 1 and
        gamma_1 = 0.  Requires a_1 != 0 in that case.
        """
        amps = [float(a) for a, _ in harmonics]
        gams = [float(g) for _, g in harmonics]
        if normalize:
            a1, g1 = amps[0], gams[0]
            if a1 == 0.0:
                raise ValueError("cannot normalize a coupling with a_1 = 0")
            amps = [a / a1 for a in amps]
            gams = [g - (m + 1) * g1 for m, g in enumerate(gams)]
        gams = [_reduce_angle(g) for g in gams]
        return cls(tuple(amps), tuple(gams))

    @classmethod
    def from_rs(cls, r, s, gamma2=0.0, gamma3=0.0):
        """Three-harmonic coupling with a_1 = 1, gamma_1 = 0, a_2 = r, a_3 = s."""
        return cls.from_pairs([(1.0, 0.0), (r, gamma2), (s, gamma3)])

    @property
    def n_harmonics(self):
        return len(self.amplitudes)

    def harmonic_orders(self):
        return np.arange(1, self.n_harmonics + 1, dtype=float)


class CriticalityTag(str, Enum):
    CONTINUOUS = "continuous"
    DISCONTINUOUS = "discontinuous"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class CriticalityClass:
    """Classification of a pitchfork of psi = 0 or psi = pi at alpha_star.

    ``tag`` is derived from the sign of ``d3``: the synchronization
    transition of the coupled pair is continuous when d3 > tol_c,
    discontinuous when d3 < -tol_c, and degenerate within tolerance of
    zero (vertical branch).
    """

    tag: CriticalityTag
    d1: float
    d3: float
    alpha_star: float

    def to_json(self):
        return json.dumps(
            {
                "tag": self.tag.value,
                "d1": self.d1,
                "d3": self.d3,
                "alpha_star": self.alpha_star,
            }
        )


@dataclass(frozen=True)
class ApproxBifurcation:
    """First-order estimates of the bifurcation points and criticality.

    Valid for couplings with at most three harmonics (a_2 = r, a_3 = s)
    and small phase shifts; alpha0/alpha_pi estimate where psi = 0 and
    psi = pi bifurcate, c0/c_pi their criticality coefficients.  The sign
    convention matches ``d3``: positive c means a continuous transition.
    """

    alpha0: float
    alpha_pi: float
    c0: float
    c_pi: float


def _cos_weights(c: HarmonicCoupling, alpha):
    m = c.harmonic_orders()
    return np.asarray(c.amplitudes) * np.cos(m * alpha + np.asarray(c.phases))


def eval_phase_diff_rhs(c: HarmonicCoupling, psi, alpha):
    """Evaluate F(psi; alpha) = sum_m a_m cos(m*alpha + gamma_m) sin(m*psi).

    ``psi`` and ``alpha`` may be scalars or broadcastable arrays; the sum
    over harmonics is always exact (no truncation).
    """
    m = c.harmonic_orders()
    psi = np.asarray(psi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    w = np.asarray(c.amplitudes) * np.cos(np.multiply.outer(alpha, m) + np.asarray(c.phases))
    out = np.sum(w * np.sin(np.multiply.outer(psi, m)), axis=-1)
    return float(out) if out.ndim == 0 else out


def _check_base(base):
    if base == 0 or base == 0.0:
        return 1.0
    if base == math.pi or (isinstance(base, str) and base == "pi"):
        return -1.0
    raise ValueError("base must be exactly 0 or pi")


def d1(c: HarmonicCoupling, base, alpha):
    """Linear coefficient of F in psi around the base point.

    D1(0; alpha)  = sum_m      m a_m cos(m*alpha + gamma_m)
    D1(pi; alpha) = sum_m (-1)^m m a_m cos(m*alpha + gamma_m)
    """
    sign = _check_base(base)
    m = c.harmonic_orders()
    signs = np.where(sign > 0, 1.0, (-1.0) ** m)
    w = _cos_weights(c, float(alpha))
    return float(np.sum(signs * m * w))


def d3(c: HarmonicCoupling, base, alpha):
    """Cubic coefficient of F in psi around the base point.

    D3(0; alpha)  = -(1/3!) sum_m      m^3 a_m cos(m*alpha + gamma_m)
    D3(pi; alpha) = -(1/3!) sum_m (-1)^m m^3 a_m cos(m*alpha + gamma_m)
    """
    sign = _check_base(base)
    m = c.harmonic_orders()
    signs = np.where(sign > 0, 1.0, (-1.0) ** m)
    w = _cos_weights(c, float(alpha))
    return float(-np.sum(signs * m**3 * w) / 6.0)


def _d1_dalpha(c: HarmonicCoupling, base, alpha):
    sign = _check_base(base)
    m = c.harmonic_orders()
    signs = np.where(sign > 0, 1.0, (-1.0) ** m)
    amps = np.asarray(c.amplitudes)
    return float(-np.sum(signs * m**2 * amps * np.sin(m * alpha + np.asarray(c.phases))))


def find_bifurcation_alpha(c: HarmonicCoupling, base, bracket, slope_tol=1e-6):
    """Locate alpha* with d1(c, base, alpha*) = 0 inside ``bracket``.

    Uses Brent's method followed by a guarded Newton polish so that
    |d1(alpha*)| <= 1e-12.  Raises NoSignChange if d1 does not change
    sign over the bracket.  If |d(d1)/d(alpha)| < slope_tol at the root,
    an IllConditionedRootWarning is emitted (the root location is then
    poorly determined, but still returned).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    f = lambda a: d1(c, base, a)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        root = lo
    elif fhi == 0.0:
        root = hi
    elif flo * fhi > 0:
        raise NoSignChange(
            f"d1 has the same sign at both bracket ends ({flo:+.3e}, {fhi:+.3e})"
        )
    else:
        root = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # guarded Newton polish toward |d1| <= 1e-12
    for _ in range(3):
        val = f(root)
        if abs(val) <= 1e-13:
            break
        slope = _d1_dalpha(c, base, root)
        if slope == 0.0:
            break
        step = val / slope
        if abs(step) > (hi - lo):
            break
        root -= step
    if abs(_d1_dalpha(c, base, root)) < slope_tol:
        warnings.warn(
            f"bifurcation point at alpha={root:.6f} is ill-conditioned "
            "(d1 nearly tangent)",
            IllConditionedRootWarning,
            stacklevel=2,
        )
    return root


def find_all_bifurcations(c: HarmonicCoupling, base, interval=(0.0, math.pi), subdivisions=720):
    """All d1 roots on ``interval``, found by a uniform sign-change scan.

    The interval is split into ``subdivisions`` cells; every cell with a
    sign change is refined with ``find_bifurcation_alpha``.  Tangent
    roots that do not produce a sign change are not detected.
    """
    lo, hi = float(interval[0]), float(interval[1])
    grid = np.linspace(lo, hi, subdivisions + 1)
    m = c.harmonic_orders()
    sign = _check_base(base)
    signs = np.where(sign > 0, 1.0, (-1.0) ** m)
    vals = np.sum(
        signs * m * np.asarray(c.amplitudes)
        * np.cos(np.multiply.outer(grid, m) + np.asarray(c.phases)),
        axis=-1,
    )
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedRootWarning)
            roots.append(find_bifurcation_alpha(c, base, (grid[i], grid[i + 1])))
    return roots


def nearest_bifurcation(c: HarmonicCoupling, base, target=math.pi / 2, interval=(0.0, math.pi)):
    """The d1 root on ``interval`` closest to ``target``, or None."""
    roots = find_all_bifurcations(c, base, interval)
    if not roots:
        return None
    return min(roots, key=lambda r: abs(r - target))


def classify_criticality(c: HarmonicCoupling, base, alpha_star, tol_c=1e-9):
    """Classify the pitchfork of the base equilibrium at alpha_star.

    Requires |d1(c, base, alpha_star)| <= 1e-8 (else NotABifurcationPoint).
    The tag follows the sign of d3: continuous for d3 > tol_c,
    discontinuous for d3 < -tol_c, degenerate within tol_c of zero.
    """
    v1 = d1(c, base, alpha_star)
    if abs(v1) > 1e-8:
        raise NotABifurcationPoint(
            f"|d1| = {abs(v1):.3e} > 1e-8 at alpha = {alpha_star!r}"
        )
    v3 = d3(c, base, alpha_star)
    if v3 > tol_c:
        tag = CriticalityTag.CONTINUOUS
    elif v3 < -tol_c:
        tag = CriticalityTag.DISCONTINUOUS
    else:
        tag = CriticalityTag.DEGENERATE
    return CriticalityClass(tag=tag, d1=v1, d3=v3, alpha_star=float(alpha_star))


def approx_bifurcation(r, s, gamma2=0.0, gamma3=0.0):
    """Closed-form first-order bifurcation estimates for three harmonics.

    alpha0   = pi/2 - (r - s*gamma3)/(1 - 3 s)
    c0       = 9 r - 27 s gamma3 + (81 s - 1) beta0,   beta0 = pi/2 - alpha0
    alpha_pi = pi/2 - (r + s*gamma3)/(3 s - 1)
    c_pi     = 9 r + 27 s gamma3 + (1 - 81 s) beta_pi, beta_pi = pi/2 - alpha_pi

    For r = 0 the identity c0 = -c_pi holds exactly.  gamma2 does not
    enter at this order of the expansion; the argument is accepted for
    signature symmetry with the exact routines.  Raises
    DegenerateDenominator when |3 s - 1| <= 1e-6.
    """
    del gamma2  # drops out of the first-order expansion
    r = float(r)
    s = float(s)
    gamma3 = float(gamma3)
    if abs(3.0 * s - 1.0) <= 1e-6:
        raise DegenerateDenominator("3*s is too close to 1")
    beta0 = (r - s * gamma3) / (1.0 - 3.0 * s)
    beta_pi = (r + s * gamma3) / (3.0 * s - 1.0)
    c0 = 9.0 * r - 27.0 * s * gamma3 + (81.0 * s - 1.0) * beta0
    c_pi = 9.0 * r + 27.0 * s * gamma3 + (1.0 - 81.0 * s) * beta_pi
    return ApproxBifurcation(
        alpha0=math.pi / 2 - beta0,
        alpha_pi=math.pi / 2 - beta_pi,
        c0=c0,
        c_pi=c_pi,
    )


def coupling_to_json(c: HarmonicCoupling):
    """Serialize as a JSON array of {"m": ..., "a": ..., "gamma": ...}."""
    return json.dumps(
        [
            {"m": m + 1, "a": a, "gamma": g}
            for m, (a, g) in enumerate(zip(c.amplitudes, c.phases))
        ]
    )


def coupling_from_json(text):
    """Inverse of coupling_to_json.  Entries may arrive in any order."""
    entries = json.loads(text)
    if not entries:
        raise ValueError("empty harmonic list")
    by_m = {}
    for e in entries:
        keys = set(e)
        if keys != {"m", "a", "gamma"}:
            raise ValueError(f"unexpected keys in harmonic entry: {sorted(keys)}")
        by_m[int(e["m"])] = (float(e["a"]), float(e["gamma"]))
    n = max(by_m)
    if sorted(by_m) != list(range(1, n + 1)):
        raise ValueError("harmonic orders must cover 1..n without gaps")
    return HarmonicCoupling.from_pairs([by_m[m] for m in range(1, n + 1)])
