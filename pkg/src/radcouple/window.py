"""The drift window for deterministic inter-particle distances.

A coadapted coupling whose distance evolves deterministically has speed
``A(r) - sum_i kappa_i alpha_i`` with each ``alpha_i`` in ``[-1, 1]``; the
window is the range of that expression.  This module evaluates it, compares
it with the constant-curvature closed forms, and inverts it to find controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._validation import check_int
from .control import CouplingControl
from .exceptions import DegenerateControlError, DomainError, InfeasibleTargetError, NoLimitError

__all__ = [
    "DriftWindow",
    "ControlSolution",
    "window",
    "pp_window",
    "InclusionRow",
    "InclusionReport",
    "window_inclusion_report",
    "synthesize_controls",
    "fixed_distance_feasible",
    "AsymptoticInterval",
    "asymptotic_interval",
    "endpoint_alphas",
]

TARGET_SLACK = 1e-9
FIXED_SLACK = 1e-12
LIMIT_TOL = 1e-6


@dataclass(frozen=True)
class DriftWindow:
    r: float
    lo: float
    hi: float
    mean: float
    abs_sum: float

    def contains(self, speed, slack=TARGET_SLACK):
        return self.lo - slack <= speed <= self.hi + slack


@dataclass(frozen=True)
class ControlSolution:
    alphas: tuple
    lam: float
    target_speed: float
    achieved_speed: float

    def control(self, j_r=1.0):
        """The reduced control realizing this solution (aligned radial block by default)."""
        return CouplingControl(self.alphas, j_r=j_r)


def _window_from_spectrum(spec):
    return DriftWindow(spec.r, spec.mean - spec.abs_sum, spec.mean + spec.abs_sum, spec.mean, spec.abs_sum)


def window(model, r):
    """``[A(r) - sum |kappa_i|, A(r) + sum |kappa_i|]``."""
    return _window_from_spectrum(model.spectrum(r))


def pp_window(K, n, rho):
    """Closed-form constant-curvature window, returned as ``(lo, hi)``.

    Flat: ``[0, 2(n-1)/rho]``.  With ``b = sqrt(|K|)`` the spherical window is
    ``-(n-1) b tan(b rho/2)`` plus ``[0, 2(n-1) b cot(b rho)]`` and the
    hyperbolic one ``(n-1) b tanh(b rho/2)`` plus ``[0, 2(n-1) b coth(b rho)]``.
    """
    n = check_int(n, "n", 2)
    if not math.isfinite(rho) or rho <= 0:
        raise DomainError(f"rho must be positive, got {rho!r}")
    n1 = n - 1
    if K == 0:
        return 0.0, 2 * n1 / rho
    b = math.sqrt(abs(K))
    if K > 0:
        if b * rho >= math.pi:
            raise DomainError(f"rho={rho} at or beyond the pole pi/sqrt(K)")
        lo = -n1 * b * math.tan(b * rho / 2)
        return lo, lo + 2 * n1 * b / math.tan(b * rho)
    lo = n1 * b * math.tanh(b * rho / 2)
    return lo, lo + 2 * n1 * b / math.tanh(b * rho)


@dataclass(frozen=True)
class InclusionRow:
    rho: float
    pp_lo: float
    pp_hi: float
    gen_lo: float
    gen_hi: float
    lo_contained: bool
    hi_contained: bool
    lo_gap: float
    hi_gap: float

    @property
    def contained(self):
        return self.lo_contained and self.hi_contained


@dataclass(frozen=True)
class InclusionReport:
    K: float
    n: int
    rows: tuple

    @property
    def contained(self):
        return all(row.contained for row in self.rows)


def window_inclusion_report(K, n, grid, slack=TARGET_SLACK):
    """Compare :func:`pp_window` with :func:`window` on a space form.

    ``lo_gap = pp_lo - gen_lo`` and ``hi_gap = gen_hi - pp_hi``; both are
    non-negative (up to ``slack``) exactly when the closed-form window sits
    inside the general one.
    """
    from .geometry import SpaceForm

    model = SpaceForm(n, K)
    rows = []
    for rho in grid:
        pp_lo, pp_hi = pp_window(K, n, rho)
        w = window(model, rho)
        rows.append(
            InclusionRow(
                float(rho), pp_lo, pp_hi, w.lo, w.hi,
                pp_lo >= w.lo - slack, pp_hi <= w.hi + slack,
                pp_lo - w.lo, w.hi - pp_hi,
            )
        )
    return InclusionReport(float(K), n, tuple(rows))


def synthesize_controls(model, r, target_speed, slack=TARGET_SLACK):
    """Tangential controls realizing ``target_speed`` at radius ``r``.

    Uses the uniform-fraction rule ``alpha_i = lam * sgn(kappa_i)`` with
    ``lam = (A - target) / sum |kappa_i|``; flat directions get ``alpha = 1``.

    Raises
    ------
    InfeasibleTargetError
        If the target is outside the window by more than ``slack``.
    DegenerateControlError
        If every ``kappa_i`` vanishes and the target differs from ``A(r)``.
    """
    spec = model.spectrum(r)
    gap = spec.mean - target_speed
    if spec.abs_sum == 0.0 and abs(gap) > slack:
        raise DegenerateControlError(f"all curvatures vanish at r={r}; only speed A(r) is reachable")
    w = _window_from_spectrum(spec)
    if not w.contains(target_speed, slack):
        raise InfeasibleTargetError(
            f"target {target_speed:.12g} outside window [{w.lo:.12g}, {w.hi:.12g}] at r={r:.12g}"
        )
    lam = 0.0 if spec.abs_sum == 0.0 else min(1.0, max(-1.0, gap / spec.abs_sum))
    alphas = tuple((lam * math.copysign(1.0, k) if k != 0 else 1.0, m) for k, m in spec.entries)
    achieved = spec.mean - math.fsum(k * a * m for (k, m), (a, _) in zip(spec.entries, alphas))
    return ControlSolution(alphas, lam, float(target_speed), achieved)


def fixed_distance_feasible(model, r0):
    """Feasibility of ``rho(t) == r0`` under the criterion ``A(r0) >= sum |kappa_i(r0)|``.

    Returns ``(feasible, controls)`` with ``controls`` from
    ``synthesize_controls(model, r0, 0)`` when feasible, else ``None``.
    """
    spec = model.spectrum(r0)
    if spec.mean < spec.abs_sum - FIXED_SLACK:
        return False, None
    return True, synthesize_controls(model, r0, 0.0)


@dataclass(frozen=True)
class AsymptoticInterval:
    lo: float
    hi: float
    A_inf: float
    Sigma_inf: float


def asymptotic_interval(model, potential_slope=0.0):
    """Range of limiting speeds ``[A_inf - c - Sigma_inf, A_inf - c + Sigma_inf]``.

    ``c`` is the asymptotic slope of an optional radial potential.  Limits are
    detected by evaluating the spectrum at ``40/s`` and ``80/s`` where ``s``
    is the model's asymptotic scale and requiring agreement to ``1e-6``.

    Raises
    ------
    NoLimitError
        For compact models, or when the two probes disagree.
    """
    if not model.noncompact:
        raise NoLimitError(f"{model.kind} model is compact; no asymptotic speed")
    scale = model.asymptotic_scale
    near, far = model.spectrum(40.0 / scale), model.spectrum(80.0 / scale)
    if abs(near.mean - far.mean) > LIMIT_TOL or abs(near.abs_sum - far.abs_sum) > LIMIT_TOL:
        raise NoLimitError(
            f"curvature data not converged: A={near.mean:.3e} vs {far.mean:.3e}, "
            f"sum|k|={near.abs_sum:.3e} vs {far.abs_sum:.3e}"
        )
    a_inf, s_inf = far.mean, far.abs_sum
    centre = a_inf - potential_slope
    return AsymptoticInterval(centre - s_inf, centre + s_inf, a_inf, s_inf)


def endpoint_alphas(spectrum, upper):
    """``alpha_i = -sgn(kappa_i)`` (upper endpoint) or ``+sgn(kappa_i)`` (lower)."""
    sign = -1.0 if upper else 1.0
    return tuple((sign * math.copysign(1.0, k) if k != 0 else 1.0, m) for k, m in spectrum.entries)
