"""Radial curvature data for a zoo of radially isoparametric model spaces.

Every model reports the principal curvatures of the geodesic sphere of radius
``r`` about its base point, together with their multiplicities.  For the
rotationally symmetric and rank-one symmetric families these are closed forms;
:func:`riccati_flow` integrates the scalar (umbilic) Riccati equation for
arbitrary radial curvature profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ._validation import check_int, check_positive, check_radius
from .exceptions import BlowUpError, DomainError, NoLimitError

__all__ = [
    "s_K",
    "s_K_log_derivative",
    "WarpProfile",
    "space_form_profile",
    "sinh_profile",
    "sin_profile",
    "perturbed_sinh_profile",
    "CurvatureSpectrum",
    "ModelManifold",
    "SpaceForm",
    "RotSym",
    "RankOneSymmetric",
    "PerturbedHyperbolic",
    "principal_curvatures",
    "riccati_flow",
    "radial_sectional_from_kappa",
    "ComparisonRow",
    "ComparisonReport",
    "comparison_certificate",
]

# below this value of |K| r^2 the flat-limit series is used
_SERIES_CUTOFF = 1e-8
_BLOWUP = 1e12
_COMPARISON_TOL = 1e-9
_MAX_STEPS = 2_000_000


def _check_sk_domain(K, r):
    if not math.isfinite(r) or r <= 0:
        raise DomainError(f"r must be positive, got {r!r}")
    if K > 0 and r >= math.pi / math.sqrt(K):
        raise DomainError(f"r={r} beyond pi/sqrt(K)={math.pi / math.sqrt(K)} for K={K}")


def s_K(K, r):
    """Generalised sine: the warping function of the space form of curvature ``K``."""
    _check_sk_domain(K, r)
    x = K * r * r
    if abs(x) < _SERIES_CUTOFF:
        return r * (1.0 - x / 6.0 + x * x / 120.0)
    if K > 0:
        b = math.sqrt(K)
        return math.sin(b * r) / b
    b = math.sqrt(-K)
    return math.sinh(b * r) / b


def s_K_log_derivative(K, r):
    """``s_K'(r) / s_K(r)``: principal curvature of a geodesic sphere in the space form."""
    _check_sk_domain(K, r)
    x = K * r * r
    if abs(x) < _SERIES_CUTOFF:
        return (1.0 - x / 3.0 - x * x / 45.0) / r
    if K > 0:
        b = math.sqrt(K)
        return b / math.tan(b * r)
    b = math.sqrt(-K)
    return b / math.tanh(b * r)


def _log_derivative_array(K, r):
    r = np.asarray(r, dtype=float)
    x = K * r * r
    series = (1.0 - x / 3.0 - x * x / 45.0) / r
    if K > 0:
        b = math.sqrt(K)
        closed = b / np.tan(b * r)
    elif K < 0:
        b = math.sqrt(-K)
        closed = b / np.tanh(b * r)
    else:
        return 1.0 / r
    return np.where(np.abs(x) < _SERIES_CUTOFF, series, closed)


# --------------------------------------------------------------------------
# warping profiles


@dataclass(frozen=True)
class WarpProfile:
    """A warping function ``f`` with analytically coded derivative ``df``.

    ``growth_rate`` is the limit of ``f'/f`` at infinity for noncompact
    profiles (0 for polynomial growth) and ``None`` for compact ones.
    """

    name: str
    f: Callable[[float], float] = field(repr=False)
    df: Callable[[float], float] = field(repr=False)
    r_max: float
    growth_rate: float | None

    def __post_init__(self):
        r = 1e-8
        if abs(self.f(r) / r - 1.0) > 1e-6 or abs(self.df(r) - 1.0) > 1e-6:
            raise DomainError(f"profile {self.name} violates f(0)=0, f'(0)=1")

    @property
    def noncompact(self):
        return math.isinf(self.r_max)


def sinh_profile(b):
    b = check_positive(b, "b")
    return WarpProfile(
        f"sinh({b:g}r)/{b:g}",
        lambda r: np.sinh(b * r) / b,
        lambda r: np.cosh(b * r),
        math.inf,
        b,
    )


def sin_profile(b):
    b = check_positive(b, "b")
    return WarpProfile(
        f"sin({b:g}r)/{b:g}",
        lambda r: np.sin(b * r) / b,
        lambda r: np.cos(b * r),
        math.pi / b,
        None,
    )


def space_form_profile(K):
    """``s_K`` as a warping profile (flat for ``K == 0``)."""
    if K > 0:
        return sin_profile(math.sqrt(K))
    if K < 0:
        return sinh_profile(math.sqrt(-K))
    return WarpProfile("r", lambda r: r, lambda r: np.ones_like(r, dtype=float), math.inf, 0.0)


def perturbed_sinh_profile(b, coefficients):
    """``sinh(b r)/b + sum_k c_k r**k`` over odd powers ``k >= 3``.

    Odd powers keep every even derivative zero at the origin.  The cut radius
    is the first positive zero of ``f``, located numerically.
    """
    b = check_positive(b, "b")
    coeffs = {int(k): float(c) for k, c in dict(coefficients).items()}
    for k in coeffs:
        if k < 3 or k % 2 == 0:
            raise DomainError(f"perturbation powers must be odd and >= 3, got {k}")

    def f(r):
        return np.sinh(b * r) / b + sum(c * r**k for k, c in coeffs.items())

    def df(r):
        return np.cosh(b * r) + sum(k * c * r ** (k - 1) for k, c in coeffs.items())

    r_max = math.inf
    if any(c < 0 for c in coeffs.values()):
        grid = np.linspace(1e-6, 60.0 / b, 60001)
        vals = f(grid)
        bad = np.flatnonzero(vals <= 0)
        if bad.size:
            i = bad[0]
            r_max = brentq(f, grid[i - 1], grid[i]) if i else grid[0]
    terms = " + ".join(f"{c:g}r^{k}" for k, c in sorted(coeffs.items()))
    name = f"sinh({b:g}r)/{b:g}" + (f" + {terms}" if terms else "")
    return WarpProfile(name, f, df, r_max, b if math.isinf(r_max) else None)


# --------------------------------------------------------------------------
# curvature spectra and models


@dataclass(frozen=True)
class CurvatureSpectrum:
    """Principal curvatures ``(kappa, multiplicity)`` at radius ``r``."""

    r: float
    entries: tuple
    mean: float = field(init=False)
    abs_sum: float = field(init=False)

    def __post_init__(self):
        entries = tuple((float(k), int(m)) for k, m in self.entries)
        if not entries or any(m < 1 for _, m in entries):
            raise DomainError(f"invalid spectrum entries {self.entries!r}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mean", math.fsum(m * k for k, m in entries))
        object.__setattr__(self, "abs_sum", math.fsum(m * abs(k) for k, m in entries))

    @property
    def multiplicity(self):
        """Total multiplicity, ``dim - 1``."""
        return sum(m for _, m in self.entries)

    @property
    def kappas(self):
        """Principal curvatures with multiplicities expanded, in entry order."""
        return np.repeat([k for k, _ in self.entries], [m for _, m in self.entries])


class ModelManifold:
    """Base class of the model zoo.

    Subclasses set ``kind``, ``dim`` and ``r_max`` and implement
    :meth:`_entries`.
    """

    kind = "abstract"
    dim: int
    r_max: float

    def _entries(self, r):
        raise NotImplementedError

    def spectrum(self, r):
        r = check_radius(r, self.r_max)
        return CurvatureSpectrum(r, tuple((float(k), m) for k, m in self._entries(r)))

    def curvature_arrays(self, r):
        """Vectorised spectrum.

        Returns ``(kappa, mult)`` with ``kappa`` of shape ``r.shape + (E,)``
        for ``E`` distinct entries and ``mult`` the integer multiplicities.
        """
        r = np.asarray(r, dtype=float)
        if r.size and not (np.all(r > 0) and np.all(r < self.r_max)):
            bad = r[~((r > 0) & (r < self.r_max))].ravel()[0]
            raise DomainError(f"r={bad!r} outside (0, {self.r_max})")
        entries = self._entries(r)
        kappa = np.stack([np.broadcast_to(k, r.shape) for k, _ in entries], axis=-1)
        return kappa, np.array([m for _, m in entries])

    def mean_curvature(self, r):
        """Vectorised ``A(r)``."""
        kappa, mult = self.curvature_arrays(r)
        return kappa @ mult

    @property
    def noncompact(self):
        return math.isinf(self.r_max)

    @property
    def asymptotic_scale(self):
        """Exponential rate used to pick probe radii for limits at infinity.

        Models whose curvature decays only polynomially report a tiny rate so
        that the probes land far enough out.
        """
        raise NotImplementedError


def _check_dim(dim):
    return check_int(dim, "dim", 2)


@dataclass(frozen=True)
class SpaceForm(ModelManifold):
    """Simply connected space of constant sectional curvature ``K``."""

    dim: int
    K: float
    kind = "SpaceForm"

    def __post_init__(self):
        _check_dim(self.dim)
        if not math.isfinite(self.K):
            raise DomainError(f"K must be finite, got {self.K!r}")

    @property
    def r_max(self):
        return math.pi / math.sqrt(self.K) if self.K > 0 else math.inf

    def _entries(self, r):
        return [(_log_derivative_array(self.K, r), self.dim - 1)]

    @property
    def asymptotic_scale(self):
        return math.sqrt(-self.K) if self.K < 0 else 1e-5


@dataclass(frozen=True)
class RotSym(ModelManifold):
    """Warped product ``dr^2 + f(r)^2 g_sphere``."""

    dim: int
    profile: WarpProfile
    kind = "RotSym"

    def __post_init__(self):
        _check_dim(self.dim)

    @property
    def r_max(self):
        return self.profile.r_max

    def _entries(self, r):
        f = self.profile.f(r)
        if not np.all(f > 0):
            raise DomainError(f"warping function non-positive at r={r}: f={f}")
        return [(self.profile.df(r) / f, self.dim - 1)]

    @property
    def asymptotic_scale(self):
        rate = self.profile.growth_rate
        if rate is None:
            raise NoLimitError(f"profile {self.profile.name} is compact; no asymptotic regime")
        return rate if rate > 0 else 1e-5


@dataclass(frozen=True)
class RankOneSymmetric(ModelManifold):
    """Rank-one symmetric space with root ``alpha`` and multiplicities."""

    dim: int
    type: str
    alpha: float
    m_alpha: int
    m_2alpha: int
    kind = "RankOneSymmetric"

    def __post_init__(self):
        _check_dim(self.dim)
        if self.type not in ("compact", "noncompact"):
            raise DomainError(f"type must be 'compact' or 'noncompact', got {self.type!r}")
        check_positive(self.alpha, "alpha")
        check_int(self.m_alpha, "m_alpha", 1)
        check_int(self.m_2alpha, "m_2alpha", 0)
        if self.m_alpha + self.m_2alpha != self.dim - 1:
            raise DomainError(
                f"multiplicities {self.m_alpha}+{self.m_2alpha} must sum to dim-1={self.dim - 1}"
            )

    @property
    def r_max(self):
        # cot(2 alpha r) blows up before cot(alpha r)
        return math.pi / (2 * self.alpha) if self.type == "compact" else math.inf

    def _entries(self, r):
        a = self.alpha
        trig = np.tan if self.type == "compact" else np.tanh
        out = [(a / trig(a * r), self.m_alpha)]
        if self.m_2alpha:
            out.append((2 * a / trig(2 * a * r), self.m_2alpha))
        return out

    @property
    def asymptotic_scale(self):
        return self.alpha


@dataclass(frozen=True)
class PerturbedHyperbolic(ModelManifold):
    """Hyperbolic-type end with an ``exp(-2 b r)`` correction of amplitude ``c``."""

    dim: int
    b: float
    c: float
    kind = "PerturbedHyperbolic"

    def __post_init__(self):
        _check_dim(self.dim)
        check_positive(self.b, "b")
        if not math.isfinite(self.c):
            raise DomainError(f"c must be finite, got {self.c!r}")

    r_max = math.inf

    def _entries(self, r):
        b, n1 = self.b, self.dim - 1
        return [(b / np.tanh(b * r) + self.c / n1 * np.exp(-2 * b * r), n1)]

    @property
    def asymptotic_scale(self):
        return self.b


def principal_curvatures(model, r):
    """Curvature spectrum of the geodesic sphere of radius ``r``."""
    return model.spectrum(r)


# --------------------------------------------------------------------------
# Riccati flow and comparison


def _rk4(K_rad, r0, kappa0, r1, n):
    h = (r1 - r0) / n
    k, r = kappa0, r0

    def rhs(rr, kk):
        return -kk * kk - K_rad(rr)

    for i in range(n):
        r = r0 + i * h
        a = rhs(r, k)
        b = rhs(r + h / 2, k + h / 2 * a)
        c = rhs(r + h / 2, k + h / 2 * b)
        d = rhs(r + h, k + h * c)
        k = k + h / 6 * (a + 2 * b + 2 * c + d)
        if not math.isfinite(k) or abs(k) > _BLOWUP:
            raise BlowUpError(f"Riccati flow blew up near r={r + h:.6g} (focal point)")
    return k


def riccati_flow(K_rad, r0, kappa0, r1, step, rtol=1e-10, max_halvings=12):
    """Integrate ``kappa' + kappa^2 + K_rad(r) = 0`` from ``r0`` to ``r1``.

    Classical RK4 on a uniform grid no coarser than ``step``.  Each result is
    checked against a run at half the step; the step is halved until the two
    agree to ``rtol`` and the Richardson-extrapolated value is returned.

    Raises
    ------
    BlowUpError
        If ``|kappa|`` exceeds ``1e12`` during the flow.
    """
    r0 = check_positive(r0, "r0")
    r1 = check_positive(r1, "r1")
    step = check_positive(step, "step")
    if not r1 > r0:
        raise DomainError(f"need r0 < r1, got r0={r0}, r1={r1}")
    n = max(1, math.ceil((r1 - r0) / step))
    if n > _MAX_STEPS:
        raise DomainError(f"{n} steps of size {step} exceed the limit of {_MAX_STEPS}")
    coarse = _rk4(K_rad, r0, kappa0, r1, n)
    fine = _rk4(K_rad, r0, kappa0, r1, 2 * n)
    for _ in range(max_halvings):
        if abs(fine - coarse) <= 15 * rtol * max(1.0, abs(fine)) or 4 * n > _MAX_STEPS:
            break
        n *= 2
        coarse, fine = fine, _rk4(K_rad, r0, kappa0, r1, 2 * n)
    return fine + (fine - coarse) / 15.0


def radial_sectional_from_kappa(kappa, kappa_prime):
    """Radial sectional curvature of an umbilic sphere family: ``-kappa' - kappa^2``."""
    return -kappa_prime - kappa * kappa


@dataclass(frozen=True)
class ComparisonRow:
    r: float
    kappa_min: float
    kappa_bound: float
    hessian_ok: bool
    mean: float
    laplacian_bound: float
    laplacian_ok: bool
    rigid: bool


@dataclass(frozen=True)
class ComparisonReport:
    K0: float
    rows: tuple

    @property
    def all_hessian_ok(self):
        return all(row.hessian_ok for row in self.rows)

    @property
    def all_laplacian_ok(self):
        return all(row.laplacian_ok for row in self.rows)

    @property
    def all_rigid(self):
        return all(row.rigid for row in self.rows)


def comparison_certificate(model, K0, r_grid, tol=_COMPARISON_TOL):
    """Check the Hessian and Laplacian comparison inequalities against ``s_K0``.

    For each radius the report records whether ``min kappa_i >= s'/s`` and
    ``A <= (n - 1) s'/s`` hold up to ``tol``; a row is flagged ``rigid`` when
    every principal curvature equals the model value within ``tol``.
    """
    limit = model.r_max
    if K0 > 0:
        limit = min(limit, math.pi / math.sqrt(K0))
    rows = []
    n1 = model.dim - 1
    for r in r_grid:
        check_radius(r, limit)
        spec = model.spectrum(r)
        bound = s_K_log_derivative(K0, r)
        kappas = spec.kappas
        kmin = float(kappas.min())
        rows.append(
            ComparisonRow(
                r=float(r),
                kappa_min=kmin,
                kappa_bound=bound,
                hessian_ok=kmin >= bound - tol,
                mean=spec.mean,
                laplacian_bound=n1 * bound,
                laplacian_ok=spec.mean <= n1 * bound + tol,
                rigid=bool(np.all(np.abs(kappas - bound) <= tol)),
            )
        )
    return ComparisonReport(float(K0), tuple(rows))
