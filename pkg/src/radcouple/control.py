"""Coupling matrices ``(J, K)`` in the parallel-transported principal frame.

Frame convention: index 0 is the radial direction (the unit tangent of the
connecting geodesic), indices ``1..n-1`` are principal directions of the
geodesic sphere, in the order of the :class:`CurvatureSpectrum` entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_square
from .exceptions import DimensionMismatchError, DomainError, NotContractionError

__all__ = [
    "CouplingControl",
    "CouplingMatrices",
    "synchronous_control",
    "reflection_control",
    "assemble_J",
    "complete_K",
    "coupling_matrices",
    "check_deterministic_conditions",
    "drift_of",
    "radial_qv",
    "spectral_trace_bound_check",
]

_TOL = 1e-10


@dataclass(frozen=True)
class CouplingControl:
    """Reduced control: tangential eigenvalues plus the radial block.

    Parameters
    ----------
    alphas : sequence of (value, multiplicity)
        Diagonal entries of ``J`` on the tangential block, each in ``[-1, 1]``.
    j_r : float
        Radial-radial correlation ``J[0, 0]``.
    k_r : float, optional
        Radial extra noise.  Defaults to ``sqrt(1 - j_r**2)``, the only value
        an admissible diagonal ``J`` can realize.
    """

    alphas: tuple
    j_r: float = 1.0
    k_r: float | None = None

    def __post_init__(self):
        alphas = tuple((float(a), int(m)) for a, m in self.alphas)
        for a, m in alphas:
            if not -1 - _TOL <= a <= 1 + _TOL or m < 1:
                raise DomainError(f"invalid tangential control ({a}, {m})")
        object.__setattr__(self, "alphas", alphas)
        if not -1 - _TOL <= self.j_r <= 1 + _TOL:
            raise DomainError(f"j_r={self.j_r} outside [-1, 1]")
        if self.k_r is None:
            object.__setattr__(self, "k_r", math.sqrt(max(0.0, 1.0 - self.j_r**2)))
        if self.k_r < 0 or self.j_r**2 + self.k_r**2 > 1 + 1e-12:
            raise DomainError(f"need k_r >= 0 and j_r^2 + k_r^2 <= 1, got {self.j_r}, {self.k_r}")

    @property
    def multiplicity(self):
        return sum(m for _, m in self.alphas)

    @property
    def alpha_values(self):
        return np.repeat([a for a, _ in self.alphas], [m for _, m in self.alphas])


def synchronous_control(n):
    """``J = I``: lower drift endpoint for nonnegative spectra, finite variation."""
    return CouplingControl(((1.0, n - 1),), j_r=1.0)


def reflection_control(n, j_r=1.0):
    """``J = -I`` on the tangential block.

    ``j_r = 1`` keeps the radial noises aligned (deterministic distance);
    ``j_r = 0`` is the variant with zero radial correlation and ``j_r = -1``
    the full antipodal choice ``J = -I``.
    """
    return CouplingControl(((-1.0, n - 1),), j_r=j_r)


@dataclass(frozen=True)
class CouplingMatrices:
    """Full ``n x n`` correlation pair; ``K`` may be ``None`` before completion."""

    J: np.ndarray
    K: np.ndarray | None = None

    def __post_init__(self):
        J = check_square(self.J, "J")
        object.__setattr__(self, "J", J)
        if self.K is not None:
            K = check_square(self.K, "K")
            if K.shape != J.shape:
                raise DimensionMismatchError(f"J {J.shape} and K {K.shape} differ")
            object.__setattr__(self, "K", K)

    @property
    def n(self):
        return self.J.shape[0]

    def covariance_defect(self):
        """Frobenius norm of ``J J^T + K K^T - I``."""
        gram = self.J @ self.J.T
        if self.K is not None:
            gram += self.K @ self.K.T
        gram.flat[:: self.n + 1] -= 1.0
        return float(np.sqrt((gram * gram).sum()))


def assemble_J(control, n):
    if control.multiplicity != n - 1:
        raise DimensionMismatchError(
            f"control multiplicities sum to {control.multiplicity}, expected {n - 1}"
        )
    return CouplingMatrices(np.diag(np.concatenate([[control.j_r], control.alpha_values])))


def complete_K(J):
    """Principal square root of ``I - J J^T``.

    Raises
    ------
    NotContractionError
        If ``I - J J^T`` has an eigenvalue below ``-1e-10``.
    """
    J = J.J if isinstance(J, CouplingMatrices) else check_square(J, "J")
    jj = J @ J.T
    gram = -0.5 * (jj + jj.T)
    gram.flat[:: J.shape[0] + 1] += 1.0
    w, v = np.linalg.eigh(gram)
    if w[0] < -_TOL:
        raise NotContractionError(f"I - J J^T has eigenvalue {w[0]:.3e} < 0")
    K = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    return CouplingMatrices(J, K)


def coupling_matrices(control, n):
    """``assemble_J`` followed by ``complete_K``."""
    return complete_K(assemble_J(control, n))


def check_deterministic_conditions(M, tol=_TOL):
    """Alignment and no-radial-noise conditions, read off the radial rows.

    Returns ``(aligned, no_radial_noise)``.
    """
    e0 = np.zeros(M.n)
    e0[0] = 1.0
    aligned = bool(np.all(np.abs(M.J[0] - e0) <= tol))
    K = np.zeros_like(M.J) if M.K is None else M.K
    return aligned, bool(np.all(np.abs(K[0]) <= tol))


def _tangential_diagonal(coupling, spectrum):
    n1 = spectrum.multiplicity
    if isinstance(coupling, CouplingControl):
        if coupling.multiplicity != n1:
            raise DimensionMismatchError(f"control has {coupling.multiplicity} directions, spectrum {n1}")
        return coupling.alpha_values
    J = coupling.J if isinstance(coupling, CouplingMatrices) else check_square(coupling)
    if J.shape[0] != n1 + 1:
        raise DimensionMismatchError(f"J is {J.shape[0]}x{J.shape[0]}, spectrum needs {n1 + 1}")
    return np.diag(J)[1:]


def drift_of(coupling, spectrum):
    """Reduced drift ``A(r) - sum_i kappa_i <e_i, J e_i>`` over the tangential block."""
    alphas = _tangential_diagonal(coupling, spectrum)
    return spectrum.mean - math.fsum(spectrum.kappas * alphas)


def radial_qv(coupling):
    """Quadratic-variation rate of the distance, ``|J^T e_0 - e_0|^2 + |K^T e_0|^2``."""
    if isinstance(coupling, CouplingControl):
        return (1.0 - coupling.j_r) ** 2 + coupling.k_r**2
    row = coupling.J[0].copy()
    row[0] -= 1.0
    k = 0.0 if coupling.K is None else float(coupling.K[0] @ coupling.K[0])
    return float(row @ row) + k


def spectral_trace_bound_check(J, spectrum):
    """Verify ``|sum_i kappa_i <e_i, J e_i>| <= sum_i |kappa_i|`` for a contraction ``J``."""
    J = J.J if isinstance(J, CouplingMatrices) else check_square(J, "J")
    norm = np.linalg.svd(J, compute_uv=False)[0]
    if norm > 1 + _TOL:
        raise NotContractionError(f"operator norm {norm:.12g} exceeds 1")
    if J.shape[0] != spectrum.multiplicity + 1:
        raise DimensionMismatchError(f"J is {J.shape[0]}x{J.shape[0]}, spectrum needs {spectrum.multiplicity + 1}")
    trace = math.fsum(spectrum.kappas * J.diagonal()[1:])
    return abs(trace) <= spectrum.abs_sum + _TOL
