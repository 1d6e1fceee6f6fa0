"""Brute-force two-point Brownian motion in explicit space-form embeddings.

Points live in ambient coordinates: the unit sphere in R^{n+1}, the upper
sheet of the hyperboloid <x, x> = -1 in Minkowski space R^{1,n}, or R^n
itself.  Geodesics and parallel transport are closed forms, so a coupling
``(J, K)`` can be applied in genuinely transported frames and the distance
process observed directly, without any reduced model in the loop.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_positive, check_radius, check_time_grid
from .control import CouplingControl, CouplingMatrices, complete_K, coupling_matrices, radial_qv
from .estimators import BinnedDriftEstimator
from .exceptions import CutLocusError, DomainError
from .geometry import SpaceForm, s_K, s_K_log_derivative
from .rng import normals

__all__ = [
    "SpaceFormEmbedding",
    "FramePair",
    "frame_pair",
    "frame_defect",
    "step_coupled",
    "OracleRow",
    "OracleReport",
    "run_oracle",
    "spaceform_two_point_drift",
    "ORACLE_CSV_COLUMNS",
]

ORACLE_CSV_COLUMNS = ("r_bin", "drift_est", "drift_se", "qv_est", "qv_se", "M_pred", "sigma2_pred", "n_samples")
_CURVATURE = {"S": 1.0, "H": -1.0, "R": 0.0}
_BLOCK = 4096


class SpaceFormEmbedding:
    """Closed-form geometry of ``S^n`` (``"S"``), ``H^n`` (``"H"``) or ``R^n`` (``"R"``).

    All methods act row-wise on arrays of shape ``(N, D)``.
    """

    def __init__(self, space, n):
        if space not in _CURVATURE:
            raise DomainError(f"space must be one of 'S', 'H', 'R', got {space!r}")
        self.space = space
        self.n = check_int(n, "n", 2)
        self.D = n if space == "R" else n + 1
        self.K = _CURVATURE[space]
        self.r_max = math.pi if space == "S" else math.inf

    def model(self):
        return SpaceForm(self.n, self.K)

    def inner(self, a, b):
        prod = a * b
        if self.space == "H":
            return prod[..., 1:].sum(axis=-1) - prod[..., 0]
        return prod.sum(axis=-1)

    def norm(self, v):
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def base_point(self, N=1):
        x = np.zeros((N, self.D))
        if self.space != "R":
            x[:, 0] = 1.0
        return x

    def project_tangent(self, x, a):
        if self.space == "S":
            return a - self.inner(x, a)[..., None] * x
        if self.space == "H":
            return a + self.inner(x, a)[..., None] * x
        return a

    def renormalize(self, x):
        if self.space == "S":
            return x / np.linalg.norm(x, axis=-1, keepdims=True)
        if self.space == "H":
            x = x.copy()
            x[..., 0] = np.sqrt(1.0 + (x[..., 1:] ** 2).sum(axis=-1))
            return x
        return x

    def on_manifold_defect(self, x):
        if self.space == "S":
            return np.abs(self.inner(x, x) - 1.0)
        if self.space == "H":
            return np.abs(self.inner(x, x) + 1.0) + np.maximum(-x[..., 0], 0.0)
        return np.zeros(x.shape[:-1])

    def distance(self, x, y):
        if self.space == "S":
            c = self.inner(x, y)
            s = np.linalg.norm(y - c[..., None] * x, axis=-1)
            return np.arctan2(s, c)
        if self.space == "H":
            chord = np.sqrt(np.maximum(self.inner(y - x, y - x), 0.0))
            return 2.0 * np.arcsinh(chord / 2.0)
        return np.linalg.norm(y - x, axis=-1)

    def direction(self, x, y):
        """Unit tangent at ``x`` of the minimizing geodesic toward ``y``."""
        if self.space == "R":
            w = y - x
        else:
            w = self.project_tangent(x, y)
        nrm = self.norm(w)
        if np.any(nrm == 0):
            raise DomainError("coincident or antipodal points have no unique direction")
        return w / nrm[..., None]

    def arrival(self, x, e, d):
        """Unit tangent at the end of the geodesic ``t -> exp_x(t e)`` at ``t = d``."""
        d = d[..., None]
        if self.space == "S":
            return -np.sin(d) * x + np.cos(d) * e
        if self.space == "H":
            return np.sinh(d) * x + np.cosh(d) * e
        return e

    def exp(self, x, v):
        if self.space == "R":
            return x + v
        t = self.norm(v)[..., None]
        safe = np.where(t > 0, t, 1.0)
        if self.space == "S":
            out = np.cos(t) * x + np.sin(t) / safe * v
        else:
            out = np.cosh(t) * x + np.sinh(t) / safe * v
        return self.renormalize(np.where(t > 0, out, x))

    def log(self, x, y):
        return self.distance(x, y)[..., None] * self.direction(x, y)

    def parallel_transport(self, x, y, v):
        """Transport tangent vectors ``v`` at ``x`` to ``y`` along the minimizing geodesic.

        ``v`` may carry extra leading axes after the path axis, e.g. a frame
        of shape ``(N, k, D)``.
        """
        e = self.direction(x, y)
        ey = self.arrival(x, e, self.distance(x, y))
        extra = v.ndim - x.ndim
        e_b = e.reshape(e.shape[:1] + (1,) * extra + e.shape[1:])
        ey_b = ey.reshape(e_b.shape)
        return v + self.inner(e_b, v)[..., None] * (ey_b - e_b)


@dataclass(frozen=True)
class FramePair:
    """Orthonormal frames at ``x`` and ``y``; row 0 is the geodesic tangent.

    ``fy`` is the parallel transport of ``fx``, so ``fy[:, 0]`` is the
    arrival direction at ``y``.
    """

    fx: np.ndarray
    fy: np.ndarray
    rho: np.ndarray


def frame_pair(geom, x, y):
    """Frames with tangential completion by pivoted Gram-Schmidt on the ambient axes."""
    N = x.shape[0]
    rho = geom.distance(x, y)
    e = geom.direction(x, y)
    cand = geom.project_tangent(x[:, None, :], np.broadcast_to(np.eye(geom.D), (N, geom.D, geom.D)))
    cand = cand - geom.inner(e[:, None, :], cand)[..., None] * e[:, None, :]
    fx = np.empty((N, geom.n, geom.D))
    fx[:, 0] = e
    rows = np.arange(N)
    for s in range(1, geom.n):
        norms = geom.norm(cand)
        pick = np.argmax(norms, axis=1)
        v = cand[rows, pick] / norms[rows, pick][:, None]
        fx[:, s] = v
        cand = cand - geom.inner(v[:, None, :], cand)[..., None] * v[:, None, :]
    fy = geom.parallel_transport(x, y, fx)
    return FramePair(fx, fy, rho)


def _as_matrices(coupling, n):
    if isinstance(coupling, CouplingControl):
        return coupling_matrices(coupling, n)
    if not isinstance(coupling, CouplingMatrices):
        coupling = CouplingMatrices(np.asarray(coupling, dtype=float))
    if coupling.n != n:
        raise DomainError(f"coupling is {coupling.n}x{coupling.n}, space has dimension {n}")
    return complete_K(coupling.J) if coupling.K is None else coupling


def step_coupled(geom, x, y, M, dt, noise, frames=None):
    """One geodesic-random-walk step of the coupled pair.

    ``noise`` holds ``(xi, eta)`` stacked as ``(N, 2n)``; the Brownian
    increments are ``sqrt(dt) * xi`` and ``sqrt(dt) * eta``.  ``x`` moves along
    ``u dB`` and ``y`` along ``v (J dB + K dW)`` where ``u, v`` are the frames
    of :func:`frame_pair`.

    Raises
    ------
    CutLocusError
        On the sphere, when ``d(x, y) > pi - 10 sqrt(dt)``.
    """
    if frames is None:
        frames = frame_pair(geom, x, y)
    if geom.space == "S" and np.any(frames.rho > geom.r_max - 10 * math.sqrt(dt)):
        raise CutLocusError("points too close to each other's cut locus")
    n = geom.n
    noise = np.asarray(noise, dtype=float)
    dB = math.sqrt(dt) * noise[:, :n]
    dW = math.sqrt(dt) * noise[:, n : 2 * n]
    K = np.zeros_like(M.J) if M.K is None else M.K
    coef_y = dB @ M.J.T + dW @ K.T
    vx = np.einsum("ni,nid->nd", dB, frames.fx)
    vy = np.einsum("ni,nid->nd", coef_y, frames.fy)
    return geom.exp(x, vx), geom.exp(y, vy)


def spaceform_two_point_drift(K, n, r, J):
    """Exact generator of the distance on a space form for a coupling ``J``.

    Half the sum of the two Laplacians of the distance plus the mixed term,
    whose tangential block is ``-I / s_K(r)`` between parallel frames:
    ``(n - 1) s_K'/s_K - trace(J_tan) / s_K``.
    """
    J = np.asarray(J, dtype=float)
    return (n - 1) * s_K_log_derivative(K, r) - np.trace(J[1:, 1:]) / s_K(K, r)


@dataclass(frozen=True)
class OracleRow:
    r_bin: float
    drift_est: float
    drift_se: float
    qv_est: float
    qv_se: float
    M_pred: float
    sigma2_pred: float
    n_samples: int
    rho_mean: float
    lo_mean: float
    hi_mean: float

    @property
    def drift_delta(self):
        return self.drift_est - self.M_pred

    @property
    def qv_delta(self):
        return self.qv_est - self.sigma2_pred


@dataclass(frozen=True)
class OracleReport:
    space: str
    n: int
    r0: float
    T: float
    dt: float
    n_paths: int
    seed: int
    bin_width: float
    rows: tuple
    terminations: dict = field(default_factory=dict)
    max_abs_deviation: float = 0.0
    frame_defect: float = 0.0

    def row_at(self, r):
        """The row whose bin contains ``r``."""
        for row in self.rows:
            if row.r_bin - self.bin_width / 2 <= r < row.r_bin + self.bin_width / 2:
                return row
        raise KeyError(f"no populated bin contains r={r}")

    def csv_rows(self):
        for row in self.rows:
            yield tuple(getattr(row, c) for c in ORACLE_CSV_COLUMNS)


def _oracle_chunk(geom, M, r0, n_steps, dt, seed, ids, width, check_frames):
    model = geom.model()
    N = ids.size
    x = geom.base_point(N)
    tangent = np.zeros((N, geom.D))
    tangent[:, 1] = 1.0
    y = geom.exp(x, r0 * tangent)
    alive = np.ones(N, dtype=bool)
    est = BinnedDriftEstimator(dt=dt, bin_width=width)
    diag = np.diag(M.J)[1:]
    aux = np.zeros((4, 0))
    counts = {"hit_zero": 0, "hit_cut": 0, "completed": 0}
    max_dev, defect = 0.0, 0.0
    guard = geom.r_max - 10 * math.sqrt(dt)
    for k in range(n_steps):
        idx = np.flatnonzero(alive)
        if not idx.size:
            break
        fr = frame_pair(geom, x[idx], y[idx])
        rho = fr.rho
        if check_frames:
            defect = max(defect, frame_defect(geom, x[idx], y[idx], fr))
        noise = normals(seed, ids[idx], k, 2 * geom.n)
        nx, ny = step_coupled(geom, x[idx], y[idx], M, dt, noise, frames=fr)
        x[idx], y[idx] = nx, ny
        new = geom.distance(nx, ny)
        est.partial_fit(rho, new - rho)
        kappa, mult = model.curvature_arrays(rho)
        a = kappa @ mult
        s = np.abs(kappa) @ mult
        per_dir = np.repeat(kappa, mult, axis=-1)
        bins = est.bin_index(rho)
        size = int(bins.max()) + 1
        if aux.shape[1] < size:
            aux = np.pad(aux, ((0, 0), (0, size - aux.shape[1])))
        for row, w in enumerate((a - per_dir @ diag, a - s, a + s, rho)):
            aux[row, :size] += np.bincount(bins, weights=w, minlength=size)
        max_dev = max(max_dev, float(np.max(np.abs(new - r0))))
        dead_zero = new <= dt
        dead_cut = new >= guard
        counts["hit_zero"] += int(dead_zero.sum())
        counts["hit_cut"] += int((dead_cut & ~dead_zero).sum())
        alive[idx[dead_zero | dead_cut]] = False
    counts["completed"] = int(alive.sum())
    return est, aux, counts, max_dev, defect


def frame_defect(geom, x, y, frames):
    """Largest violation of the frame invariants at ``y``.

    Covers orthonormality of the transported frame, tangency to the manifold
    at ``y``, and agreement of its first vector with the independently
    computed arrival direction ``-direction(y, x)``.
    """
    fy = frames.fy
    gram = geom.inner(fy[:, :, None, :], fy[:, None, :, :])
    ortho = np.max(np.abs(gram - np.eye(geom.n)))
    tangent = np.max(np.abs(geom.inner(y[:, None, :], fy))) if geom.space != "R" else 0.0
    arrival = np.max(np.abs(fy[:, 0] + geom.direction(y, x)))
    return float(max(ortho, tangent, arrival))


def run_oracle(space, n, coupling, r0, T, dt, seed, n_paths, bin_width=None, threads=1, check_frames=False):
    """Simulate coupled pairs and report binned drift and QV of their true distance.

    Parameters
    ----------
    space : {"S", "H", "R"}
        Unit sphere, hyperbolic space of curvature -1, or Euclidean space.
    n : int
        Manifold dimension.
    coupling : CouplingControl or CouplingMatrices
        Constant coupling in the frame of :func:`frame_pair`.
    r0, T, dt : float
    seed : int
    n_paths : int
    bin_width : float, optional
        Defaults to ``max(0.05, 5 sqrt(dt))``.
    threads : int
        Worker threads; the report does not depend on it.

    Returns
    -------
    OracleReport
        Rows also carry the reduced-model predictions ``M_pred`` (the
        sample-averaged :func:`~radcouple.control.drift_of`) and
        ``sigma2_pred`` (:func:`~radcouple.control.radial_qv`).
    """
    geom = SpaceFormEmbedding(space, n)
    n_steps = check_time_grid(T, dt)
    check_radius(r0, geom.r_max - 10 * math.sqrt(dt), "r0")
    n_paths = check_int(n_paths, "n_paths", 1)
    check_positive(dt, "dt")
    M = _as_matrices(coupling, n)
    width = bin_width if bin_width is not None else max(0.05, 5 * math.sqrt(dt))
    # fixed-size blocks merged in order keep the sums independent of ``threads``
    ids = np.arange(n_paths, dtype=np.uint64)
    chunks = [ids[i : i + _BLOCK] for i in range(0, n_paths, _BLOCK)]
    threads = max(1, min(int(threads), len(chunks)))

    def work(ids):
        return _oracle_chunk(geom, M, r0, n_steps, dt, seed, ids, width, check_frames)

    if threads == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))

    # merge chunk statistics in chunk order
    size = max(p[0]._sums.shape[1] for p in parts)
    sums = np.zeros((5, size))
    aux = np.zeros((4, size))
    counts = {"hit_zero": 0, "hit_cut": 0, "completed": 0}
    max_dev = defect = 0.0
    for est, a, c, dev, fd in parts:
        sums[:, : est._sums.shape[1]] += est._sums
        aux[:, : a.shape[1]] += a
        for key in counts:
            counts[key] += c[key]
        max_dev, defect = max(max_dev, dev), max(defect, fd)
    est = BinnedDriftEstimator(dt=dt, bin_width=width)
    est._sums = sums
    est._summarise()

    sigma2 = radial_qv(M)
    rows = []
    for j, b in enumerate(est.bin_index_):
        cnt = est.counts_[j]
        rows.append(
            OracleRow(
                r_bin=float(est.bin_centers_[j]),
                drift_est=float(est.drift_[j]),
                drift_se=float(est.drift_se_[j]),
                qv_est=float(est.qv_[j]),
                qv_se=float(est.qv_se_[j]),
                M_pred=float(aux[0, b] / cnt),
                sigma2_pred=sigma2,
                n_samples=int(cnt),
                rho_mean=float(aux[3, b] / cnt),
                lo_mean=float(aux[1, b] / cnt),
                hi_mean=float(aux[2, b] / cnt),
            )
        )
    return OracleReport(space, n, float(r0), float(T), float(dt), n_paths, int(seed), float(width),
                        tuple(rows), counts, max_dev, defect)
