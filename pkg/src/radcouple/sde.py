"""The one-dimensional distance process and deterministic distance laws.

Stochastic paths use Euler-Maruyama with counter-based noise keyed on
``(seed, path, step)``; deterministic laws use classical RK4.  Paths are
absorbed at ``rho <= dt`` and at ``rho >= r_max - dt``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from ._validation import check_int, check_radius, check_time_grid
from .control import CouplingControl
from .estimators import AsymptoticSpeedEstimator
from .exceptions import DomainError, PathTooShortError, WindowViolationError
from .rng import normals
from .window import synthesize_controls, window

__all__ = [
    "Termination",
    "DistancePath",
    "ControlSchedule",
    "diffusion_coefficient",
    "simulate_distance",
    "integrate_deterministic",
    "radial_process",
    "estimate_asymptotic_speed",
    "constant_target",
    "mean_curvature_target",
    "endpoint_target",
    "window_fraction_target",
]

REASONS = ("hit_zero", "hit_cut", "completed", "nonfinite")
_BLOCK = 8192


@dataclass(frozen=True)
class Termination:
    time: float
    reason: str


@dataclass(frozen=True)
class DistancePath:
    """Recorded distance values on a uniform time grid.

    ``values`` stops at the termination time; nothing is recorded after it.
    """

    times: np.ndarray
    values: np.ndarray
    seed: int
    path_id: int
    terminated: Termination

    @property
    def completed(self):
        return self.terminated.reason == "completed"


@dataclass(frozen=True)
class ControlSchedule:
    """How the coupling is chosen along a path.

    ``mode`` is one of ``constant_control`` (payload: :class:`CouplingControl`),
    ``target_speed_function`` (payload: callable ``(t, rho) -> speed``,
    vectorised over ``rho``), ``endpoint_synchronous`` or
    ``endpoint_reflection`` (payload: the radial correlation ``j_r``).
    """

    mode: str
    payload: Any = None

    def __post_init__(self):
        if self.mode == "constant_control":
            if not isinstance(self.payload, CouplingControl):
                raise DomainError("constant_control needs a CouplingControl payload")
        elif self.mode == "target_speed_function":
            if not callable(self.payload):
                raise DomainError("target_speed_function needs a callable payload")
        elif self.mode in ("endpoint_synchronous", "endpoint_reflection"):
            j_r = 1.0 if self.payload is None else float(self.payload)
            if not -1.0 <= j_r <= 1.0:
                raise DomainError(f"j_r={j_r} outside [-1, 1]")
            object.__setattr__(self, "payload", j_r)
        else:
            raise DomainError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def constant(cls, control):
        return cls("constant_control", control)

    @classmethod
    def target(cls, speed):
        return cls("target_speed_function", speed)

    @classmethod
    def synchronous(cls):
        return cls("endpoint_synchronous", 1.0)

    @classmethod
    def reflection(cls, j_r=1.0):
        return cls("endpoint_reflection", j_r)

    @property
    def j_r(self):
        if self.mode == "constant_control":
            return self.payload.j_r
        if self.mode == "target_speed_function":
            return 1.0
        return self.payload

    def sigma(self):
        if self.mode == "constant_control":
            return diffusion_coefficient(self.payload)
        return math.sqrt(2.0 * (1.0 - self.j_r))


def diffusion_coefficient(control):
    """``sqrt((1 - j_r)^2 + k_r^2)``."""
    return math.sqrt((1.0 - control.j_r) ** 2 + control.k_r**2)


def _drift_function(model, schedule):
    """Vectorised ``(t, rho) -> M`` for a schedule."""
    mode = schedule.mode
    if mode == "target_speed_function":
        speed = schedule.payload

        def drift(t, rho):
            kappa, mult = model.curvature_arrays(rho)
            a = kappa @ mult
            s = np.abs(kappa) @ mult
            v = np.broadcast_to(np.asarray(speed(t, rho), dtype=float), rho.shape)
            bad = (v < a - s - 1e-9) | (v > a + s + 1e-9)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise WindowViolationError(t, float(rho[i]), window(model, float(rho[i])), float(v[i]))
            return v

        return drift

    if mode == "constant_control":
        control = schedule.payload
        if control.multiplicity != model.dim - 1:
            raise DomainError(f"control has {control.multiplicity} directions, model needs {model.dim - 1}")
        alphas = control.alpha_values

        def drift(t, rho):
            kappa, mult = model.curvature_arrays(rho)
            per_dir = np.repeat(kappa, mult, axis=-1)
            return per_dir.sum(axis=-1) - per_dir @ alphas

        return drift

    sign = 1.0 if mode == "endpoint_reflection" else -1.0

    def drift(t, rho):
        kappa, mult = model.curvature_arrays(rho)
        return kappa @ mult + sign * (np.abs(kappa) @ mult)

    return drift


def _euler_maruyama(drift, sigma, r_max, rho0, n_steps, dt, seed, path_ids, record_every):
    """Vectorised EM over a chunk of paths; returns recorded values and termination data."""
    n = path_ids.size
    rho = np.full(n, float(rho0))
    alive = np.ones(n, dtype=bool)
    stop_step = np.full(n, n_steps, dtype=np.int64)
    reason = np.full(n, REASONS.index("completed"), dtype=np.int64)
    rec = np.full((n_steps // record_every + 1, n), np.nan)
    rec[0] = rho
    sqdt = math.sqrt(dt)
    for k in range(n_steps):
        idx = np.flatnonzero(alive)
        if not idx.size:
            break
        cur = rho[idx]
        step = drift(k * dt, cur) * dt
        if sigma:
            step = step + sigma * sqdt * normals(seed, path_ids[idx], k, 1)[:, 0]
        new = cur + step
        rho[idx] = new
        for code, hit in (
            (REASONS.index("nonfinite"), ~np.isfinite(new)),
            (REASONS.index("hit_zero"), new <= dt),
            (REASONS.index("hit_cut"), new >= r_max - dt),
        ):
            done = idx[hit & alive[idx]]
            alive[done] = False
            stop_step[done] = k + 1
            reason[done] = code
        if (k + 1) % record_every == 0:
            row = (k + 1) // record_every
            rec[row, idx] = np.clip(rho[idx], 0.0, r_max)
            rec[row, idx[~np.isfinite(rho[idx])]] = np.nan
    return rec, stop_step, reason


def _run_paths(drift, sigma, r_max, rho0, T, dt, seed, n_paths, record_every, threads):
    n_steps = check_time_grid(T, dt)
    n_paths = check_int(n_paths, "n_paths", 1)
    record_every = check_int(record_every, "record_every", 1)
    if n_steps % record_every:
        raise DomainError(f"record_every={record_every} must divide the {n_steps} steps")
    check_radius(rho0, r_max, "rho0")
    ids = np.arange(n_paths, dtype=np.uint64)
    chunks = [ids[i : i + _BLOCK] for i in range(0, n_paths, _BLOCK)]
    threads = max(1, min(int(threads), len(chunks)))

    def work(ids):
        return _euler_maruyama(drift, sigma, r_max, rho0, n_steps, dt, seed, ids, record_every)

    if threads == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, chunks))
    times = np.arange(n_steps // record_every + 1) * record_every * dt
    paths = []
    for ids, (rec, stop, why) in zip(chunks, results):
        for j, pid in enumerate(ids):
            last = stop[j] // record_every
            vals = rec[: last + 1, j]
            vals = vals[np.isfinite(vals)]
            paths.append(
                DistancePath(times[: vals.size], vals, int(seed), int(pid),
                             Termination(stop[j] * dt, REASONS[why[j]]))
            )
    return paths


def simulate_distance(model, schedule, rho0, T, dt, seed, n_paths, record_every=1, threads=1):
    """Euler-Maruyama paths of ``d rho = M(rho) dt + sigma d beta``.

    Parameters
    ----------
    model : ModelManifold
    schedule : ControlSchedule
    rho0, T, dt : float
        Initial distance, horizon and step (``dt <= T/10``).
    seed : int
        Unsigned 64-bit key of the noise generator.
    n_paths : int
    record_every : int
        Record one value every this many steps (must divide the step count).
    threads : int
        Worker threads; results do not depend on it.

    Returns
    -------
    list of DistancePath
    """
    drift = _drift_function(model, schedule)
    return _run_paths(drift, schedule.sigma(), model.r_max, rho0, T, dt, seed, n_paths, record_every, threads)


def radial_process(model, r0, T, dt, seed, n_paths, record_every=1, threads=1):
    """Euler-Maruyama paths of ``d r = d beta + A(r)/2 dt``."""

    def drift(t, r):
        return 0.5 * model.mean_curvature(r)

    return _run_paths(drift, 1.0, model.r_max, r0, T, dt, seed, n_paths, record_every, threads)


def integrate_deterministic(model, target, rho0, T, dt):
    """RK4 solution of ``rho' = target(t, rho)`` with per-step control synthesis.

    The target speed is checked against the drift window at every grid point
    and the realizing controls are logged.

    Returns
    -------
    path : DistancePath
    controls : list of ControlSolution
        One per grid point.

    Raises
    ------
    WindowViolationError
        At the first grid point where the target leaves the window.
    DomainError
        If the solution leaves ``(0, r_max)``.
    """
    n_steps = check_time_grid(T, dt)
    rho = check_radius(rho0, model.r_max, "rho0")

    def speed(t, r):
        if not 0 < r < model.r_max:
            raise DomainError(f"distance law left (0, {model.r_max}) at t={t:.12g}: rho={r!r}")
        return float(target(t, r))

    values = np.empty(n_steps + 1)
    log = []
    for k in range(n_steps + 1):
        t = k * dt
        values[k] = rho
        v = speed(t, rho)
        w = window(model, rho)
        if not w.contains(v):
            raise WindowViolationError(t, rho, w, v)
        log.append(synthesize_controls(model, rho, v))
        if k == n_steps:
            break
        a = v
        b = speed(t + dt / 2, rho + dt / 2 * a)
        c = speed(t + dt / 2, rho + dt / 2 * b)
        d = speed(t + dt, rho + dt * c)
        rho = rho + dt / 6 * (a + 2 * b + 2 * c + d)
        if not 0 < rho < model.r_max:
            raise DomainError(f"distance law left (0, {model.r_max}) at t={t + dt:.12g}: rho={rho!r}")
    times = np.arange(n_steps + 1) * dt
    return DistancePath(times, values, 0, 0, Termination(n_steps * dt, "completed")), log


def estimate_asymptotic_speed(path, burn_in_fraction=0.5):
    """Regression slope of a completed path after burn-in; returns ``(slope, stderr)``."""
    if not path.completed:
        raise PathTooShortError(f"path terminated early ({path.terminated.reason})")
    est = AsymptoticSpeedEstimator(burn_in_fraction=burn_in_fraction).fit(path.times, path.values)
    return est.slope_, est.stderr_


# --------------------------------------------------------------------------
# target speed laws; each returns a callable (t, rho) -> speed, vectorised in rho


def constant_target(speed):
    return lambda t, rho: np.full(np.shape(rho), float(speed)) if np.ndim(rho) else float(speed)


def mean_curvature_target(model):
    """``rho' = A(rho)``: the centre of the window, ``alpha = 0``."""
    return lambda t, rho: model.mean_curvature(rho)


def endpoint_target(model, upper=True):
    sign = 1.0 if upper else -1.0

    def speed(t, rho):
        kappa, mult = model.curvature_arrays(rho)
        return kappa @ mult + sign * (np.abs(kappa) @ mult)

    return speed


def window_fraction_target(model, fraction: Callable[[float], float]):
    """``rho' = lo + fraction(t) * (hi - lo)``; admissible whenever ``0 <= fraction <= 1``."""

    def speed(t, rho):
        kappa, mult = model.curvature_arrays(rho)
        a = kappa @ mult
        s = np.abs(kappa) @ mult
        return a - s + fraction(t) * 2 * s

    return speed
