import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.special import erf

from radcouple.control import CouplingControl, reflection_control
from radcouple.estimators import BinnedDriftEstimator
from radcouple.exceptions import DomainError, PathTooShortError, WindowViolationError
from radcouple.geometry import SpaceForm
from radcouple.sde import (
    ControlSchedule,
    _drift_function,
    constant_target,
    diffusion_coefficient,
    endpoint_target,
    estimate_asymptotic_speed,
    integrate_deterministic,
    mean_curvature_target,
    radial_process,
    simulate_distance,
)
from radcouple.window import window

H2 = SpaceForm(2, -1.0)
H3 = SpaceForm(3, -1.0)
R2 = SpaceForm(2, 0.0)


def _fine_rk4(rhs, y0, T):
    sol = solve_ivp(lambda t, y: [rhs(y[0])], (0.0, T), [y0], method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[0, -1]


def _mean_sd(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size)


# ---------------------------------------------------------------- coefficients


@pytest.mark.parametrize(
    "j_r, k_r, sigma",
    [(1.0, 0.0, 0.0), (-1.0, 0.0, 2.0), (0.0, 1.0, math.sqrt(2.0))],
)
def test_diffusion_coefficient(j_r, k_r, sigma):
    assert diffusion_coefficient(CouplingControl(((1.0, 1),), j_r=j_r, k_r=k_r)) == pytest.approx(sigma, abs=1e-15)


def test_schedule_validation():
    with pytest.raises(DomainError):
        ControlSchedule("bogus")
    with pytest.raises(DomainError):
        ControlSchedule("constant_control", 3)
    with pytest.raises(DomainError):
        ControlSchedule.reflection(2.0)
    assert ControlSchedule.reflection(-1.0).sigma() == pytest.approx(2.0)
    assert ControlSchedule.synchronous().sigma() == 0.0


def test_control_dimension_mismatch():
    with pytest.raises(DomainError):
        simulate_distance(H3, ControlSchedule.constant(reflection_control(2)), 1.0, 1.0, 0.1, 0, 1)


def test_grid_validation():
    sched = ControlSchedule.synchronous()
    with pytest.raises(DomainError):
        simulate_distance(H2, sched, 1.0, 1.0, 0.2, 0, 1)
    with pytest.raises(DomainError):
        simulate_distance(H2, sched, -1.0, 1.0, 0.01, 0, 1)
    with pytest.raises(DomainError):
        simulate_distance(H2, sched, 1.0, 1.0, 0.01, 0, 1, record_every=3)


# ---------------------------------------------------------------- simulate_distance


def test_synchronous_is_constant():
    paths = simulate_distance(H2, ControlSchedule.synchronous(), 1.0, 2.0, 1e-3, 7, 3)
    for p in paths:
        assert p.completed
        assert p.values.size == 2001
        assert np.max(np.abs(p.values - 1.0)) <= 1e-12 * 2000


def test_deterministic_reflection_matches_fine_rk4():
    path = simulate_distance(H2, ControlSchedule.reflection(1.0), 1.0, 10.0, 1e-3, 0, 1)[0]
    ref = _fine_rk4(lambda r: 2.0 / math.tanh(r), 1.0, 10.0)
    # closed form cosh(rho) = cosh(1) exp(2t) as a cross-check of the reference
    assert ref == pytest.approx(math.acosh(math.cosh(1.0) * math.exp(20.0)), rel=1e-10)
    assert abs(path.values[-1] - ref) <= 1e-2


def test_classical_mirror_moments_flat():
    T, dt, n = 0.25, 1e-3, 100000
    sched = ControlSchedule.constant(CouplingControl(((-1.0, 1),), j_r=-1.0))
    paths = simulate_distance(R2, sched, 1.0, T, dt, 11, n, threads=4)
    # stopped martingale part N_tau = rho_tau - rho_0 - int_0^tau 2/rho ds, tau = min(T, absorption)
    mart = np.array([p.values[-1] - 1.0 - np.sum(2.0 / p.values[:-1]) * dt for p in paths])
    tau = np.array([p.terminated.time for p in paths])
    m, se = _mean_sd(mart)
    assert abs(m) <= 3 * se
    sq, sq_se = _mean_sd(mart**2 - 4.0 * tau)
    assert abs(sq) <= 3 * sq_se


def test_paths_respect_domain_and_stop():
    sched = ControlSchedule.constant(CouplingControl(((1.0, 1),), j_r=-1.0))
    S2 = SpaceForm(2, 1.0)
    dt = 1e-3
    paths = simulate_distance(S2, sched, math.pi - 0.2, 1.0, dt, 3, 200)
    reasons = {p.terminated.reason for p in paths}
    assert "hit_cut" in reasons
    for p in paths:
        assert np.all((p.values >= 0) & (p.values <= math.pi))
        assert p.values.size == p.times.size
        if not p.completed:
            assert p.times[-1] == pytest.approx(p.terminated.time)
            if p.terminated.reason == "hit_cut":
                assert p.values[-1] >= math.pi - dt
    low = simulate_distance(R2, sched, 0.05, 1.0, dt, 3, 200)
    assert any(p.terminated.reason == "hit_zero" and p.values[-1] <= dt for p in low)


def test_reproducible_across_threads_and_path_counts():
    sched = ControlSchedule.reflection(0.0)
    a = simulate_distance(H3, sched, 1.0, 0.5, 1e-3, 42, 20000, record_every=50, threads=1)
    b = simulate_distance(H3, sched, 1.0, 0.5, 1e-3, 42, 20000, record_every=50, threads=3)
    c = simulate_distance(H3, sched, 1.0, 0.5, 1e-3, 42, 5, record_every=50)
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.values, q.values)
        assert p.terminated == q.terminated
    for p, q in zip(a[:5], c):
        np.testing.assert_array_equal(p.values, q.values)
    d = simulate_distance(H3, sched, 1.0, 0.5, 1e-3, 43, 5, record_every=50)
    assert not np.array_equal(a[0].values, d[0].values)


def test_sigma_zero_matches_rk4_path():
    S3 = SpaceForm(3, 1.0)
    dt, T = 1e-3, 1.0
    sched = ControlSchedule.constant(CouplingControl(((0.5, 2),), j_r=1.0, k_r=0.0))
    path = simulate_distance(S3, sched, 1.0, T, dt, 0, 1)[0]
    drift = _drift_function(S3, sched)
    ref, _ = integrate_deterministic(S3, lambda t, r: float(drift(t, np.array([r]))[0]), 1.0, T, dt)
    assert np.max(np.abs(path.values - ref.values)) <= 10 * dt * T


def test_realized_quadratic_variation():
    S3 = SpaceForm(3, 1.0)
    control = CouplingControl(((0.2, 2),), j_r=0.0, k_r=1.0)
    sched = ControlSchedule.constant(control)
    dt = 1e-4
    path = simulate_distance(S3, sched, 1.2, 1.0, dt, 5, 1)[0]
    assert path.completed
    drift = _drift_function(S3, sched)
    inc = np.diff(path.values) - drift(0.0, path.values[:-1]) * dt
    assert np.sum(inc**2) == pytest.approx(diffusion_coefficient(control) ** 2 * 1.0, rel=0.05)


def test_window_confinement_in_expectation():
    control = CouplingControl(((0.3, 2),), j_r=-1.0)
    dt = 1e-3
    paths = simulate_distance(H3, ControlSchedule.constant(control), 1.0, 0.5, dt, 9, 20000, threads=4)
    est = BinnedDriftEstimator(dt=dt, bin_width=0.25)
    for p in paths:
        est.partial_fit(p.values[:-1], np.diff(p.values))
    for c, n, d, se in zip(est.bin_centers_, est.counts_, est.drift_, est.drift_se_):
        if n < 1000:
            continue
        w = window(H3, c)
        assert w.lo - 3 * se <= d <= w.hi + 3 * se


# ---------------------------------------------------------------- integrate_deterministic


def test_fixed_distance_on_sphere():
    S3 = SpaceForm(3, 1.0)
    path, controls = integrate_deterministic(S3, constant_target(0.0), 1.0, 2.0, 1e-2)
    assert np.all(path.values == 1.0)
    for sol in controls:
        ((a, m),) = sol.alphas
        assert (a, m) == (pytest.approx(1.0), 2)


def test_mean_curvature_law_matches_closed_form():
    T, dt = 5.0, 1e-3
    path, controls = integrate_deterministic(H2, mean_curvature_target(H2), 1.0, T, dt)
    # rho' = coth(rho) integrates to cosh(rho) = cosh(1) e^t
    exact = np.arccosh(math.cosh(1.0) * np.exp(path.times))
    assert np.max(np.abs(path.values - exact)) <= 1e-9
    assert path.values[-1] == pytest.approx(_fine_rk4(lambda r: 1.0 / math.tanh(r), 1.0, T), abs=1e-9)
    assert all(abs(a) <= 1e-12 for sol in controls for a, _ in sol.alphas)


def test_window_violation_at_start():
    with pytest.raises(WindowViolationError) as exc:
        integrate_deterministic(R2, constant_target(10.0), 1.0, 1.0, 0.01)
    err = exc.value
    assert err.t == 0.0
    assert err.rho == 1.0
    assert err.window.hi == pytest.approx(2.0)


def test_domain_exit_raises():
    # admissible at every grid point, but an RK4 stage overshoots the cut locus
    S2 = SpaceForm(2, 1.0)
    with pytest.raises(DomainError):
        integrate_deterministic(S2, endpoint_target(S2), 0.1, 10.0, 1.0)


def test_finite_difference_rederivation():
    S3 = SpaceForm(3, 1.0)
    dt = 1e-2

    def target(t, r):
        w = window(S3, r)
        return w.lo + (0.5 + 0.4 * math.sin(t)) * (w.hi - w.lo)

    path, _ = integrate_deterministic(S3, target, 1.0, 1.0, dt)
    v = path.values
    fd = (v[2:] - v[:-2]) / (2 * dt)
    want = np.array([target(t, r) for t, r in zip(path.times[1:-1], v[1:-1])])
    assert np.max(np.abs(fd - want)) <= 10 * dt**2


# ---------------------------------------------------------------- radial process


def test_radial_bessel_second_moment():
    T = 1.0
    paths = radial_process(R2, 1.0, T, 1e-3, 21, 100000, record_every=1000, threads=4)
    m, se = _mean_sd([p.values[-1] ** 2 - 1.0 for p in paths])
    assert abs(m - 2 * T) <= 3 * se


def test_radial_hyperbolic_mean_slope():
    T = 10.0
    paths = radial_process(H2, 5.0, T, 1e-2, 22, 20000, record_every=1000, threads=4)
    assert sum(not p.completed for p in paths) < 0.01 * len(paths)
    m, se = _mean_sd([(p.values[-1] - 5.0) / T for p in paths])
    assert abs(m - 0.5 / math.tanh(5.0)) <= 3 * se


def _bessel3_mean(a, t):
    s = math.sqrt(t)
    return s * math.sqrt(2 / math.pi) * math.exp(-a * a / (2 * t)) + (a + t / a) * erf(a / (s * math.sqrt(2)))


def test_radial_weak_error_halves():
    R3 = SpaceForm(3, 0.0)
    exact = _bessel3_mean(1.0, 1.0)
    errs = []
    for dt in (0.1, 0.05):
        paths = radial_process(R3, 1.0, 1.0, dt, 23, 400000, record_every=round(1.0 / dt), threads=4)
        errs.append(np.mean([p.values[-1] for p in paths]) - exact)
    assert 1.3 <= errs[0] / errs[1] <= 3.0


# ---------------------------------------------------------------- asymptotic speed


def test_reflection_speed_on_h3():
    path, _ = integrate_deterministic(H3, endpoint_target(H3), 1.0, 50.0, 1e-2)
    slope, se = estimate_asymptotic_speed(path, 0.5)
    assert slope == pytest.approx(4.0, rel=0.01)
    assert se < 1e-3


def test_constant_path_speed():
    path, _ = integrate_deterministic(H3, constant_target(0.0), 1.0, 5.0, 1e-2)
    assert estimate_asymptotic_speed(path) == (0.0, 0.0)


def test_mean_curvature_speed_on_h2():
    path, _ = integrate_deterministic(H2, mean_curvature_target(H2), 1.0, 30.0, 1e-2)
    assert estimate_asymptotic_speed(path)[0] == pytest.approx(1.0, rel=0.01)


def test_speed_needs_completed_long_path():
    path = simulate_distance(R2, ControlSchedule.reflection(-1.0), 0.05, 1.0, 1e-2, 0, 50)
    stopped = next(p for p in path if not p.completed)
    with pytest.raises(PathTooShortError):
        estimate_asymptotic_speed(stopped)
    short, _ = integrate_deterministic(H2, constant_target(0.0), 1.0, 0.1, 0.01)
    with pytest.raises(PathTooShortError):
        estimate_asymptotic_speed(short, 0.5)
    with pytest.raises(ValueError):
        estimate_asymptotic_speed(short, 0.95)
