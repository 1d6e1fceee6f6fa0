"""Command-line experiment harness.

Usage::

    radcouple <command> --config run.json [--out DIR] [--seed N] [--threads N]

Commands: ``window-table``, ``simulate``, ``oracle-compare``,
``fixed-distance``, ``escape-speed``.  Each writes CSV files (header row,
numbers at 12 significant digits) and prints one ``PASS``/``FAIL`` line per
check.  Exit status: 0 all checks pass, 1 a check failed, 2 bad config,
3 domain error.  A file being written when a run aborts is left with a
``.partial`` suffix.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import is_flat, load_config, oracle_space
from .control import drift_of
from .exceptions import ConfigError, NoLimitError, RadCoupleError, WindowViolationError
from .geometry import SpaceForm
from .oracle import ORACLE_CSV_COLUMNS, run_oracle
from .sde import (
    _drift_function,
    constant_target,
    endpoint_target,
    estimate_asymptotic_speed,
    integrate_deterministic,
    radial_process,
    simulate_distance,
)
from .window import asymptotic_interval, fixed_distance_feasible, pp_window, window

__all__ = ["main", "Check", "CsvSink", "EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_DOMAIN"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3
THREADS_ENV = "RADCOUPLE_THREADS"


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % value
    return str(value)


class CsvSink:
    """CSV writer that only takes its final name once closed cleanly.

    Rows go to ``<path>.partial``; on normal exit the file is renamed, on an
    exception it is flushed and left in place.
    """

    def __init__(self, path, header):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")
        self.header = list(header)

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.partial, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.header)
        return self

    def write(self, row):
        self._writer.writerow([fmt(v) for v in row])

    def __exit__(self, exc_type, exc, tb):
        self._fh.close()
        if exc_type is None:
            os.replace(self.partial, self.path)
        return False


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.detail}" if self.detail else f"{tag} {self.name}"


def _out(cfg, suffix):
    return cfg.out_dir / f"{cfg.prefix}_{suffix}.csv"


def _write_paths(cfg, paths, name="paths"):
    with CsvSink(_out(cfg, name), ["t", "rho", "path_id"]) as sink:
        for p in paths:
            for t, r in zip(p.times, p.values):
                sink.write((float(t), float(r), p.path_id))


def _write_summary(cfg, rows):
    with CsvSink(_out(cfg, "summary"), ["quantity", "estimate", "stderr", "n"]) as sink:
        for row in rows:
            sink.write(row)


# --------------------------------------------------------------------------
# window-table


def cmd_window_table(cfg, threads=1):
    """Tabulate the general window and, for space forms, the closed-form one."""
    if not cfg.grid:
        raise ConfigError("window-table needs a grid")
    model = cfg.model
    header = ["r", "A", "abs_sum", "lo", "hi", "pp_lo", "pp_hi"]
    with CsvSink(_out(cfg, "window"), header) as sink:
        for r in cfg.grid:
            w = window(model, r)
            pp = pp_window(model.K, model.dim, r) if isinstance(model, SpaceForm) else (None, None)
            sink.write((r, w.mean, w.abs_sum, w.lo, w.hi, *pp))
    return []


# --------------------------------------------------------------------------
# simulate


def _simulate_deterministic(cfg, schedule):
    checks, paths, logs = [], [], []
    for i, r0 in enumerate(cfg.r0):
        try:
            path, log = integrate_deterministic(cfg.model, schedule.payload, r0, cfg.T, cfg.dt)
        except WindowViolationError as err:
            with CsvSink(_out(cfg, "violation"), ["path_id", "t", "rho", "lo", "hi", "speed"]) as sink:
                sink.write((i, err.t, err.rho, err.window.lo, err.window.hi, err.speed))
            return [Check("window", False, err.speed, err.window.hi, str(err))]
        paths.append(type(path)(path.times, path.values, cfg.seed, i, path.terminated))
        logs.append(log)
    _write_paths(cfg, paths)

    width = max(len(s.alphas) for log in logs for s in log)
    header = ["path_id", "t", "rho", "lam", "target", "achieved"] + [f"alpha_{j + 1}" for j in range(width)]
    alpha_max, fd_err = 0.0, 0.0
    with CsvSink(_out(cfg, "controls"), header) as sink:
        for path, log in zip(paths, logs):
            for t, r, sol in zip(path.times, path.values, log):
                alphas = [a for a, _ in sol.alphas]
                alpha_max = max(alpha_max, max(abs(a) for a in alphas))
                sink.write((path.path_id, float(t), float(r), sol.lam, sol.target_speed, sol.achieved_speed, *alphas))
            if path.values.size >= 3:
                fd = (path.values[2:] - path.values[:-2]) / (2 * cfg.dt)
                target = np.array([sol.target_speed for sol in log[1:-1]])
                fd_err = max(fd_err, float(np.max(np.abs(fd - target))))
    c = cfg.checks
    fd_tol = c["fd_factor"] * cfg.dt**2
    _write_summary(cfg, [("max_abs_alpha", alpha_max, 0.0, len(paths)), ("fd_speed_error", fd_err, 0.0, len(paths))])
    checks.append(Check("window", True, detail=f"target inside the window along {len(paths)} path(s)"))
    checks.append(Check("alpha_range", alpha_max <= 1 + c["alpha_tol"], alpha_max, 1.0, f"max |alpha| = {alpha_max:.12g}"))
    checks.append(Check("fd_speed", fd_err <= fd_tol, fd_err, fd_tol, f"max |fd - target| = {fd_err:.3e} <= {fd_tol:.3e}"))
    return checks


def _qv_rates(paths, drift, dt, T):
    rates = []
    for p in paths:
        if not p.completed:
            continue
        inc = np.diff(p.values) - drift(p.times[:-1], p.values[:-1]) * dt
        rates.append(float(inc @ inc) / T)
    return np.asarray(rates)


def _mean_se(x):
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def _simulate_stochastic(cfg, mode, schedule, threads):
    c = cfg.checks
    checks, summary = [], []
    r0 = cfg.r0[0]
    if mode == "radial_process":
        paths = radial_process(cfg.model, r0, cfg.T, cfg.dt, cfg.seed, cfg.n_paths, cfg.record_every, threads)
    else:
        paths = simulate_distance(cfg.model, schedule, r0, cfg.T, cfg.dt, cfg.seed, cfg.n_paths,
                                  cfg.record_every, threads)
    _write_paths(cfg, paths)
    final = np.array([p.values[-1] for p in paths])
    reasons = [p.terminated.reason for p in paths]
    mean, se = _mean_se(final)
    summary.append(("rho_T", mean, se, final.size))
    for why in ("completed", "hit_zero", "hit_cut", "nonfinite"):
        summary.append((f"n_{why}", reasons.count(why), 0.0, len(paths)))

    if mode == "radial_process":
        # stopped paths keep their absorbed value
        sq, sq_se = _mean_se(final**2 - r0**2)
        summary.append(("second_moment_gain", sq, sq_se, final.size))
        if is_flat(cfg.model):
            expected = cfg.model.dim * cfg.T
            tol = c["se_multiplier"] * sq_se
            checks.append(Check("second_moment", abs(sq - expected) <= tol, sq, expected,
                                f"E[r_T^2] - r_0^2 = {sq:.6g} +- {sq_se:.2g}, expected {expected:.6g}"))
    elif cfg.record_every == 1:
        sigma2 = schedule.sigma() ** 2
        rates = _qv_rates(paths, _drift_function(cfg.model, schedule), cfg.dt, cfg.T)
        q, q_se = _mean_se(rates)
        summary.append(("qv_rate", q, q_se, rates.size))
        if rates.size:
            tol = c["qv_rel_tol"] * sigma2 + c["se_multiplier"] * (0.0 if math.isnan(q_se) else q_se) + 1e-20
            checks.append(Check("qv_rate", abs(q - sigma2) <= tol, q, sigma2,
                                f"realized QV rate {q:.6g} vs sigma^2 = {sigma2:.6g}"))
    _write_summary(cfg, summary)
    return checks


def cmd_simulate(cfg, threads=1):
    """Reduced distance paths, deterministic laws or the radial process."""
    if cfg.coupling is None:
        raise ConfigError("simulate needs a coupling block")
    mode = cfg.coupling.mode
    if mode == "matrices":
        raise ConfigError("simulate takes a reduced control, not full matrices")
    if mode == "target_speed_function":
        return _simulate_deterministic(cfg, cfg.coupling.schedule)
    return _simulate_stochastic(cfg, mode, cfg.coupling.schedule, threads)


# --------------------------------------------------------------------------
# oracle-compare


def _oracle_coupling(cfg):
    cp = cfg.coupling
    if cp is None or (cp.control is None and cp.matrices is None):
        raise ConfigError("oracle-compare needs a constant coupling (control, endpoint or matrices)")
    return cp.control if cp.control is not None else cp.matrices


def _bias_constants(report, fine, dt):
    """Per-bin first-order bias constants from a run at ``dt/2``."""
    drift_c, qv_c = {}, {}
    fine_rows = {round(r.r_bin, 9): r for r in fine.rows}
    for row in report.rows:
        other = fine_rows.get(round(row.r_bin, 9))
        if other is not None:
            drift_c[row.r_bin] = abs(row.drift_est - other.drift_est) / (dt / 2)
            qv_c[row.r_bin] = abs(row.qv_est - other.qv_est) / (dt / 2)
    return drift_c, qv_c


def _oracle_checks(cfg, report, drift_c, qv_c, label):
    c = cfg.checks
    k, dt = c["se_multiplier"], report.dt
    rows = [r for r in report.rows if r.n_samples >= c["min_bin_samples"]]
    if c["at_r"] is not None:
        rows = [r for r in rows if abs(r.r_bin - c["at_r"]) < report.bin_width / 2]
    if not rows:
        return [Check(f"{label}bins", False, detail="no bin with enough samples")]
    checks = []

    def worst(name, excess_of):
        excess = [(excess_of(r), r) for r in rows]
        e, r = max(excess, key=lambda p: p[0])
        return Check(name, e <= 0, e, 0.0, f"worst bin r={r.r_bin:.4g}: excess over band {e:.3g}")

    if c["check_reduced"]:
        checks.append(worst(f"{label}drift_vs_reduced", lambda r: abs(r.drift_delta) - (k * r.drift_se + drift_c.get(r.r_bin, 0.0) * dt)))
        checks.append(worst(f"{label}qv_vs_reduced", lambda r: abs(r.qv_delta) - (k * r.qv_se + qv_c.get(r.r_bin, 0.0) * dt)))
    if c["check_window"]:
        checks.append(worst(f"{label}window", lambda r: max(r.lo_mean - k * r.drift_se - r.drift_est,
                                                             r.drift_est - r.hi_mean - k * r.drift_se)))
    checks.append(Check(f"{label}frames", report.frame_defect <= 1e-8, report.frame_defect, 1e-8,
                        f"frame invariant defect {report.frame_defect:.2e}"))
    return checks


def cmd_oracle_compare(cfg, threads=1):
    """Brute-force two-point simulation against the reduced drift and QV."""
    space = oracle_space(cfg.model)
    coupling = _oracle_coupling(cfg)
    o = cfg.oracle
    width = o.get("bin_width", max(0.05, 5 * math.sqrt(o["dt"])))
    checks = []
    for i, r0 in enumerate(cfg.r0):
        report = run_oracle(space, cfg.model.dim, coupling, r0, o["T"], o["dt"], cfg.seed, o["n_paths"],
                            bin_width=width, threads=threads, check_frames=True)
        with CsvSink(_out(cfg, f"oracle_{i}"), ORACLE_CSV_COLUMNS) as sink:
            for row in report.csv_rows():
                sink.write(row)
        bias = cfg.checks["bias_constant"]
        if bias == "fit":
            fine = run_oracle(space, cfg.model.dim, coupling, r0, o["T"], o["dt"] / 2, cfg.seed, o["n_paths"],
                              bin_width=width, threads=threads)
            drift_c, qv_c = _bias_constants(report, fine, o["dt"])
        else:
            drift_c = qv_c = {row.r_bin: float(bias) for row in report.rows}
        label = f"r0={r0:g} " if len(cfg.r0) > 1 else ""
        checks.extend(_oracle_checks(cfg, report, drift_c, qv_c, label))
    return checks


# --------------------------------------------------------------------------
# fixed-distance


def cmd_fixed_distance(cfg, threads=1):
    """Fixed-distance feasibility, reduced constancy and oracle band."""
    c, o = cfg.checks, cfg.oracle
    model = cfg.model
    try:
        space = oracle_space(model)
    except ConfigError:
        space = None
    checks = []
    header = ["r0", "A", "abs_sum", "equality_defect", "feasible", "lam", "alpha_min", "alpha_max",
              "reduced_max_dev", "oracle_max_dev", "band"]
    with CsvSink(_out(cfg, "fixed_distance"), header) as sink:
        for r0 in cfg.r0:
            spec = model.spectrum(r0)
            defect = abs(spec.mean - spec.abs_sum)
            feasible, sol = fixed_distance_feasible(model, r0)
            checks.append(Check(f"r0={r0:g} feasible", feasible, spec.mean - spec.abs_sum, 0.0,
                                f"A - sum|kappa| = {spec.mean - spec.abs_sum:.3e}"))
            if c["equality_defect_tol"] is not None:
                tol = c["equality_defect_tol"]
                checks.append(Check(f"r0={r0:g} equality_defect", defect < tol, defect, tol, f"{defect:.3e} < {tol:g}"))
            if not feasible:
                sink.write((r0, spec.mean, spec.abs_sum, defect, False, None, None, None, None, None, None))
                continue
            alphas = [a for a, _ in sol.alphas]
            path, _ = integrate_deterministic(model, constant_target(0.0), r0, cfg.T, cfg.dt)
            red_dev = float(np.max(np.abs(path.values - r0)))
            checks.append(Check(f"r0={r0:g} reduced_constant", red_dev <= 1e-9, red_dev, 1e-9,
                                f"max |rho - r0| = {red_dev:.3e}"))
            dev = band = None
            if space is not None:
                report = run_oracle(space, model.dim, sol.control(), r0, o["T"], o["dt"], cfg.seed, o["n_paths"],
                                    threads=threads)
                dev = report.max_abs_deviation
                band = c["band_factor"] * math.sqrt(o["dt"]) * math.sqrt(o["T"])
                checks.append(Check(f"r0={r0:g} oracle_band", dev <= band, dev, band,
                                    f"max |rho_t - r0| = {dev:.4g} vs band {band:.4g}"))
            sink.write((r0, spec.mean, spec.abs_sum, defect, True, sol.lam, min(alphas), max(alphas), red_dev, dev, band))
    return checks


# --------------------------------------------------------------------------
# escape-speed


def _escape_target(cfg):
    cp, model = cfg.coupling, cfg.model
    if cp is None:
        raise ConfigError("escape-speed needs a coupling block")
    if cp.mode == "endpoint_reflection":
        return endpoint_target(model, True), "hi"
    if cp.mode == "endpoint_synchronous":
        return endpoint_target(model, False), "lo"
    if cp.mode == "target_speed_function":
        return cp.schedule.payload, cp.law
    if cp.mode == "constant_control":
        drift = _drift_function(model, cp.schedule)
        return (lambda t, r: float(drift(t, np.asarray([r]))[0])), cp.control
    raise ConfigError(f"escape-speed does not support coupling mode {cp.mode!r}")


def _expected_speed(model, kind):
    """Limit of the target speed, or ``None`` when no positive limit exists."""
    try:
        interval = asymptotic_interval(model)
    except NoLimitError:
        return None
    if kind == "hi":
        v = interval.hi
    elif kind == "lo":
        v = interval.lo
    elif isinstance(kind, dict):
        law = kind["type"]
        if law == "constant":
            v = kind["speed"]
        elif law == "mean_curvature":
            v = interval.A_inf
        elif law == "endpoint":
            v = interval.hi if kind.get("upper", True) else interval.lo
        else:
            v = interval.lo + kind["fraction"] * (interval.hi - interval.lo)
    else:
        v = drift_of(kind, model.spectrum(80.0 / model.asymptotic_scale))
    return v if abs(v) > 1e-6 else None


def cmd_escape_speed(cfg, threads=1):
    """Asymptotic speed of a deterministic distance law by regression."""
    target, kind = _escape_target(cfg)
    expected = _expected_speed(cfg.model, kind)
    c = cfg.checks
    checks, paths = [], []
    header = ["r0", "slope", "stderr", "expected", "rho_T", "rho_T_over_T"]
    with CsvSink(_out(cfg, "escape"), header) as sink:
        for i, r0 in enumerate(cfg.r0):
            path, _ = integrate_deterministic(cfg.model, target, r0, cfg.T, cfg.dt)
            slope, se = estimate_asymptotic_speed(path, cfg.burn_in_fraction)
            ratio = float(path.values[-1] / cfg.T)
            sink.write((r0, slope, se, expected, float(path.values[-1]), ratio))
            paths.append(type(path)(path.times[:: cfg.record_every], path.values[:: cfg.record_every],
                                    cfg.seed, i, path.terminated))
            if expected is not None:
                rel = abs(slope - expected) / abs(expected)
                checks.append(Check(f"r0={r0:g} slope", rel <= c["slope_rel_tol"], rel, c["slope_rel_tol"],
                                    f"slope {slope:.6g} vs {expected:.6g} (rel {rel:.2e})"))
            else:
                checks.append(Check(f"r0={r0:g} sublinear", ratio < c["sublinear_tol"], ratio, c["sublinear_tol"],
                                    f"rho(T)/T = {ratio:.4g} < {c['sublinear_tol']:g}"))
    _write_paths(cfg, paths)
    return checks


COMMANDS = {
    "window-table": cmd_window_table,
    "simulate": cmd_simulate,
    "oracle-compare": cmd_oracle_compare,
    "fixed-distance": cmd_fixed_distance,
    "escape-speed": cmd_escape_speed,
}


def _threads(arg):
    if arg is not None:
        value = arg
    else:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    if value < 1:
        raise ConfigError(f"thread count must be positive, got {value}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="radcouple", description="Coupled Brownian distance experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides integrator.seed)")
        p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        threads = _threads(args.threads)
        cfg = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out)
        checks = COMMANDS[args.command](cfg, threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RadCoupleError as err:
        print(f"domain error: {err}", file=sys.stderr)
        return EXIT_DOMAIN

    if checks:
        with CsvSink(_out(cfg, "checks"), ["check", "status", "value", "threshold"]) as sink:
            for chk in checks:
                sink.write((chk.name, "PASS" if chk.passed else "FAIL", chk.value, chk.threshold))
    for chk in checks:
        print(chk.line())
    return EXIT_PASS if all(chk.passed for chk in checks) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
