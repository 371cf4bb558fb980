"""Experiment orchestration: single runs, sweeps, and report/CSV emission."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .discretization import Field, Mesh, continuum_first_eigenvalue, first_eigenvalue, grad_norm_sq
from .errors import ConfigError, DomainError, NumericalError
from .evolution import (
    Outcome,
    decay_rates,
    dL2_identity_check,
    energy_identity_residual,
    simulate,
    verify_decay,
)
from .functionals import d0_lower_bound, energy_J, nehari_I, sobolev_search, validate_params
from .sampling import sine_mode, sine_series
from .stationary import GroundStateConfig, omega_limit_analysis
from .well import (
    Classification,
    classify,
    gn_constant_estimate,
    level_set_bounds,
    sample_nehari_levelset,
    well_depth,
)

logger = logging.getLogger(__name__)

OUTPUT_ENV = "KIRCHHOFF_WELL_OUTPUT"
FLOAT_FMT = "%.16e"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4

PASS, FAIL = "PASS", "FAIL"


def skipped(reason: str) -> str:
    return f"SKIPPED({reason})"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    if x is None:
        return ""
    return str(x)


def output_dir(cfg: ExperimentConfig) -> Path:
    """Output directory, overridden by ``$KIRCHHOFF_WELL_OUTPUT`` when set."""
    root = os.environ.get(OUTPUT_ENV)
    return Path(root) if root else cfg.output_dir


def initial_field(cfg: ExperimentConfig) -> Field:
    init, mesh = cfg.init, cfg.mesh
    if init.family == "sine-mode":
        base = sine_mode(mesh, init.mode)
    elif init.family == "gaussian-bump":
        coords = mesh.coordinates()
        r2 = sum(((x / L - init.center) / init.width) ** 2 for x, L in zip(coords, mesh.extents))
        env = np.prod([np.sin(np.pi * x / L) for x, L in zip(coords, mesh.extents)], axis=0)
        base = Field(mesh, np.exp(-0.5 * r2) * env)
    elif init.family == "fourier-random":
        base = sine_series(mesh, np.random.default_rng(init.seed))
    else:
        base = read_field_csv(init.file, mesh)
    return init.amplitude * base


def write_field_csv(u: Field, path) -> None:
    coords = [c.ravel() for c in u.mesh.coordinates()]
    names = ["x", "y"][: u.mesh.dimension]
    data = np.column_stack(coords + [u.values.ravel()])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(names + ["value"]), comments="")


def read_field_csv(path, mesh: Mesh) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != mesh.size:
        raise ConfigError([f"init.file {path}: expected {mesh.size} rows, got {data.shape[0]}"])
    return Field(mesh, data[:, -1])


def write_summary_csv(items: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in items.items():
            w.writerow([k, fmt(v)])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return str(o)


@dataclass
class RunReport:
    config: dict
    outcome: str
    blowup_time: float | None
    classification: str
    d_reference: str
    S: float
    d0: float
    d_est: float | None
    lambda1: float
    lambda1_continuum: float
    checks: dict[str, str] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_CHECK_FAILED if any(v == FAIL for v in self.checks.values()) else EXIT_OK

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "outcome": self.outcome,
            "blowup_time": self.blowup_time,
            "numerical_blowup": self.outcome == Outcome.BLOW_UP.value,
            "classification_u0": self.classification,
            "classification_relative_to": self.d_reference,
            "S": self.S,
            "d0": self.d0,
            "d_est": self.d_est,
            "lambda1_h": self.lambda1,
            "lambda1_continuum": self.lambda1_continuum,
            "checks": self.checks,
            "values": self.values,
            "files": self.files,
            "exit_code": self.exit_code,
        }


def _well_check(cfg: ExperimentConfig, S: float, d0: float, report_values: dict, checks: dict):
    """Well depth estimate plus its d_est >= d0 check."""
    mesh, p, an = cfg.mesh, cfg.params, cfg.analysis
    wr = well_depth(mesh, p, GroundStateConfig(starts=an.starts, seed=cfg.seed), sobolev_starts=an.starts)
    report_values.update(d_est=wr.d_est, d_est_spread=wr.spread, ground_state_residual=wr.ground_state.residual)
    checks["well_depth_d_est_ge_d0"] = PASS if wr.d_est >= d0 * (1 - 1e-12) else FAIL
    return wr


def bounds_analysis(cfg: ExperimentConfig, d_est: float, S: float, values: dict, checks: dict):
    mesh, p, an = cfg.mesh, cfg.params, cfg.analysis
    s = an.bounds_s_factor * d_est
    gn = gn_constant_estimate(mesh, p, samples=an.gn_samples, seed=cfg.seed)
    bounds = level_set_bounds(s, p, mesh, d_est, an.gn_safety * gn.G, S)
    sample = sample_nehari_levelset(s, p, mesh, an.bounds_samples, seed=cfg.seed)
    values.update(bounds_s=s, G_est=gn.G, G_used=bounds.G, K1=bounds.K1, K2=bounds.K2, theta=bounds.theta)
    if not sample.fields:
        for k in ("bounds_K2", "bounds_K1_G_conditional", "bounds_theta"):
            checks[k] = skipped("no retained Nehari samples; increase analysis.bounds_samples")
        return bounds, sample
    bounds = bounds.with_samples(sample)
    min_grad = min(grad_norm_sq(v) for v in sample.fields)
    values.update(
        empirical_lambda_s=sample.lambda_s,
        empirical_Lambda_s=sample.Lambda_s,
        retained_samples=len(sample.fields),
        min_grad_norm_sq=min_grad,
    )
    checks["bounds_K2"] = PASS if bounds.K2_holds else FAIL
    checks["bounds_K1_G_conditional"] = PASS if bounds.K1_consistent else FAIL
    checks["bounds_theta"] = PASS if min_grad >= bounds.theta**2 else FAIL
    return bounds, sample


def run_experiment(cfg: ExperimentConfig, out: Path | None = None) -> RunReport:
    """Build u0, compute S/d0 (and optionally d_est), simulate, run enabled analyses, write files.

    Files go to ``out`` if given, else :func:`output_dir`.
    """
    mesh, p, an = cfg.mesh, cfg.params, cfg.analysis
    out = Path(out) if out is not None else output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    u0 = initial_field(cfg)

    S = sobolev_search(mesh, p.q, starts=an.starts, seed=cfg.seed).S
    validate_params(p, S)
    d0 = d0_lower_bound(p, S)
    lam1 = first_eigenvalue(mesh)
    values: dict[str, float] = {"S": S, "d0": d0, "lambda1_h": lam1, "lambda1_continuum": continuum_first_eigenvalue(mesh)}
    checks: dict[str, str] = {}

    d_est = None
    if an.well_depth or an.bounds:
        d_est = _well_check(cfg, S, d0, values, checks).d_est
    else:
        checks["well_depth_d_est_ge_d0"] = skipped("analysis.well_depth disabled")
    d_ref, d_ref_kind = (d_est, "d_est") if d_est is not None else (d0, "d0 (lower bound for d)")
    cls = classify(u0, p, d_ref)
    J0, I0 = energy_J(u0, p), nehari_I(u0, p)
    values.update(J0=J0, I0=I0)

    traj = simulate(u0, p, cfg.time)
    traj_path = out / "trajectory.csv"
    traj.write_csv(traj_path)
    files = {"trajectory": str(traj_path)}

    if traj.outcome is Outcome.BLOW_UP:
        checks["energy_identity"] = skipped("numerical blow-up; identity only meaningful before blow-up")
    else:
        res = energy_identity_residual(traj)
        values.update(energy_identity_residual=res, dL2_identity_residual=dL2_identity_check(traj))
        checks["energy_identity"] = PASS if res <= an.energy_tol else FAIL

    if not an.verify_decay:
        checks["decay"] = skipped("analysis.verify_decay disabled")
    elif cls not in (Classification.INSIDE_W, Classification.ZERO):
        checks["decay"] = skipped(f"u0 classified {cls.value}, needs InsideW")
    elif not (0 <= J0 < d0):
        checks["decay"] = skipped("J(u0) >= d0, explicit rates not available")
    else:
        rates = decay_rates(J0, d0, p, lam1)
        ver = verify_decay(traj, rates, p, S, slack=an.decay_slack)
        values.update(C1=rates.C1, C2=rates.C2, alpha=rates.alpha, decay_ratio=rates.ratio)
        if ver.fitted_L2_exponent is not None:
            values["fitted_L2_exponent"] = ver.fitted_L2_exponent
        for c in ver.checks:
            values[f"decay_{c.name}_max_rel_violation"] = c.max_relative_violation
            checks[f"decay_{c.name}"] = PASS if c.passed else FAIL

    if not an.omega_limit:
        checks["omega_limit"] = skipped("analysis.omega_limit disabled")
    elif traj.outcome is Outcome.BLOW_UP:
        checks["omega_limit"] = skipped("trajectory blew up")
    else:
        om = omega_limit_analysis(traj, p)
        values.update(
            omega_final_residual=float(om.residuals[-1]),
            omega_distance=om.distance,
            omega_J_limit=om.J_limit,
            omega_residual_bound_ratio=om.residual_bound_ratio,
        )
        lim_path = out / "omega_limit.csv"
        write_field_csv(om.limit, lim_path)
        files["omega_limit"] = str(lim_path)
        checks["omega_limit_residual_bound"] = PASS if om.residual_bound_ratio <= 1.2 else FAIL
        checks["omega_limit_J_monotone"] = PASS if np.all(np.diff(om.J) <= 1e-12 * max(1.0, abs(om.J[0]))) else FAIL

    if an.bounds:
        bounds_analysis(cfg, d_est, S, values, checks)
    else:
        checks["bounds"] = skipped("analysis.bounds disabled")

    report = RunReport(
        config=cfg.echo(),
        outcome=traj.outcome.value,
        blowup_time=traj.blowup_time,
        classification=cls.value,
        d_reference=d_ref_kind,
        S=S,
        d0=d0,
        d_est=d_est,
        lambda1=lam1,
        lambda1_continuum=continuum_first_eigenvalue(mesh),
        checks=checks,
        values=values,
        files=files,
    )
    summary_path = out / "summary.csv"
    summary = {"outcome": report.outcome, "blowup_time": traj.blowup_time, "classification_u0": cls.value}
    summary.update(values)
    summary.update({f"check.{k}": v for k, v in checks.items()})
    write_summary_csv(summary, summary_path)
    files["summary"] = str(summary_path)
    write_json(report.to_dict(), out / "report.json")
    return report


SWEEP_COLUMNS = ("value", "outcome", "blowup_time", "J0", "I0", "classification", "exit_code", "error")


def run_sweep(text: str, axis: str, values: list, workers: int = 1, overrides: dict | None = None) -> list[dict]:
    """Run one experiment per axis value (optionally concurrently); write ``sweep.csv``.

    Failures are recorded per row and do not stop the sweep.
    """
    base = parse_config(text, overrides)
    if axis not in base.raw:
        raise ConfigError([f"sweep axis {axis!r} is not a config key"])
    root = output_dir(base)

    def one(k_value):
        k, value = k_value
        run_dir = root / f"run_{k:03d}"
        row = {"value": value, "outcome": "", "blowup_time": None, "J0": None, "I0": None,
               "classification": "", "exit_code": EXIT_OK, "error": ""}
        try:
            cfg = parse_config(text, {**(overrides or {}), axis: value, "output.dir": str(run_dir)})
            rep = run_experiment(cfg, run_dir)
            row.update(outcome=rep.outcome, blowup_time=rep.blowup_time, J0=rep.values["J0"],
                       I0=rep.values["I0"], classification=rep.classification, exit_code=rep.exit_code)
        except ConfigError as exc:
            row.update(exit_code=EXIT_CONFIG, error=str(exc))
        except (NumericalError, DomainError) as exc:
            row.update(exit_code=EXIT_NUMERICAL, error=str(exc))
        return row

    root.mkdir(parents=True, exist_ok=True)
    items = list(enumerate(values))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, items))
    else:
        rows = [one(it) for it in items]
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in SWEEP_COLUMNS])
    return rows

