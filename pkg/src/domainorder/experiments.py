"""Experiment harness: excess-loss sweep on random quadratics, 2-D bracket
field scan, per-domain loss dynamics, and the MLP intervention study.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns an
in-memory result; :func:`run_experiment` runs one and writes CSV files plus a
manifest. Everything is deterministic per config.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .commutator import (
    CALIBRATED_COEFFICIENT,
    lie_bracket_R,
    measure_excess_loss,
    p_value,
)
from .domain import (
    HvpConfig,
    QuadraticDomain,
    SyntheticConfig,
    combine_domains,
    gen_synthetic_datasets,
    init_mlp_params,
    make_mlp_domain,
    make_quadratic_domain,
)
from .errors import ArgumentError, NumericError
from .flow import (
    GdConfig,
    IntegratorConfig,
    QuadraticFlowEngine,
    Trajectory,
    discrete_gd,
    integrate_ode,
    write_checkpoints,
    write_trajectory_csv,
)
from .linalg import Prng, gaussian_vector, power_law_spectrum
from .reports import sha256_file, write_csv_report, write_json
from .schedule import (
    InterventionSpec,
    WeightSchedule,
    constant_schedule,
    to_fraction,
    validate_schedule,
)

log = logging.getLogger(__name__)

EXPERIMENTS = {
    "quad_commutation": "excess-loss ratio sweep on random quadratic pairs",
    "field_scan": "2-D grid of Lie-bracket dot products and sign regions",
    "loss_dynamics": "per-domain losses along constant-weight gradient flows",
    "mlp_intervention": "schedule interventions on two MLP regression domains",
}

AGGREGATE_SCHEMA = ["t", "eps", "median_ratio", "p10_ratio", "p90_ratio", "n_seeds"]
ROW_SCHEMA = [
    "t", "eps", "delta", "seed", "observed_12", "observed_21", "predicted", "ratio",
    "el12_L1", "el12_L2", "el21_L1", "el21_L2", "pred12_L1", "pred12_L2",
]
FIELD_SCHEMA = ["x", "y", "g1_x", "g1_y", "g2_x", "g2_y", "r_x", "r_y", "dot_1", "dot_2", "label"]
MLP_SCHEMA = [
    "step", "t", "delta", "L_1", "L_2", "EL12_1", "EL12_2", "EL21_1", "EL21_2",
    "P21_1", "P21_2", "pred12_1", "pred12_2",
]
VIOLATION_SCHEMA = ["t", "i", "j", "p_value", "w_i", "w_j", "recommendation"]

MONOTONE_TOL = 1e-9
DEFAULT_QUADRATICS = [
    {"eigenvalues": [1.0, 0.1], "angle_deg": 0.0, "b": [1.0, 0.0]},
    {"eigenvalues": [1.0, 0.1], "angle_deg": 60.0, "b": [-1.0, 0.5]},
]


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    dim: int = 100
    spectrum_decay: float = 0.7
    num_seeds: int = 100
    t_values: list = field(default_factory=lambda: [0.1, 0.3, 1.0])
    eps_values: list = field(default_factory=lambda: [0.001, 0.01, 0.1])
    delta_values: list = field(default_factory=lambda: [0.5])
    base_weights: list = field(default_factory=lambda: [0.5, 0.5])
    schedule: dict | None = None
    engine: str = "closed-form"
    integrator: dict = field(default_factory=lambda: {"method": "rk4", "h": 0.01, "record_every": 10})
    gd: dict = field(default_factory=lambda: {"learning_rate": 0.01})
    hvp: dict = field(default_factory=lambda: {"mode": "exact", "fd_step": 1e-4})
    grid: dict = field(default_factory=lambda: {"x_range": [-3.0, 3.0], "y_range": [-3.0, 3.0], "resolution": 101})
    quadratics: list = field(default_factory=lambda: copy.deepcopy(DEFAULT_QUADRATICS))
    num_starts: int = 8
    start_scale: float = 3.0
    horizon: float = 60.0
    mlp: dict = field(default_factory=lambda: {"n_in": 4, "n_hidden": 16, "n_out": 1, "n_samples": 256, "identical": False})
    checkpoints: list = field(default_factory=lambda: [500, 1000, 1500, 2000])
    intervention_steps: int = 200
    workers: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ArgumentError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ArgumentError(f"unknown config keys: {unknown}")
        if "experiment" not in data:
            raise ArgumentError("config needs an 'experiment' key")
        cfg = cls(**copy.deepcopy(data))
        problems = cfg.validate()
        if problems:
            raise ArgumentError("invalid config: " + "; ".join(problems))
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def base_schedule(self) -> WeightSchedule:
        if self.schedule is not None:
            return WeightSchedule.from_dict(self.schedule)
        return WeightSchedule([0], [self.base_weights])

    def hvp_config(self) -> HvpConfig:
        return HvpConfig(self.hvp.get("mode", "exact"), float(self.hvp.get("fd_step", 1e-4)))

    def integrator_config(self) -> IntegratorConfig:
        i = self.integrator
        return IntegratorConfig(i.get("method", "rk4"), float(i.get("h", 0.01)), int(i.get("record_every", 1)))

    def validate(self) -> list[str]:
        out = []
        if self.experiment not in EXPERIMENTS:
            out.append(f"unknown experiment {self.experiment!r}; valid: {sorted(EXPERIMENTS)}")
        for name in ("t_values", "eps_values", "delta_values", "base_weights", "checkpoints"):
            if not isinstance(getattr(self, name), list) or not getattr(self, name):
                out.append(f"{name} must be a nonempty list")
        if not isinstance(self.dim, int) or self.dim < 1:
            out.append("dim must be a positive integer")
        if not isinstance(self.num_seeds, int) or self.num_seeds < 1:
            out.append("num_seeds must be a positive integer")
        if not (0 < float(self.spectrum_decay) <= 1):
            out.append("spectrum_decay must lie in (0, 1]")
        if any(not (float(e) > 0) for e in self.eps_values):
            out.append("eps_values must be positive")
        if any(float(d) < 0 for d in self.delta_values):
            out.append("delta_values must be non-negative")
        if self.engine not in ("closed-form", "ode", "discrete-gd"):
            out.append(f"unknown engine {self.engine!r}")
        try:
            sched = self.base_schedule()
            out.extend(f"schedule {v}" for v in validate_schedule(sched))
        except (ArgumentError, TypeError, ValueError) as exc:
            out.append(f"schedule: {exc}")
        try:
            self.hvp_config()
            self.integrator_config()
            if not float(self.gd.get("learning_rate", 0)) > 0:
                out.append("gd.learning_rate must be positive")
        except (ArgumentError, TypeError, ValueError) as exc:
            out.append(str(exc))
        if self.experiment == "quad_commutation" and len(self.delta_values) != 1:
            out.append("quad_commutation takes exactly one delta value")
        if self.experiment in ("field_scan", "loss_dynamics"):
            try:
                doms = quadratics_from_config(self.quadratics)
                if self.experiment == "field_scan" and len(doms) != 2:
                    out.append("field_scan needs exactly two domains")
            except (ArgumentError, KeyError, TypeError, ValueError) as exc:
                out.append(f"quadratics: {exc}")
        if self.experiment == "mlp_intervention":
            if any(int(c) < 0 for c in self.checkpoints) or self.intervention_steps < 1:
                out.append("checkpoints must be >= 0 and intervention_steps >= 1")
        g = self.grid
        if int(g.get("resolution", 0)) < 2:
            out.append("grid.resolution must be >= 2")
        if self.num_starts < 1 or not self.horizon > 0:
            out.append("num_starts must be >= 1 and horizon > 0")
        return out


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    for item in overrides or []:
        apply_override(data, item)
    return ExperimentConfig.from_dict(data)


def apply_override(data: dict, item: str) -> None:
    """Apply ``dotted.key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ArgumentError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ArgumentError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value


def _rotation(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def quadratics_from_config(items: list) -> list[QuadraticDomain]:
    """2-D quadratics given by eigenvalues, a rotation angle and a minimizer."""
    out = []
    for item in items:
        lam = np.asarray(item["eigenvalues"], dtype=float)
        if lam.shape != (2,) or np.any(lam <= 0):
            raise ArgumentError("each quadratic needs two positive eigenvalues")
        rot = _rotation(float(item.get("angle_deg", 0.0)))
        a = (rot * lam) @ rot.T
        out.append(QuadraticDomain(0.5 * (a + a.T), np.asarray(item["b"], dtype=float)))
    return out


# --- quadratic commutation sweep --------------------------------------------


def sample_quadratic_problem(cfg: ExperimentConfig, seed_index: int):
    rng = Prng.derive(cfg.seed, seed_index)
    lam = power_law_spectrum(cfg.dim, float(cfg.spectrum_decay))
    d1 = make_quadratic_domain(lam, rng)
    d2 = make_quadratic_domain(lam, rng)
    theta0 = gaussian_vector(cfg.dim, rng)
    return d1, d2, theta0


def _quad_seed_rows(cfg: ExperimentConfig, seed_index: int) -> list[dict]:
    d1, d2, theta0 = sample_quadratic_problem(cfg, seed_index)
    domains = [d1, d2]
    flows = QuadraticFlowEngine(domains)
    base = cfg.base_schedule()
    w = [float(x) for x in base.weights[0]]
    target = combine_domains(w, domains)
    delta = cfg.delta_values[0]
    rows = []
    for t in cfg.t_values:
        # The state at t is shared by every eps at this t.
        theta_t = flows.advance(base, theta0, 0, t)
        for eps in cfg.eps_values:
            rep = measure_excess_loss(
                domains, base, InterventionSpec(t, eps, delta), target, theta_t,
                t_start=t, flows=flows, extra_targets=domains, hvp_cfg=cfg.hvp_config(),
            )
            (t1, t2) = rep.per_target
            rows.append(
                {
                    "t": float(t), "eps": float(eps), "delta": float(delta), "seed": seed_index,
                    "observed_12": rep.observed_12, "observed_21": rep.observed_21,
                    "predicted": rep.predicted, "ratio": rep.ratio,
                    "el12_L1": t1["observed_12"], "el12_L2": t2["observed_12"],
                    "el21_L1": t1["observed_21"], "el21_L2": t2["observed_21"],
                    "pred12_L1": t1["predicted"], "pred12_L2": t2["predicted"],
                    "budget_equal": len(set(map(tuple, rep.total_data))) == 1,
                }
            )
    return rows


def _safe_seed(args):
    cfg_dict, seed_index = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return seed_index, _quad_seed_rows(cfg, seed_index), None
    except (NumericError, ArgumentError) as exc:
        return seed_index, [], f"{type(exc).__name__}: {exc}"


def _workers(cfg: ExperimentConfig) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


@dataclass
class SweepResult:
    rows: list
    aggregates: list
    failures: dict = field(default_factory=dict)


def aggregate_ratios(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list] = {}
    for r in rows:
        cells.setdefault((r["t"], r["eps"]), []).append(r["ratio"])
    out = []
    for (t, eps), ratios in sorted(cells.items()):
        vals = np.sort(np.asarray(ratios, dtype=float))
        out.append(
            {
                "t": t, "eps": eps,
                "median_ratio": float(np.median(vals)),
                "p10_ratio": float(np.percentile(vals, 10)),
                "p90_ratio": float(np.percentile(vals, 90)),
                "n_seeds": len(vals),
            }
        )
    return out


def run_quad_commutation(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> SweepResult:
    """Ratio sweep: for every seed, t and eps, swap a full unit of weight
    between the two domains for two windows of length eps and compare the
    observed excess of the mixture loss with the prediction."""
    jobs = [(cfg.to_dict(), s) for s in range(cfg.num_seeds)]
    rows, failures = [], {}
    workers = min(_workers(cfg), cfg.num_seeds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_seed, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_safe_seed(job))
            if progress:
                progress(f"seed {job[1] + 1}/{cfg.num_seeds}")
    for seed_index, seed_rows, err in results:
        if err:
            log.warning("seed %d failed: %s", seed_index, err)
            failures[seed_index] = err
        rows.extend(seed_rows)
    rows.sort(key=lambda r: (r["t"], r["eps"], r["seed"]))
    return SweepResult(rows, aggregate_ratios(rows), failures)


def calibrate(cfg: ExperimentConfig, eps_values=(1e-4, 1e-3), num_seeds: int = 10) -> dict:
    """Fit the prediction coefficient from closed-form interventions.

    Ratios observed / (delta eps^2 P) are taken at two small eps and
    extrapolated linearly to eps = 0.
    """
    sub = dataclasses.replace(cfg, eps_values=list(eps_values), num_seeds=num_seeds, workers=1)
    medians = {}
    for eps in eps_values:
        ratios = []
        for s in range(num_seeds):
            for r in _quad_seed_rows(dataclasses.replace(sub, eps_values=[eps]), s):
                ratios.append(r["ratio"] * CALIBRATED_COEFFICIENT)
        medians[eps] = float(np.median(ratios))
    e1, e2 = eps_values
    fitted = (e2 * medians[e1] - e1 * medians[e2]) / (e2 - e1)
    return {"coefficient": fitted, "eps_ratios": {repr(e): r for e, r in medians.items()}, "num_seeds": num_seeds}


# --- 2-D field scan ----------------------------------------------------------


def region_label(r: np.ndarray, dot1: float, dot2: float) -> str:
    if not np.any(r):
        return "degenerate"
    if dot1 > 0 and dot2 > 0:
        return "both-positive"
    if dot1 < 0 and dot2 < 0:
        return "both-negative"
    return "mixed"


def run_field_scan(cfg: ExperimentConfig, domains=None) -> list[dict]:
    """Bracket R(L1, L2) and its dot products with both gradients on a grid."""
    if domains is None:
        domains = quadratics_from_config(cfg.quadratics)
    if len(domains) != 2 or any(d.dim != 2 for d in domains):
        raise ArgumentError("field scan needs two domains of parameter dimension 2")
    g = cfg.grid
    n = int(g["resolution"])
    xs = np.linspace(*map(float, g["x_range"]), n)
    ys = np.linspace(*map(float, g["y_range"]), n)
    hcfg = cfg.hvp_config()
    rows = []
    for y in ys:
        for x in xs:
            theta = np.array([x, y])
            br = lie_bracket_R(domains[0], domains[1], theta, hcfg)
            _, g1 = domains[0].loss_grad(theta)
            _, g2 = domains[1].loss_grad(theta)
            rows.append(
                {
                    "x": x, "y": y, "g1_x": g1[0], "g1_y": g1[1], "g2_x": g2[0], "g2_y": g2[1],
                    "r_x": br.r[0], "r_y": br.r[1], "dot_1": br.dot_grad1, "dot_2": br.dot_grad2,
                    "label": region_label(br.r, br.dot_grad1, br.dot_grad2),
                }
            )
    return rows


# --- loss dynamics -----------------------------------------------------------


@dataclass
class LossDynamicsResult:
    trajectories: list
    summary: list
    minimizer: np.ndarray


def mixture_minimizer(domains, weights) -> np.ndarray:
    a = sum(float(w) * d.a for w, d in zip(weights, domains))
    ab = sum(float(w) * (d.a @ d.b) for w, d in zip(weights, domains))
    return np.linalg.solve(a, ab)


def is_monotone_nonincreasing(values, tol: float = MONOTONE_TOL) -> bool:
    return not np.any(np.diff(np.asarray(values, dtype=float)) > tol)


def mixture_descends(traj: Trajectory, rate_tol: float = 1e-8) -> bool:
    """Scheduled mixture loss never rises by more than ``rate_tol`` per unit time.

    Each recorded interval is judged with the weights in force on it; intervals
    that straddle a breakpoint are skipped, since the mixture itself jumps there.
    """
    sched = traj.schedule
    bps = [float(b) for b in sched.breakpoints]
    for k in range(len(traj.times) - 1):
        a, b = float(traj.times[k]), float(traj.times[k + 1])
        if any(a < t < b for t in bps):
            continue
        w = np.array([float(x) for x in sched.weights[sched.segment_index(a)]])
        rise = w @ traj.per_domain_losses[k + 1] - w @ traj.per_domain_losses[k]
        if rise > rate_tol * (b - a):
            return False
    return True


def loss_dynamics_starts(cfg: ExperimentConfig, dim: int) -> list[np.ndarray]:
    rng = Prng.derive(cfg.seed, 0)
    return [float(cfg.start_scale) * gaussian_vector(dim, rng) for _ in range(cfg.num_starts)]


def run_loss_dynamics(cfg: ExperimentConfig, domains=None, starts=None) -> LossDynamicsResult:
    """Constant-weight gradient flows from several starts; flags per-domain
    monotonicity and checks convergence to the mixture minimizer."""
    if domains is None:
        domains = quadratics_from_config(cfg.quadratics)
    sched = cfg.base_schedule()
    weights = [float(w) for w in sched.weights[0]]
    if len(sched.weights) != 1:
        raise ArgumentError("loss dynamics uses a constant schedule")
    minimizer = mixture_minimizer(domains, weights)
    if starts is None:
        starts = loss_dynamics_starts(cfg, domains[0].dim)
    icfg = cfg.integrator_config()
    trajs, summary = [], []
    for idx, start in enumerate(starts):
        traj = integrate_ode(domains, sched, start, float(cfg.horizon), icfg)
        err = float(np.linalg.norm(traj.endpoint - minimizer))
        row = {"trajectory": idx, "mixture_monotone": mixture_descends(traj), "endpoint_error": err}
        for k in range(len(domains)):
            row[f"monotone_{k + 1}"] = is_monotone_nonincreasing(traj.per_domain_losses[:, k])
        row["converged"] = err < 1e-6
        if not row["mixture_monotone"]:
            log.warning("trajectory %d: mixture loss increased", idx)
        if not row["converged"]:
            log.warning("trajectory %d: endpoint %.3g away from the minimizer", idx, err)
        trajs.append(traj)
        summary.append(row)
    return LossDynamicsResult(trajs, summary, minimizer)


# --- MLP interventions -------------------------------------------------------


@dataclass
class MlpResult:
    rows: list
    baseline: Trajectory
    domains: list
    budgets_equal: bool
    sign_agreement: dict


def build_mlp_domains(cfg: ExperimentConfig):
    m = cfg.mlp
    syn = SyntheticConfig(int(m.get("n_in", 4)), int(m.get("n_out", 1)), int(m.get("n_samples", 256)), bool(m.get("identical", False)), float(m.get("noise", 0.0)))
    sizes = (syn.n_in, int(m.get("n_hidden", 16)), syn.n_out)
    domains = [make_mlp_domain(sizes, ds) for ds in gen_synthetic_datasets(cfg.seed, syn)]
    theta0 = init_mlp_params(sizes, Prng.derive(cfg.seed, 1))
    return domains, theta0


def sign_agreement(rows: list[dict], floor: float = 1e-8) -> dict:
    """Fraction of (checkpoint, ordering, domain) cells where the prediction's
    sign matches the observed excess loss, among cells with |prediction| > floor."""
    agree = total = 0
    for r in rows:
        for k in (1, 2):
            pred = r[f"pred12_{k}"]
            if abs(pred) <= floor:
                continue
            for obs, p in ((r[f"EL12_{k}"], pred), (r[f"EL21_{k}"], -pred)):
                total += 1
                agree += int(np.sign(obs) == np.sign(p))
    return {"agree": agree, "cells": total, "fraction": agree / total if total else math.nan}


def run_mlp_intervention(cfg: ExperimentConfig) -> MlpResult:
    """Baseline GD run plus i-first / j-first interventions at each checkpoint.

    Windows last ``intervention_steps`` steps; predictions use time measured as
    steps times the learning rate.
    """
    domains, theta0 = build_mlp_domains(cfg)
    lr = float(cfg.gd["learning_rate"])
    lr_f = to_fraction(lr)
    n = int(cfg.intervention_steps)
    base = cfg.base_schedule()
    cps = sorted(int(c) for c in cfg.checkpoints)
    total_steps = cps[-1] + 2 * n
    baseline = discrete_gd(domains, base, theta0, GdConfig(lr, total_steps, 1))
    hcfg = cfg.hvp_config()
    if hcfg.mode == "exact":
        hcfg = HvpConfig("fd", hcfg.fd_step)
    gd = GdConfig(lr, 1)
    rows, budgets_ok = [], True
    for step in cps:
        theta_c = baseline.checkpoints[step]
        t0 = step * lr_f
        w = [float(x) for x in base.weights[base.segment_index(t0)]]
        mix = combine_domains(w, domains)
        p21 = [p_value(domains[1], domains[0], d, theta_c, hcfg) for d in domains]
        for delta in cfg.delta_values:
            rep = measure_excess_loss(
                domains, base, InterventionSpec(t0, n * lr_f, delta), mix, theta_c,
                engine="discrete-gd", t_start=t0, gd=gd, hvp_cfg=hcfg, extra_targets=domains,
            )
            budgets_ok &= len(set(map(tuple, rep.total_data))) == 1
            t1, t2 = rep.per_target
            rows.append(
                {
                    "step": step, "t": float(t0), "delta": float(delta),
                    "L_1": baseline.per_domain_losses[step, 0], "L_2": baseline.per_domain_losses[step, 1],
                    "EL12_1": t1["observed_12"], "EL12_2": t2["observed_12"],
                    "EL21_1": t1["observed_21"], "EL21_2": t2["observed_21"],
                    "P21_1": p21[0], "P21_2": p21[1],
                    "pred12_1": t1["predicted"], "pred12_2": t2["predicted"],
                }
            )
    return MlpResult(rows, baseline, domains, budgets_ok, sign_agreement(rows))


# --- output ------------------------------------------------------------------


def build_domains(cfg: ExperimentConfig):
    """Domains an experiment trains on, regenerated from its config."""
    if cfg.experiment == "mlp_intervention":
        return build_mlp_domains(cfg)[0]
    if cfg.experiment == "quad_commutation":
        d1, d2, _ = sample_quadratic_problem(cfg, 0)
        return [d1, d2]
    return quadratics_from_config(cfg.quadratics)


def save_trajectory(traj: Trajectory, out: Path, stem: str) -> list[str]:
    write_trajectory_csv(traj, out / f"{stem}.csv")
    write_checkpoints(traj, out / f"{stem}.gcm")
    write_json(traj.schedule.to_dict(), out / f"{stem}_schedule.json")
    return [f"{stem}.csv", f"{stem}.gcm", f"{stem}_schedule.json"]


def run_experiment(cfg: ExperimentConfig, out: Path, progress: Callable[[str], None] | None = None) -> dict:
    """Run ``cfg`` and write its CSVs into ``out``. Returns the manifest dict."""
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    summary: dict[str, Any] = {}
    failures: dict = {}
    if cfg.experiment == "quad_commutation":
        res = run_quad_commutation(cfg, progress)
        write_csv_report(res.rows, ROW_SCHEMA, out / "table1_rows.csv")
        write_csv_report(res.aggregates, AGGREGATE_SCHEMA, out / "table1_aggregate.csv")
        files += ["table1_rows.csv", "table1_aggregate.csv"]
        failures = res.failures
        summary = {
            "completed_seeds": cfg.num_seeds - len(failures),
            "budgets_equal": all(r["budget_equal"] for r in res.rows),
            "median_ratio": {f"t={a['t']:g},eps={a['eps']:g}": a["median_ratio"] for a in res.aggregates},
        }
    elif cfg.experiment == "field_scan":
        rows = run_field_scan(cfg)
        write_csv_report(rows, FIELD_SCHEMA, out / "field_scan.csv")
        files.append("field_scan.csv")
        labels = [r["label"] for r in rows]
        summary = {lab: labels.count(lab) for lab in ("both-positive", "both-negative", "mixed", "degenerate")}
    elif cfg.experiment == "loss_dynamics":
        res = run_loss_dynamics(cfg)
        k = res.trajectories[0].per_domain_losses.shape[1]
        curve_rows = []
        for idx, traj in enumerate(res.trajectories):
            mixture = traj.mixture_losses()
            for t, losses, m in zip(traj.times, traj.per_domain_losses, mixture):
                curve_rows.append([idx, t, *losses, m])
        write_csv_report(curve_rows, ["trajectory", "time"] + [f"loss_{i + 1}" for i in range(k)] + ["mixture"], out / "loss_dynamics.csv")
        schema = ["trajectory", "mixture_monotone"] + [f"monotone_{i + 1}" for i in range(k)] + ["endpoint_error", "converged"]
        write_csv_report(res.summary, schema, out / "loss_dynamics_summary.csv")
        files += ["loss_dynamics.csv", "loss_dynamics_summary.csv"]
        for idx, traj in enumerate(res.trajectories):
            files += save_trajectory(traj, out, f"trajectory_{idx:02d}")
        summary = {
            "non_monotone_curves": sum(1 for r in res.summary for i in range(k) if not r[f"monotone_{i + 1}"]),
            "mixture_monotone": all(r["mixture_monotone"] for r in res.summary),
            "all_converged": all(r["converged"] for r in res.summary),
        }
    elif cfg.experiment == "mlp_intervention":
        res = run_mlp_intervention(cfg)
        write_csv_report(res.rows, MLP_SCHEMA, out / "mlp_intervention.csv")
        files.append("mlp_intervention.csv")
        files += save_trajectory(res.baseline, out, "baseline")
        summary = {"sign_agreement": res.sign_agreement, "budgets_equal": res.budgets_equal}
    else:
        raise ArgumentError(f"unknown experiment {cfg.experiment!r}; valid: {sorted(EXPERIMENTS)}")
    return make_manifest(cfg, out, files, summary, failures)


def make_manifest(cfg: ExperimentConfig, out: Path, files: list[str], summary: dict, failures: dict) -> dict:
    hashes = {name: sha256_file(out / name) for name in sorted(files)}
    content = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in sorted(hashes.items())).encode()).hexdigest()
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "calibrated_coefficient": CALIBRATED_COEFFICIENT,
        "outputs": hashes,
        "content_hash": content,
        "summary": summary,
        "failures": {str(k): v for k, v in failures.items()},
        "failure_count": len(failures),
    }
    write_json(manifest, out / "manifest.json")
    return manifest
