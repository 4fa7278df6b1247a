"""Lie brackets of gradient fields, the ordering score P, excess-loss
predictions and the local-optimality scan of a trajectory.

Conventions. ``R(L1, L2) = Hess L2 grad L1 - Hess L1 grad L2`` and
``P(X, Y; Z) = <R(X, Y), grad Z>``. For descent flows run first along L1 and
then along L2 for time ``t`` each, compared with L2-then-L1,
``theta_12 - theta_21 = t^2 R(L1, L2) + O(t^3)``. Shifting ``delta`` of weight
from j to i during ``[t0, t0 + eps)`` and back during ``[t0 + eps, t0 + 2 eps)``
changes a target loss L by ``delta eps^2 P(Li - Lj, sum_k w_k Lk; L)`` to
leading order, hence the default prediction coefficient of 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .domain import HvpConfig, QuadraticDomain, combine_domains, hvp, is_quadratic, loss_difference
from .errors import ArgumentError
from .flow import GdConfig, IntegratorConfig, QuadraticFlowEngine, Trajectory, discrete_gd, integrate_ode
from .linalg import as_vector
from .schedule import InterventionSpec, WeightSchedule, swap_intervention, to_fraction, total_data, weights_at

# Fitted by `domainorder calibrate` (closed-form quadratic interventions,
# Richardson extrapolation over eps in {1e-4, 1e-3}); matches the second-order
# expansion of the intervened flow exactly.
CALIBRATED_COEFFICIENT = 1.0


@dataclass
class BracketResult:
    r: np.ndarray
    dot_grad1: float
    dot_grad2: float
    method: str


def lie_bracket_R(d1, d2, theta, cfg: HvpConfig = HvpConfig()) -> BracketResult:
    if d1.dim != d2.dim:
        raise ArgumentError(f"dimension mismatch: {d1.dim} vs {d2.dim}")
    theta = as_vector(theta, d1.dim, "theta")
    _, g1 = d1.loss_grad(theta)
    _, g2 = d2.loss_grad(theta)
    r = hvp(d2, theta, g1, cfg) - hvp(d1, theta, g2, cfg)
    return BracketResult(r, float(r @ g1), float(r @ g2), "exact" if cfg.mode == "exact" else "fd-hvp")


def quadratic_R_closed_form(d1: QuadraticDomain, d2: QuadraticDomain, theta) -> np.ndarray:
    """``A2 A1 (theta - b1) - A1 A2 (theta - b2)``.

    Equals ``-([A1, A2] theta - A1 A2 b2 + A2 A1 b1)``: the bracket written in
    the ascent-flow, first-field-applied-last ordering, with its sign flipped.
    """
    if d1.dim != d2.dim:
        raise ArgumentError(f"dimension mismatch: {d1.dim} vs {d2.dim}")
    theta = as_vector(theta, d1.dim, "theta")
    a1, a2 = d1.a, d2.a
    return a2 @ (a1 @ (theta - d1.b)) - a1 @ (a2 @ (theta - d2.b))


def p_value(x, y, z, theta, cfg: HvpConfig = HvpConfig()) -> float:
    """``<R(x, y)(theta), grad z(theta)>``."""
    br = lie_bracket_R(x, y, theta, cfg)
    _, gz = z.loss_grad(theta)
    return float(br.r @ gz)


def _pair_domains(i: int, j: int, weights: Sequence[float], domains: Sequence):
    diff = combine_domains([1.0, -1.0], [domains[i], domains[j]])
    mix = combine_domains([float(w) for w in weights], list(domains))
    return diff, mix


def predict_excess_loss(
    i: int,
    j: int,
    base_schedule: WeightSchedule,
    target,
    domains: Sequence,
    theta_at_t0,
    t0,
    eps: float,
    delta: float,
    coefficient: float = CALIBRATED_COEFFICIENT,
    time_scale: float = 1.0,
    cfg: HvpConfig = HvpConfig(),
) -> float:
    """``coefficient * delta * (eps * time_scale)^2 * P(Li - Lj, sum_k w_k(t0) Lk; target)``.

    For discrete runs pass ``eps`` in steps and the learning rate as ``time_scale``.
    """
    if i == j:
        raise ArgumentError("i and j must differ")
    if not coefficient > 0:
        raise ArgumentError("coefficient must be positive")
    if delta == 0:
        return 0.0
    # Feasibility: raises if the shift leaves the simplex.
    swap_intervention(base_schedule, InterventionSpec(t0, to_fraction(eps) * to_fraction(time_scale), delta, i, j))
    weights = weights_at(base_schedule, to_fraction(t0))
    diff, mix = _pair_domains(i, j, weights, domains)
    p = p_value(diff, mix, target, theta_at_t0, cfg)
    return coefficient * float(delta) * (float(eps) * float(time_scale)) ** 2 * p


@dataclass
class ExcessLossReport:
    t0: float
    eps: float
    delta: float
    i: int
    j: int
    observed_12: float
    observed_21: float
    predicted: float
    ratio: float
    calibrated_coefficient: float
    engine: str
    p_value: float
    total_data: list = field(default_factory=list)
    # One entry per extra target: observed_12, observed_21, predicted.
    per_target: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


class _Runner:
    """Runs a schedule from (t_start, theta_start) to a time with one engine."""

    def __init__(self, domains, engine: str, integrator: IntegratorConfig, gd: GdConfig | None, flows=None):
        self.domains = domains
        self.engine = engine
        if engine == "closed-form":
            self._qf = flows if flows is not None else QuadraticFlowEngine(domains)
        elif engine == "ode":
            self.integrator = integrator
        elif engine == "discrete-gd":
            if gd is None:
                raise ArgumentError("discrete-gd engine needs a GdConfig")
            self.gd = gd
        else:
            raise ArgumentError(f"unknown engine {engine!r}")

    def run(self, s: WeightSchedule, theta, t_from, t_to) -> np.ndarray:
        if to_fraction(t_to) == to_fraction(t_from):
            return np.array(theta, dtype=float)
        if self.engine == "closed-form":
            return self._qf.advance(s, theta, t_from, t_to)
        if self.engine == "ode":
            cfg = IntegratorConfig(self.integrator.method, self.integrator.h, 10**9)
            return integrate_ode(self.domains, s, theta, float(t_to), cfg, t_start=float(t_from)).endpoint
        lr = to_fraction(self.gd.learning_rate)
        a, b = to_fraction(t_from) / lr, to_fraction(t_to) / lr
        if a.denominator != 1 or b.denominator != 1:
            raise ArgumentError("discrete-gd times must be whole multiples of the learning rate")
        cfg = GdConfig(self.gd.learning_rate, int(b - a), 10**9)
        return discrete_gd(self.domains, s, theta, cfg, start_step=int(a)).endpoint


def measure_excess_loss(
    domains: Sequence,
    base_schedule: WeightSchedule,
    spec: InterventionSpec,
    target,
    theta0,
    T_eval=None,
    engine: str = "closed-form",
    *,
    t_start=0,
    integrator: IntegratorConfig = IntegratorConfig(),
    gd: GdConfig | None = None,
    hvp_cfg: HvpConfig = HvpConfig(),
    coefficient: float = CALIBRATED_COEFFICIENT,
    flows: QuadraticFlowEngine | None = None,
    extra_targets: Sequence = (),
) -> ExcessLossReport:
    """Observed vs predicted excess loss of both orderings of ``spec``.

    ``theta0`` is the state at ``t_start`` (default 0). Three runs share it:
    the base schedule, i-first and j-first. ``observed_12`` is the target loss
    of the i-first run minus that of the base run at ``T_eval`` (default
    ``t0 + 2 eps``); ``observed_21`` likewise for j-first. Passing a
    ``QuadraticFlowEngine`` built on ``domains`` as ``flows`` reuses its cached
    eigendecompositions across calls. ``extra_targets`` get the same
    observed/predicted triple in ``per_target``.
    """
    t0 = to_fraction(spec.t0)
    if t0 < to_fraction(t_start):
        raise ArgumentError("intervention starts before the supplied state")
    t_eval = spec.end if T_eval is None else to_fraction(T_eval)
    if t_eval < spec.end:
        raise ArgumentError("T_eval must be >= t0 + 2 eps")
    if engine == "closed-form" and not (all(is_quadratic(d) for d in domains) and is_quadratic(target)):
        raise ArgumentError("closed-form engine needs quadratic domains and target")
    spec_ij = InterventionSpec(spec.t0, spec.eps, spec.delta, spec.i, spec.j, "ij")
    sched_ij = swap_intervention(base_schedule, spec_ij)
    sched_ji = swap_intervention(base_schedule, spec_ij.reversed())
    budgets = [total_data(s, t_eval) for s in (base_schedule, sched_ij, sched_ji)]
    if not (budgets[0] == budgets[1] == budgets[2]):
        raise RuntimeError(f"intervention changed the data budget: {budgets}")

    runner = _Runner(domains, engine, integrator, gd, flows)
    theta_t0 = runner.run(base_schedule, as_vector(theta0, domains[0].dim, "theta0"), t_start, t0)
    ends = [runner.run(s, theta_t0, t0, t_eval) for s in (base_schedule, sched_ij, sched_ji)]
    el12 = loss_difference(target, ends[1], ends[0])
    el21 = loss_difference(target, ends[2], ends[0])

    weights = weights_at(base_schedule, t0)
    diff, mix = _pair_domains(spec.i, spec.j, weights, domains)
    p = p_value(diff, mix, target, theta_t0, hvp_cfg)
    delta, eps = float(to_fraction(spec.delta)), float(to_fraction(spec.eps))
    predicted = coefficient * delta * eps**2 * p
    ratio = el12 / predicted if predicted != 0 else math.nan
    per_target = []
    for extra in extra_targets:
        per_target.append(
            {
                "observed_12": loss_difference(extra, ends[1], ends[0]),
                "observed_21": loss_difference(extra, ends[2], ends[0]),
                "predicted": coefficient * delta * eps**2 * p_value(diff, mix, extra, theta_t0, hvp_cfg),
            }
        )
    return ExcessLossReport(
        t0=float(t0), eps=eps, delta=delta, i=spec.i, j=spec.j,
        observed_12=el12, observed_21=el21, predicted=predicted, ratio=ratio,
        calibrated_coefficient=coefficient, engine=engine, p_value=p,
        total_data=[[str(x) for x in b] for b in budgets], per_target=per_target,
    )


@dataclass
class OptimalityViolation:
    t: float
    i: int
    j: int
    p_value: float
    w_i: float
    w_j: float
    recommendation: str  # "shift-i-late" or "shift-j-late"


def optimality_scan(
    traj: Trajectory,
    domains: Sequence,
    schedule: WeightSchedule,
    target,
    tol: float = 1e-6,
    cfg: HvpConfig = HvpConfig(),
) -> list[OptimalityViolation]:
    """Times and domain pairs where the schedule is not locally optimal.

    A pair (i, j) with both weights positive is flagged when
    ``|P(Li - Lj, sum_k w_k Lk; target)| > tol * |grad target| * |grad(Li - Lj)|``.
    Negative P means raising i early and j late lowers the target
    (``shift-j-late``); positive P means the reverse (``shift-i-late``).
    """
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    if schedule.k != len(domains) or traj.checkpoints.shape[1] != domains[0].dim:
        raise ArgumentError("trajectory, schedule and domains do not match")
    out = []
    for t, theta in zip(traj.times, traj.checkpoints):
        weights = weights_at(schedule, t)
        _, g_target = target.loss_grad(theta)
        for i in range(len(domains)):
            for j in range(i + 1, len(domains)):
                if min(weights[i], weights[j]) <= 0:
                    continue
                diff, mix = _pair_domains(i, j, weights, domains)
                p = p_value(diff, mix, target, theta, cfg)
                scale = float(np.linalg.norm(g_target) * np.linalg.norm(diff.loss_grad(theta)[1]))
                if p != 0.0 and abs(p) > tol * scale:
                    out.append(
                        OptimalityViolation(
                            float(t), i, j, p, weights[i], weights[j],
                            "shift-j-late" if p < 0 else "shift-i-late",
                        )
                    )
    return out


def recommended_intervention(v: OptimalityViolation, eps) -> InterventionSpec:
    """The budget-conserving perturbation that should lower the target for ``v``,
    with ``delta = min(w_i, w_j) / 2``."""
    delta = min(Fraction(repr(v.w_i)), Fraction(repr(v.w_j))) / 2
    order = "ij" if v.recommendation == "shift-j-late" else "ji"
    return InterventionSpec(Fraction(repr(v.t)), eps, delta, v.i, v.j, order)
