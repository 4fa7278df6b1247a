"""Schedule-aware trajectories: RK4/Euler gradient flow, discrete GD, and
closed-form flows for quadratic domains.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import QuadraticDomain, _phi, is_quadratic
from .errors import ArgumentError, NumericError
from .linalg import as_vector, sym_eigh
from .schedule import WeightSchedule, constant_schedule, to_fraction, validate_schedule

DIVERGENCE_LOSS = 1e12
CHECKPOINT_MAGIC = b"GCM1"


@dataclass
class Trajectory:
    times: np.ndarray
    checkpoints: np.ndarray  # (len(times), n)
    per_domain_losses: np.ndarray  # (len(times), K)
    schedule: WeightSchedule | None = field(default=None, repr=False)

    @property
    def endpoint(self) -> np.ndarray:
        return self.checkpoints[-1]

    def mixture_losses(self) -> np.ndarray:
        """Scheduled loss sum_k w_k(t) L_k(theta(t)) at every recorded time."""
        w = np.array([[float(x) for x in self.schedule.weights[self.schedule.segment_index(t)]] for t in self.times])
        return np.sum(w * self.per_domain_losses, axis=1)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    h: float = 1e-3
    record_every: int = 1

    def __post_init__(self):
        if self.method not in ("rk4", "euler"):
            raise ArgumentError(f"unknown integrator {self.method!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ArgumentError("step h must be positive")
        if self.record_every < 1:
            raise ArgumentError("record_every must be >= 1")


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float
    steps: int
    record_every: int = 1

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ArgumentError("learning_rate must be positive")
        if self.steps < 0 or self.record_every < 1:
            raise ArgumentError("steps must be >= 0 and record_every >= 1")


def _check_inputs(domains, s: WeightSchedule, theta0) -> np.ndarray:
    if not domains:
        raise ArgumentError("need at least one domain")
    dims = {d.dim for d in domains}
    if len(dims) != 1:
        raise ArgumentError(f"domains disagree on dimension: {sorted(dims)}")
    problems = validate_schedule(s)
    if problems:
        raise ArgumentError("invalid schedule: " + "; ".join(str(p) for p in problems))
    if s.k != len(domains):
        raise ArgumentError(f"schedule has {s.k} weights but {len(domains)} domains were given")
    return as_vector(theta0, dims.pop(), "theta0").copy()


def _descent_field(domains, weights):
    active = [(w, d) for w, d in zip(weights, domains) if w != 0.0]

    def f(theta):
        out = np.zeros_like(theta)
        for w, d in active:
            out -= w * d.loss_grad(theta)[1]
        return out

    return f


def _losses(domains, theta) -> np.ndarray:
    return np.array([d.loss(theta) for d in domains])


def integrate_ode(domains, s: WeightSchedule, theta0, T: float, cfg: IntegratorConfig = IntegratorConfig(), *, t_start: float = 0.0) -> Trajectory:
    """Integrate ``theta' = -sum_k w_k(t) grad L_k(theta)`` from ``t_start`` to ``T``.

    Each constant-weight stretch between breakpoints is split into equal steps
    no longer than ``cfg.h``, so no step straddles a breakpoint. Checkpoints are
    kept every ``record_every`` steps plus at both ends.
    """
    theta = _check_inputs(domains, s, theta0)
    if not T > t_start:
        raise ArgumentError(f"T must exceed the start time {t_start}")
    cuts = [float(t_start)] + s.breakpoints_in(float(t_start), float(T)) + [float(T)]
    times, points = [float(t_start)], [theta.copy()]
    step_count = 0
    for a, b in zip(cuts[:-1], cuts[1:]):
        weights = [float(w) for w in s.weights[s.segment_index(a)]]
        f = _descent_field(domains, weights)
        n = max(1, math.ceil((b - a) / cfg.h - 1e-9))
        dt = (b - a) / n
        for m in range(n):
            if cfg.method == "rk4":
                k1 = f(theta)
                k2 = f(theta + 0.5 * dt * k1)
                k3 = f(theta + 0.5 * dt * k2)
                k4 = f(theta + dt * k3)
                theta = theta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                theta = theta + dt * f(theta)
            t_now = a + (m + 1) * dt if m + 1 < n else b
            if not np.all(np.isfinite(theta)):
                raise NumericError(f"state became non-finite after t={times[-1]:.6g}", time=times[-1])
            step_count += 1
            if step_count % cfg.record_every == 0 or (b == cuts[-1] and m + 1 == n):
                times.append(t_now)
                points.append(theta.copy())
    pts = np.array(points)
    return Trajectory(np.array(times), pts, np.array([_losses(domains, p) for p in pts]), s)


def discrete_gd(domains, s: WeightSchedule, theta0, cfg: GdConfig, *, start_step: int = 0) -> Trajectory:
    """Full-gradient descent ``theta <- theta - lr * sum_k w_k(i lr) grad L_k``.

    Step ``i`` reads the schedule at the exact rational time ``i * lr``;
    recorded times are ``i * lr`` as floats.
    """
    theta = _check_inputs(domains, s, theta0)
    lr = to_fraction(cfg.learning_rate)
    gamma = float(cfg.learning_rate)
    times, points = [float(start_step * lr)], [theta.copy()]
    for i in range(start_step, start_step + cfg.steps):
        weights = s.weights[s.segment_index(i * lr)]
        step = np.zeros_like(theta)
        for w, d in zip(weights, domains):
            if w == 0:
                continue
            loss, g = d.loss_grad(theta)
            if not (math.isfinite(loss) and loss <= DIVERGENCE_LOSS):
                raise NumericError(f"gradient descent diverged at step {i} (loss {loss:.3g})", time=float(i * lr))
            step += float(w) * g
        theta = theta - gamma * step
        if (i + 1 - start_step) % cfg.record_every == 0 or i + 1 == start_step + cfg.steps:
            times.append(float((i + 1) * lr))
            points.append(theta.copy())
    pts = np.array(points)
    losses = np.array([_losses(domains, p) for p in pts])
    if not np.all(np.isfinite(losses)) or np.any(losses > DIVERGENCE_LOSS):
        raise NumericError("gradient descent diverged at the final step")
    return Trajectory(np.array(times), pts, losses, s)


def flow_map_numeric(d, tau: float, theta, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Time-``tau`` descent flow of a single domain, integrated numerically."""
    if tau < 0:
        raise ArgumentError("tau must be >= 0")
    theta = as_vector(theta, d.dim, "theta")
    if tau == 0:
        return theta.copy()
    traj = integrate_ode([d], constant_schedule(1, [1]), theta, tau, IntegratorConfig(cfg.method, cfg.h, 10**9))
    return traj.endpoint


class QuadraticFlowEngine:
    """Exact flows of weighted sums of quadratic domains.

    For weights ``w`` the field is ``-(M theta - c)`` with ``M = sum w_k A_k`` and
    ``c = sum w_k A_k b_k``; its time-tau flow is
    ``theta - Q diag((1 - exp(-tau lam)) / lam) Q^T (M theta - c)``, which never
    inverts ``M`` and so stays accurate for nearly singular curvature.
    Eigendecompositions are cached per weight vector.
    """

    def __init__(self, domains: Sequence):
        if not all(is_quadratic(d) for d in domains):
            raise ArgumentError("closed-form flows need quadratic domains")
        self.domains = list(domains)
        self._parts = [d.quadratic_parts() for d in self.domains]
        self._cache: dict[tuple, tuple] = {}

    def _system(self, weights: tuple):
        key = tuple(Fraction(w) if not isinstance(w, Fraction) else w for w in weights)
        if key not in self._cache:
            active = [(float(w), i) for i, w in enumerate(key) if w != 0]
            if len(active) == 1 and isinstance(self.domains[active[0][1]], QuadraticDomain):
                w, i = active[0]
                vals, q = self.domains[i].eigh
                vals = w * vals
            else:
                m = sum(w * self._parts[i][0] for w, i in active)
                vals, q = sym_eigh(0.5 * (m + m.T))
            m = sum(w * self._parts[i][0] for w, i in active)
            c = sum(w * self._parts[i][1] for w, i in active)
            self._cache[key] = (m, c, vals, q)
        return self._cache[key]

    def flow(self, weights, tau: float, theta) -> np.ndarray:
        if tau == 0:
            return np.array(theta, dtype=float)
        m, c, vals, q = self._system(tuple(weights))
        if np.any(-tau * vals > 709.0):
            raise NumericError("closed-form flow overflows")
        g = m @ theta - c
        return theta - q @ (_phi(vals, tau) * (q.T @ g))

    def advance(self, s: WeightSchedule, theta, t_from, t_to) -> np.ndarray:
        """State at ``t_to`` starting from ``theta`` at ``t_from`` under ``s``."""
        t_from, t_to = to_fraction(t_from), to_fraction(t_to)
        if t_to < t_from:
            raise ArgumentError("cannot advance backwards in time")
        theta = np.array(theta, dtype=float)
        cuts = [t_from] + [t for t in s.breakpoints if t_from < t < t_to] + [t_to]
        for a, b in zip(cuts[:-1], cuts[1:]):
            theta = self.flow(s.weights[s.segment_index(a)], float(b - a), theta)
        return theta


def closed_form_trajectory(domains, s: WeightSchedule, theta0, times: Sequence[float]) -> Trajectory:
    theta = _check_inputs(domains, s, theta0)
    engine = QuadraticFlowEngine(domains)
    times = [float(t) for t in times]
    pts, prev = [], 0.0
    for t in times:
        theta = engine.advance(s, theta, prev, t)
        pts.append(theta.copy())
        prev = t
    pts = np.array(pts)
    return Trajectory(np.array(times), pts, np.array([_losses(domains, p) for p in pts]), s)


# --- trajectory export -------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path) -> None:
    k = traj.per_domain_losses.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time"] + [f"loss_{i + 1}" for i in range(k)])
        for t, row in zip(traj.times, traj.per_domain_losses):
            writer.writerow([format(float(t), ".17g")] + [format(float(x), ".17g") for x in row])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = np.array([[float(v) for v in r] for r in reader], dtype=float)
    return rows[:, 0], rows[:, 1:]


def write_checkpoints(traj: Trajectory, path) -> None:
    """Binary sidecar: ``GCM1``, u32 dimension, then row-major little-endian doubles."""
    pts = np.ascontiguousarray(traj.checkpoints, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", pts.shape[1]))
        fh.write(pts.tobytes())


def read_checkpoints(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ArgumentError(f"{path} is not a checkpoint file")
    (dim,) = struct.unpack("<I", data[4:8])
    body = np.frombuffer(data[8:], dtype="<f8")
    if dim == 0 or body.size % dim:
        raise ArgumentError(f"{path}: payload size does not match dimension {dim}")
    return body.reshape(-1, dim).astype(float)
