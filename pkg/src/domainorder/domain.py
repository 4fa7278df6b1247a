"""Loss domains: loss, gradient and Hessian-vector products at a point.

Three implementations share one duck-typed surface (``dim``, ``loss``,
``loss_grad``, ``hvp_exact``, ``supports_exact_hvp``):

* :class:`QuadraticDomain` -- ``0.5 (theta - b)^T A (theta - b)``.
* :class:`CombinedDomain` -- a real linear combination of other domains.
* :class:`MlpDomain` -- mean squared error of a one-hidden-layer tanh network.

Flows follow the descent convention throughout: the time-tau flow of a domain
moves along ``-grad L``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, NumericError, UnsupportedModeError
from .linalg import Prng, _check_symmetric, as_matrix, as_vector, gaussian_vector, random_orthogonal, sym_eigh


@dataclass(frozen=True)
class HvpConfig:
    mode: str = "exact"  # "exact" or "fd"
    fd_step: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("exact", "fd"):
            raise ArgumentError(f"unknown HVP mode {self.mode!r}")
        if not (self.fd_step > 0 and math.isfinite(self.fd_step)):
            raise ArgumentError("fd_step must be positive")


def _check_theta(d, theta) -> np.ndarray:
    return as_vector(theta, d.dim, "theta")


@dataclass(frozen=True, eq=False)
class QuadraticDomain:
    a: np.ndarray
    b: np.ndarray
    # Optional precomputed (eigenvalues descending, eigenvectors as columns).
    eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        _check_symmetric(a)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", as_vector(self.b, a.shape[0], "b"))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    supports_exact_hvp = True

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return self.eig if self.eig is not None else sym_eigh(self.a)

    def loss(self, theta) -> float:
        r = _check_theta(self, theta) - self.b
        return 0.5 * float(r @ self.a @ r)

    def loss_grad(self, theta) -> tuple[float, np.ndarray]:
        r = _check_theta(self, theta) - self.b
        g = self.a @ r
        return 0.5 * float(r @ g), g

    def hvp_exact(self, theta, v) -> np.ndarray:
        return self.a @ v

    def quadratic_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A, A b)``: the gradient is ``A theta - A b``."""
        return self.a, self.a @ self.b


@dataclass(frozen=True, eq=False)
class CombinedDomain:
    coefficients: tuple[float, ...]
    members: tuple

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def supports_exact_hvp(self) -> bool:
        return all(m.supports_exact_hvp for m in self.members)

    def _terms(self):
        return ((c, m) for c, m in zip(self.coefficients, self.members) if c != 0.0)

    def loss(self, theta) -> float:
        theta = _check_theta(self, theta)
        return sum((c * m.loss(theta) for c, m in self._terms()), 0.0)

    def loss_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = _check_theta(self, theta)
        total, grad = 0.0, np.zeros(self.dim)
        for c, m in self._terms():
            l, g = m.loss_grad(theta)
            total += c * l
            grad += c * g
        return total, grad

    def hvp_exact(self, theta, v) -> np.ndarray:
        out = np.zeros(self.dim)
        for c, m in self._terms():
            out += c * m.hvp_exact(theta, v)
        return out

    def quadratic_parts(self) -> tuple[np.ndarray, np.ndarray]:
        a, ab = np.zeros((self.dim, self.dim)), np.zeros(self.dim)
        for c, m in self._terms():
            ma, mab = m.quadratic_parts()
            a += c * ma
            ab += c * mab
        return a, ab


def is_quadratic(d) -> bool:
    if isinstance(d, QuadraticDomain):
        return True
    if isinstance(d, CombinedDomain):
        return all(is_quadratic(m) for m in d.members)
    return False


@dataclass(frozen=True, eq=False)
class MlpDomain:
    """One tanh hidden layer, linear output, mean squared error.

    Parameters are flattened as ``W1`` (hidden x in, row-major), ``b1``,
    ``W2`` (out x hidden, row-major), ``b2``. The loss is the mean of squared
    residuals over samples and outputs.
    """

    layer_sizes: tuple[int, int, int]
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        n_in, n_hidden, n_out = (int(s) for s in self.layer_sizes)
        if min(n_in, n_hidden, n_out) < 1:
            raise ArgumentError(f"layer sizes must be positive, got {self.layer_sizes}")
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).reshape(x.shape[0] if x.size else 0, -1)
        if x.shape[0] == 0:
            raise ArgumentError("dataset is empty")
        if x.shape[1] != n_in or y.shape[1] != n_out:
            raise ArgumentError(f"dataset shapes {x.shape}, {y.shape} do not match layers {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", (n_in, n_hidden, n_out))
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def dim(self) -> int:
        n_in, h, n_out = self.layer_sizes
        return (n_in + 1) * h + (h + 1) * n_out

    supports_exact_hvp = False

    def unpack(self, theta):
        n_in, h, n_out = self.layer_sizes
        i = 0
        w1 = theta[i : i + h * n_in].reshape(h, n_in)
        i += h * n_in
        b1 = theta[i : i + h]
        i += h
        w2 = theta[i : i + n_out * h].reshape(n_out, h)
        i += n_out * h
        b2 = theta[i : i + n_out]
        return w1, b1, w2, b2

    def forward(self, theta) -> np.ndarray:
        w1, b1, w2, b2 = self.unpack(_check_theta(self, theta))
        return np.tanh(self.inputs @ w1.T + b1) @ w2.T + b2

    def loss(self, theta) -> float:
        return self.loss_grad(theta)[0]

    def loss_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = _check_theta(self, theta)
        w1, b1, w2, b2 = self.unpack(theta)
        hidden = np.tanh(self.inputs @ w1.T + b1)
        err = hidden @ w2.T + b2 - self.targets
        scale = 2.0 / err.size
        loss = float(np.sum(err * err)) / err.size
        if not math.isfinite(loss):
            raise NumericError("MLP loss is not finite")
        d_out = scale * err
        d_z = (d_out @ w2) * (1.0 - hidden * hidden)
        grad = np.concatenate(
            [(d_z.T @ self.inputs).ravel(), d_z.sum(axis=0), (d_out.T @ hidden).ravel(), d_out.sum(axis=0)]
        )
        return loss, grad

    def hvp_exact(self, theta, v):
        raise UnsupportedModeError("exact HVP is not available for MLP domains; use mode='fd'")

    def subsample(self, size: int, rng: Prng) -> "MlpDomain":
        """Same network over a random subset of ``size`` samples (without replacement)."""
        count = self.inputs.shape[0]
        if not (1 <= size <= count):
            raise ArgumentError(f"subsample size must lie in [1, {count}]")
        keys = np.array([rng.uniform() for _ in range(count)])
        idx = np.sort(np.argsort(keys, kind="stable")[:size])
        return MlpDomain(self.layer_sizes, self.inputs[idx], self.targets[idx])


def eval_loss_grad(d, theta) -> tuple[float, np.ndarray]:
    return d.loss_grad(theta)


def hvp(d, theta, v, cfg: HvpConfig = HvpConfig()) -> np.ndarray:
    """Hessian of ``d`` at ``theta`` applied to ``v``.

    ``fd`` mode uses central differences of the gradient with step
    ``fd_step * max(1, |theta|_inf) / max(1, |v|_inf)``.
    """
    theta = _check_theta(d, theta)
    v = as_vector(v, d.dim, "v")
    if cfg.mode == "exact":
        if not d.supports_exact_hvp:
            raise UnsupportedModeError(f"exact HVP unsupported for {type(d).__name__}")
        return d.hvp_exact(theta, v)
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return np.zeros(d.dim)
    h = cfg.fd_step * max(1.0, float(np.max(np.abs(theta)))) / max(1.0, vmax)
    plus, minus = theta + h * v, theta - h * v
    if np.array_equal(plus, minus):
        raise ArgumentError(f"finite-difference step {h:.3e} underflows at this point")
    return (d.loss_grad(plus)[1] - d.loss_grad(minus)[1]) / (2.0 * h)


def make_quadratic_domain(spectrum, rng: Prng) -> QuadraticDomain:
    """Random quadratic: ``A = C^T diag(spectrum) C`` with Haar ``C``; Gaussian ``b``.

    One orthogonal matrix is drawn per domain and used on both sides.
    """
    lam = np.asarray(spectrum, dtype=float)
    if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) > 0):
        raise ArgumentError("spectrum must be positive and non-increasing")
    n = lam.size
    c = random_orthogonal(n, rng)
    a = (c.T * lam) @ c
    a = 0.5 * (a + a.T)
    b = gaussian_vector(n, rng)
    return QuadraticDomain(a, b, eig=(lam.copy(), c.T.copy()))


def _phi(vals: np.ndarray, tau: float) -> np.ndarray:
    # (1 - exp(-tau * lam)) / lam, continuous at lam = 0.
    x = tau * vals
    out = np.full(vals.shape, float(tau))
    nz = x != 0.0
    out[nz] = -np.expm1(-x[nz]) / vals[nz]
    return out


def quadratic_closed_flow(d: QuadraticDomain, tau: float, theta) -> np.ndarray:
    """``b + exp(-tau A) (theta - b)``: time-tau descent flow of a quadratic."""
    theta = _check_theta(d, theta)
    if tau == 0:
        return theta.copy()
    vals, q = d.eigh
    if np.any(-tau * vals > 709.0):
        raise NumericError("flow exponential overflows")
    return d.b + q @ (np.exp(-tau * vals) * (q.T @ (theta - d.b)))


def combine_domains(coeffs: Sequence[float], members: Sequence) -> CombinedDomain:
    coeffs = tuple(float(c) for c in coeffs)
    members = tuple(members)
    if not members or len(coeffs) != len(members):
        raise ArgumentError("coefficients and members must have equal nonzero length")
    dims = {m.dim for m in members}
    if len(dims) != 1:
        raise ArgumentError(f"members have inconsistent dimensions {sorted(dims)}")
    if not all(math.isfinite(c) for c in coeffs):
        raise ArgumentError("coefficients must be finite")
    return CombinedDomain(coeffs, members)


def loss_difference(d, theta_a, theta_b) -> float:
    """``L(theta_a) - L(theta_b)``, computed without cancellation for quadratics."""
    if is_quadratic(d):
        diff = np.asarray(theta_a, dtype=float) - np.asarray(theta_b, dtype=float)
        _, g = d.loss_grad(theta_b)
        a, _ = d.quadratic_parts()
        return float(g @ diff + 0.5 * diff @ a @ diff)
    return d.loss(theta_a) - d.loss(theta_b)


# --- synthetic regression data for the MLP domains ---------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    n_in: int = 4
    n_out: int = 1
    n_samples: int = 256
    identical: bool = False  # both domains share inputs and targets
    noise: float = 0.0


def _target_sin(x, u):
    return np.sin(2.0 * (x @ u))


def _target_poly(x, u):
    z = x @ u
    return 0.5 * (z * z - 1.0) + 0.3 * z


def gen_synthetic_datasets(seed: int, cfg: SyntheticConfig = SyntheticConfig()):
    """Two regression datasets over a shared Gaussian input law.

    Domain 1 targets a sine of a random projection, domain 2 a quadratic
    polynomial of another projection. Returns ``((x1, y1), (x2, y2))``.
    """
    if cfg.n_samples < 1 or cfg.n_in < 1 or cfg.n_out < 1:
        raise ArgumentError("sample count and dimensions must be positive")
    rng = Prng(seed)
    dirs = [rng.normals(cfg.n_in * cfg.n_out).reshape(cfg.n_in, cfg.n_out) / math.sqrt(cfg.n_in) for _ in range(2)]
    x1 = rng.normals(cfg.n_samples * cfg.n_in).reshape(cfg.n_samples, cfg.n_in)
    y1 = _target_sin(x1, dirs[0]) + cfg.noise * rng.normals(cfg.n_samples * cfg.n_out).reshape(cfg.n_samples, -1)
    if cfg.identical:
        return (x1, y1), (x1.copy(), y1.copy())
    x2 = rng.normals(cfg.n_samples * cfg.n_in).reshape(cfg.n_samples, cfg.n_in)
    y2 = _target_poly(x2, dirs[1]) + cfg.noise * rng.normals(cfg.n_samples * cfg.n_out).reshape(cfg.n_samples, -1)
    return (x1, y1), (x2, y2)


def make_mlp_domain(layer_sizes, dataset) -> MlpDomain:
    x, y = dataset
    return MlpDomain(tuple(layer_sizes), x, y)


def init_mlp_params(layer_sizes, rng: Prng) -> np.ndarray:
    """Gaussian init scaled by 1/sqrt(fan_in); biases start at zero."""
    n_in, h, n_out = layer_sizes
    w1 = rng.normals(h * n_in) / math.sqrt(n_in)
    w2 = rng.normals(n_out * h) / math.sqrt(h)
    return np.concatenate([w1, np.zeros(h), w2, np.zeros(n_out)])


def write_dataset_csv(dataset, path) -> None:
    x, y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in dataset)
    y = y.reshape(x.shape[0], -1)
    header = [f"x{i}" for i in range(x.shape[1])] + [f"y{i}" for i in range(y.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in np.hstack([x, y]):
            writer.writerow([format(float(val), ".17g") for val in row])


def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader], dtype=float)
    n_in = sum(1 for h in header if h.startswith("x"))
    rows = rows.reshape(-1, len(header))
    return rows[:, :n_in], rows[:, n_in:]
