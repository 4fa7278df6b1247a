"""Dense linear algebra kernel.

Matrices and vectors are plain float64 numpy arrays. The eigensolver is a
parallel-ordered cyclic Jacobi method; the matrix exponential is built on top
of it, so only symmetric inputs are supported.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, NumericError

SYMMETRY_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-12

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Prng:
    """xoshiro256** generator seeded through splitmix64.

    Gaussian variates use the Box-Muller transform; the second variate of each
    pair is cached. Streams are reproducible per seed within this package.
    """

    def __init__(self, seed: int):
        sm = int(seed) & _MASK64
        s = []
        for _ in range(4):
            sm, out = _splitmix64(sm)
            s.append(out)
        if not any(s):
            s[0] = 1
        self._s = s
        self._spare: float | None = None

    @classmethod
    def derive(cls, base_seed: int, index: int) -> "Prng":
        """Independent stream for worker/seed ``index`` under ``base_seed``."""
        _, mixed = _splitmix64((int(base_seed) & _MASK64) ^ _splitmix64(int(index) & _MASK64)[1])
        return cls(mixed)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self._spare = r * math.sin(angle)
        return r * math.cos(angle)

    def normals(self, count: int) -> np.ndarray:
        return np.fromiter((self.normal() for _ in range(count)), dtype=float, count=count)


def as_vector(v, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ArgumentError(f"{name} has dimension {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def as_matrix(a, name: str = "matrix", square: bool = True) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or min(arr.shape) < 1 or (square and arr.shape[0] != arr.shape[1]):
        kind = "square and non-empty" if square else "two-dimensional and non-empty"
        raise ArgumentError(f"{name} must be {kind}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def mat_vec(a, v) -> np.ndarray:
    a = as_matrix(a, square=False)
    v = as_vector(v, a.shape[1])
    return a @ v


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, "a", square=False)
    b = as_matrix(b, "b", square=False)
    if a.shape[1] != b.shape[0]:
        raise ArgumentError(f"dimension mismatch: {a.shape} times {b.shape}")
    return a @ b


def _check_symmetric(a: np.ndarray) -> None:
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_TOL:
        raise ArgumentError(f"matrix is not symmetric (max |a_ij - a_ji| = {asym:.3e})")


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Tournament pairings: every index pair meets exactly once over m-1 rounds.
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([players[k] for k in range(m // 2)])
        q = np.array([players[m - 1 - k] for k in range(m // 2)])
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so that
    the rotations of one round act on disjoint index pairs and can be applied
    together. Returns ``(eigenvalues, q)`` with eigenvalues sorted descending
    and ``a = q @ diag(eigenvalues) @ q.T``.
    """
    a = as_matrix(a)
    _check_symmetric(a)
    n = a.shape[0]
    w = 0.5 * (a + a.T)
    v = np.eye(n)
    norm = float(np.linalg.norm(w))
    target = JACOBI_REL_TOL * norm
    m = n + (n % 2)
    rounds = [
        (p[q < n], q[q < n]) for p, q in _round_robin(m)
    ] if n > 1 else []

    def off_norm() -> float:
        return float(np.linalg.norm(w - np.diag(np.diag(w))))

    off = off_norm()
    sweeps = 0
    while off > target:
        if sweeps >= JACOBI_MAX_SWEEPS:
            raise NumericError(
                f"Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps", residual=off
            )
        for p, q in rounds:
            apq = w[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (w[q, q] - w[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            wp, wq = w[:, p].copy(), w[:, q].copy()
            w[:, p] = c * wp - s * wq
            w[:, q] = s * wp + c * wq
            wp, wq = w[p, :].copy(), w[q, :].copy()
            w[p, :] = c[:, None] * wp - s[:, None] * wq
            w[q, :] = s[:, None] * wp + c[:, None] * wq
            w[p, q] = 0.0
            w[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        sweeps += 1
        off = off_norm()
    vals = np.diag(w).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def _exp_from_eig(vals: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    x = t * vals
    if np.any(x > 709.0):
        raise NumericError(f"matrix exponential overflows (max t*lambda = {float(np.max(x)):.3g})")
    return (q * np.exp(x)) @ q.T


def mat_exp_sym(a, t: float) -> np.ndarray:
    """``exp(t * a)`` for symmetric ``a``."""
    if not math.isfinite(t):
        raise ArgumentError("t must be finite")
    vals, q = sym_eigh(a)
    return _exp_from_eig(vals, q, t)


def random_orthogonal(n: int, rng: Prng) -> np.ndarray:
    """Haar-distributed orthogonal matrix: Householder QR of a Gaussian matrix.

    The Gaussian entries are drawn row-major; R's diagonal is made positive.
    """
    if n < 1:
        raise ArgumentError("n must be >= 1")
    g = rng.normals(n * n).reshape(n, n)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def power_law_spectrum(n: int, decay: float) -> np.ndarray:
    """``decay**j`` for j = 0..n-1."""
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if not (0.0 < decay <= 1.0):
        raise ArgumentError(f"decay must lie in (0, 1], got {decay}")
    return np.array([decay**j for j in range(n)], dtype=float)


def gaussian_vector(n: int, rng: Prng) -> np.ndarray:
    if n < 1:
        raise ArgumentError("n must be >= 1")
    return rng.normals(n)
