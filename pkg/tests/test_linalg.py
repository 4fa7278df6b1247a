import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainorder.errors import ArgumentError, NumericError
from domainorder.linalg import (
    Prng,
    _splitmix64,
    mat_exp_sym,
    mat_mul,
    mat_vec,
    power_law_spectrum,
    random_orthogonal,
    sym_eigh,
)

from conftest import random_spd


# --- PRNG -------------------------------------------------------------------


def test_splitmix64_reference_vector():
    # First output of splitmix64 from state 0 (reference implementation).
    assert _splitmix64(0)[1] == 0xE220A8397B1DCDAF


def test_xoshiro_reference_sequence():
    p = Prng(0)
    p._s = [1, 2, 3, 4]
    assert [p.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]


def test_prng_golden_outputs():
    p = Prng(42)
    assert [p.next_u64() for _ in range(3)] == [1546998764402558742, 6990951692964543102, 12544586762248559009]
    np.testing.assert_array_equal(
        Prng(7).normals(4),
        [-0.2790239910251981, 1.5277231859624536, 1.8997685786889567, -0.2266957459968598],
    )


def test_prng_streams_deterministic_and_distinct():
    assert Prng(5).normals(10).tolist() == Prng(5).normals(10).tolist()
    assert Prng.derive(0, 1).next_u64() == Prng.derive(0, 1).next_u64()
    firsts = {Prng.derive(0, i).next_u64() for i in range(200)}
    assert len(firsts) == 200


def test_uniform_range_and_normal_moments():
    p = Prng(11)
    u = np.array([p.uniform() for _ in range(20000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    z = Prng(12).normals(20000)
    assert abs(z.mean()) < 0.03
    assert abs(z.var() - 1.0) < 0.04


def test_normal_ks_statistic():
    z = np.sort(Prng(3).normals(5000))
    cdf = 0.5 * (1.0 + np.array([math.erf(x / math.sqrt(2.0)) for x in z]))
    n = z.size
    d = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    # 1% critical value of the one-sample KS statistic.
    assert d < 1.63 / math.sqrt(n)


# --- matrix helpers ---------------------------------------------------------


def test_mat_vec_and_mat_mul_match_naive_loops(rng):
    a = rng.normals(12).reshape(3, 4)
    b = rng.normals(8).reshape(4, 2)
    v = rng.normals(4)
    naive_av = [sum(a[i, k] * v[k] for k in range(4)) for i in range(3)]
    naive_ab = [[sum(a[i, k] * b[k, j] for k in range(4)) for j in range(2)] for i in range(3)]
    np.testing.assert_allclose(mat_vec(a, v), naive_av, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(mat_mul(a, b), naive_ab, rtol=1e-14, atol=1e-14)


def test_shape_mismatch_rejected():
    with pytest.raises(ArgumentError):
        mat_vec(np.eye(3), np.ones(2))
    with pytest.raises(ArgumentError):
        mat_mul(np.eye(3), np.eye(2))


# --- eigensolver ------------------------------------------------------------


def test_sym_eigh_diagonal_and_2x2():
    vals, q = sym_eigh(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_array_equal(vals, [3.0, 2.0, 1.0])
    vals, _ = sym_eigh([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(vals, [3.0, 1.0], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 5, 16, 33])
def test_sym_eigh_reconstruction(n, rng):
    a = random_spd(n, rng) - 1.0 * np.eye(n)
    vals, q = sym_eigh(a)
    assert np.all(np.diff(vals) <= 0)
    np.testing.assert_allclose(q.T @ q, np.eye(n), atol=1e-10)
    assert np.linalg.norm(q @ np.diag(vals) @ q.T - a) <= 1e-9 * np.linalg.norm(a)
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-11)


def test_sym_eigh_rejects_asymmetric():
    with pytest.raises(ArgumentError):
        sym_eigh([[1.0, 2.0], [0.0, 1.0]])


def test_sym_eigh_nonconvergence_reports_residual(monkeypatch):
    import domainorder.linalg as la

    monkeypatch.setattr(la, "JACOBI_MAX_SWEEPS", 0)
    with pytest.raises(NumericError) as info:
        la.sym_eigh([[1.0, 0.5], [0.5, 1.0]])
    assert info.value.residual > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32))
def test_sym_eigh_property(n, seed):
    a = random_spd(n, Prng(seed), lo=-2.0, hi=2.0)
    vals, q = sym_eigh(a)
    assert np.linalg.norm(q @ np.diag(vals) @ q.T - a) <= 1e-9 * max(np.linalg.norm(a), 1e-300)
    assert np.allclose(q.T @ q, np.eye(n), atol=1e-10)


# --- matrix exponential -----------------------------------------------------


def _taylor_expm(a, terms=30):
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def test_mat_exp_matches_taylor_series(rng):
    a = random_spd(6, rng, lo=-1.0, hi=1.0)
    np.testing.assert_allclose(mat_exp_sym(a, 0.7), _taylor_expm(0.7 * a), rtol=1e-12, atol=1e-13)


def test_mat_exp_identities(rng):
    a = random_spd(5, rng)
    np.testing.assert_allclose(mat_exp_sym(a, 0.0), np.eye(5), atol=1e-14)
    np.testing.assert_allclose(mat_exp_sym(a, 0.3) @ mat_exp_sym(a, 0.4), mat_exp_sym(a, 0.7), rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(mat_exp_sym(a, 1.0) @ mat_exp_sym(a, -1.0), np.eye(5), atol=1e-12)


def test_mat_exp_overflow_guard():
    with pytest.raises(NumericError):
        mat_exp_sym(np.eye(2) * 1000.0, 1.0)
    with pytest.raises(ArgumentError):
        mat_exp_sym(np.eye(2), math.inf)


# --- random orthogonal, spectra ---------------------------------------------


def test_random_orthogonal_golden():
    expected = [
        [0.5574185019423572, -0.8114912623759316, 0.1754039474466153],
        [0.6893625443810709, 0.33465451404120267, -0.6424839598280275],
        [-0.4626703968234778, -0.4790493579156151, -0.7459542992595742],
    ]
    np.testing.assert_allclose(random_orthogonal(3, Prng(123)), expected, rtol=0, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32))
def test_random_orthogonal_is_orthogonal(n, seed):
    c = random_orthogonal(n, Prng(seed))
    assert np.allclose(c.T @ c, np.eye(n), atol=1e-12)


def test_random_orthogonal_haar_first_entry_moments():
    # For Haar O(n), E[c_11] = 0 and E[c_11^2] = 1/n.
    n, rng = 4, Prng(99)
    vals = np.array([random_orthogonal(n, rng)[0, 0] for _ in range(3000)])
    assert abs(vals.mean()) < 0.03
    assert abs((vals**2).mean() - 1.0 / n) < 0.02


def test_power_law_spectrum():
    np.testing.assert_allclose(power_law_spectrum(4, 0.5), [1.0, 0.5, 0.25, 0.125])
    np.testing.assert_array_equal(power_law_spectrum(3, 1.0), [1.0, 1.0, 1.0])
    with pytest.raises(ArgumentError):
        power_law_spectrum(3, 0.0)
    with pytest.raises(ArgumentError):
        power_law_spectrum(0, 0.5)
