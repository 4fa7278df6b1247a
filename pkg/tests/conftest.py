import numpy as np
import pytest

from domainorder.domain import QuadraticDomain, make_quadratic_domain
from domainorder.linalg import Prng, gaussian_vector, power_law_spectrum


def random_spd(n, rng, lo=0.1, hi=2.0):
    """SPD matrix with eigenvalues drawn uniformly from [lo, hi]."""
    q, _ = np.linalg.qr(rng.normals(n * n).reshape(n, n))
    lam = lo + (hi - lo) * np.array([rng.uniform() for _ in range(n)])
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def random_quadratic(n, rng):
    return QuadraticDomain(random_spd(n, rng), gaussian_vector(n, rng))


def quad_pair(seed, n=10, decay=0.7):
    rng = Prng(seed)
    lam = power_law_spectrum(n, decay)
    return make_quadratic_domain(lam, rng), make_quadratic_domain(lam, rng), gaussian_vector(n, rng)


@pytest.fixture
def rng():
    return Prng(2024)


def stiff_quadratic(seed=5, n=6):
    """Quadratic with eigenvalues spread over [1, 5], for integrator order fits."""
    from domainorder.linalg import random_orthogonal

    rng = Prng(seed)
    c = random_orthogonal(n, rng)
    a = (c.T * np.linspace(1.0, 5.0, n)) @ c
    return QuadraticDomain(0.5 * (a + a.T), rng.normals(n)), 3.0 * rng.normals(n)


def integrator_order(method, hs=(1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3), tau=1.0):
    """Log-log slope of endpoint error against step size on a stiff quadratic."""
    from domainorder.domain import quadratic_closed_flow
    from domainorder.flow import IntegratorConfig, flow_map_numeric

    d, theta = stiff_quadratic()
    exact = quadratic_closed_flow(d, tau, theta)
    errs = [np.linalg.norm(flow_map_numeric(d, tau, theta, IntegratorConfig(method, h)) - exact) for h in hs]
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
