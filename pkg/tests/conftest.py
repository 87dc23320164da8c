import numpy as np
import pytest
from scipy.special import expit, logit

from semitail.tail import log_posterior_grid


def quadrature_moments(prior, v, center, k=500, width=7.0):
    """Posterior moments of (lambda, xi) by brute-force 2-D quadrature.

    The grid lives on (logit xi, log sigma) around ``center`` with the
    Jacobian folded in.  Returns E lambda, var lambda, E xi and the mass on
    the grid border (should be negligible).
    """
    n = len(v)
    xi0, sig0 = center
    s1 = (1 + xi0) / np.sqrt(n) / (xi0 * (1 - xi0))
    s2 = np.sqrt(2 * (1 + xi0) / n)
    a = np.linspace(logit(xi0) - width * s1, logit(xi0) + width * s1, k)
    b = np.linspace(np.log(sig0) - width * s2, np.log(sig0) + width * s2, k)
    A, B = np.meshgrid(a, b, indexing="ij")
    xi, sg = expit(A), np.exp(B)
    lp = log_posterior_grid(prior, v, xi, sg) + np.log(xi) + np.log1p(-xi) + B
    w = np.exp(lp - lp.max())
    w /= w.sum()
    lam = sg / (1 - xi)
    m = (w * lam).sum()
    border = w[0].sum() + w[-1].sum() + w[:, 0].sum() + w[:, -1].sum()
    return m, (w * lam**2).sum() - m**2, (w * xi).sum(), border


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: (s.split(":")[0], s)):
            terminalreporter.write_line(line)
