"""Independent oracles the tests check implementations against.

These deliberately avoid the library's own code paths: gradients come from
central finite differences, apportionments from exhaustive search.
"""

import numpy as np


def finite_difference(f, x, h=1e-4):
    """Central-difference gradient of scalar ``f`` at array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric):
    """max |a - n| normalized by max(1, largest numeric component)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(numeric))) if numeric.size else 0.0)
    return float(np.max(np.abs(analytic - numeric))) / scale


def fd_check(f, x, analytic, h=1e-4, tol=1e-4):
    """Assert the analytic gradient of ``f`` at ``x`` against central FD."""
    err = max_rel_error(analytic, finite_difference(f, x, h))
    assert err < tol, f"gradient mismatch: max relative error {err:.3e} >= {tol}"
    return err


def enumerate_apportionment(total, weights):
    """Exhaustive three-way seat allocation minimizing L1 distance to the
    exact quotas; ties broken toward earlier parts getting more seats."""
    assert len(weights) == 3
    norm = sum(weights)
    quotas = [total * w / norm for w in weights]
    best = None
    for a in range(total + 1):
        for b in range(total + 1 - a):
            c = total - a - b
            dist = abs(a - quotas[0]) + abs(b - quotas[1]) + abs(c - quotas[2])
            if best is None or dist < best[0] - 1e-12:
                best = (dist, (a, b, c))
    return best[1]
