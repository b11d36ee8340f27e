"""Shared finite-difference oracles and comparison helpers.

The analytic derivative engine is validated against central differences.
Those oracles carry their own floating-point noise floors, so comparisons
use ``|a - b| <= rtol*|b| + abs_floor`` with floors sized from the standard
roundoff estimates: ~eps*|f|/h for a first difference and ~4*eps*|f|/h^2
for a second difference, times a small safety factor.
"""

import numpy as np
import pytest

EPS = np.finfo(np.float64).eps


def central_diff(f, x, h):
    """(f(x+h) - f(x-h)) / 2h for scalar x and scalar-valued f."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def second_diff(f, x, h):
    """(f(x+h) - 2 f(x) + f(x-h)) / h^2 for scalar x and scalar-valued f."""
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def fd_param_gradient(f, params, h, indices=None):
    """Central-difference gradient of scalar f over selected parameter indices."""
    params = np.asarray(params, dtype=np.float64)
    idx_list = list(range(params.size)) if indices is None else list(indices)
    out = np.empty(len(idx_list))
    for k, i in enumerate(idx_list):
        p = params.copy()
        p[i] = params[i] + h
        fp = f(p)
        p[i] = params[i] - h
        fm = f(p)
        out[k] = (fp - fm) / (2.0 * h)
    return out


def assert_close(a, b, rtol, abs_floor=0.0, label="value"):
    """Componentwise |a-b| <= rtol*|b| + abs_floor."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    assert a.shape == b.shape
    err = np.abs(a - b)
    tol = rtol * np.abs(b) + abs_floor
    worst = np.argmax(err - tol)
    assert np.all(err <= tol), (
        f"{label}: component {worst} differs: {a.flat[worst]!r} vs {b.flat[worst]!r} "
        f"(err {err.flat[worst]:.3e}, tol {tol.flat[worst]:.3e})"
    )


def first_diff_floor(f_scale, h, safety=50.0):
    """Absolute noise floor of a central first difference of f at scale f_scale."""
    return safety * EPS * max(1.0, abs(f_scale)) / h


def second_diff_floor(f_scale, h, safety=10.0):
    """Absolute noise floor of a central second difference of f at scale f_scale."""
    return safety * 4.0 * EPS * max(1.0, abs(f_scale)) / (h * h)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
