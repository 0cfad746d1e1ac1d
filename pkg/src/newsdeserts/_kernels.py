"""Hot numeric kernels with numba-compiled and pure-numpy execution paths.

The JIT path is used when numba imports cleanly and the environment variable
``NEWSDESERTS_NUMBA`` is unset or truthy; setting it to ``0``/``false``/``no``
selects the pure-Python fallback. Both paths run the same source, so results
agree to floating-point roundoff. ``benchmarks/bench_kernels.py`` times the
two lanes side by side.
"""

import math
import os

import numpy as np


def _env_wants_numba():
    return os.environ.get("NEWSDESERTS_NUMBA", "1").strip().lower() not in (
        "0", "false", "no", "off",
    )


def _py_deviance_sum(y, mu):
    # 2*sum[y*ln(y/mu) - (y - mu)], with the y=0 log term taken as 0.
    total = 0.0
    for i in range(y.shape[0]):
        yi = y[i]
        mi = mu[i]
        if yi > 0.0:
            total += yi * math.log(yi / mi) - (yi - mi)
        else:
            total += mi
    return 2.0 * total


def _py_cd_solve(x, w, z, beta, lam1, lam2, penalized, tol, max_sweeps):
    """Cyclic coordinate descent on the weighted least-squares surrogate.

    Minimizes (1/2n) sum_i w_i (z_i - x_i.beta)^2
              + lam1 * sum_j |beta_j| + lam2/2 * sum_j beta_j^2
    with the penalty applied only where ``penalized[j]`` is set. ``beta`` is
    updated in place; returns the number of sweeps used.
    """
    n, p = x.shape
    r = np.empty(n)
    for i in range(n):
        acc = z[i]
        for j in range(p):
            acc -= x[i, j] * beta[j]
        r[i] = acc
    a = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * x[i, j] * x[i, j]
        a[j] = s / n
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in range(p):
            if a[j] == 0.0:
                continue
            g = 0.0
            for i in range(n):
                g += w[i] * x[i, j] * r[i]
            g = g / n + a[j] * beta[j]
            old = beta[j]
            if penalized[j]:
                if g > lam1:
                    new = (g - lam1) / (a[j] + lam2)
                elif g < -lam1:
                    new = (g + lam1) / (a[j] + lam2)
                else:
                    new = 0.0
            else:
                new = g / a[j]
            delta = new - old
            if delta != 0.0:
                for i in range(n):
                    r[i] -= x[i, j] * delta
                beta[j] = new
                change = a[j] * delta * delta
                if change > max_change:
                    max_change = change
        if max_change < tol:
            break
    return sweeps


HAS_NUMBA = False
_nb_deviance_sum = None
_nb_cd_solve = None

try:
    from numba import njit

    _nb_deviance_sum = njit(cache=True)(_py_deviance_sum)
    _nb_cd_solve = njit(cache=True)(_py_cd_solve)
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass

NUMBA_ENABLED = HAS_NUMBA and _env_wants_numba()


def set_numba(enabled):
    """Switch the active execution lane; used by tests and the benchmark."""
    global NUMBA_ENABLED
    if enabled and not HAS_NUMBA:
        raise RuntimeError("numba is not importable in this environment")
    NUMBA_ENABLED = bool(enabled)


def deviance_sum(y, mu):
    if NUMBA_ENABLED:
        return _nb_deviance_sum(y, mu)
    return _py_deviance_sum(y, mu)


def cd_solve(x, w, z, beta, lam1, lam2, penalized, tol, max_sweeps):
    if NUMBA_ENABLED:
        return _nb_cd_solve(x, w, z, beta, lam1, lam2, penalized, tol, max_sweeps)
    return _py_cd_solve(x, w, z, beta, lam1, lam2, penalized, tol, max_sweeps)
