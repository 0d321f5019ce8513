"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``OMARRAY_BACKEND``
(``numba`` or ``numpy``).  When unset, numba is used if it imports.
Both implementations are always importable as ``numpy_kernels`` and
``numba_kernels`` (the latter is ``None`` without numba) so tests and the
benchmark can compare them directly.
"""
import os
from types import SimpleNamespace

import numpy as np


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def _lorentzian_sum_np(x, centers, hwhm, heights):
    out = np.zeros(x.shape[0])
    for c, g, h in zip(centers, hwhm, heights):
        u = (x - c) / g
        out += h / (1.0 + u * u)
    return out


def _lorentzian_model_jac_np(x, params):
    # params = [offset, h0, c0, w0, h1, c1, w1, ...], w = full width
    n = x.shape[0]
    npk = (params.shape[0] - 1) // 3
    model = np.full(n, params[0])
    jac = np.empty((n, params.shape[0]))
    jac[:, 0] = 1.0
    for k in range(npk):
        h, c, w = params[1 + 3 * k: 4 + 3 * k]
        u = 2.0 * (x - c) / w
        lor = 1.0 / (1.0 + u * u)
        model += h * lor
        jac[:, 1 + 3 * k] = lor
        jac[:, 2 + 3 * k] = 4.0 * h * u * lor * lor / w
        jac[:, 3 + 3 * k] = 2.0 * h * u * u * lor * lor / w
    return model, jac


def _potential_slope_np(z, ka, kb, ua, ub):
    return ua * ka * np.sin(2.0 * ka * z) + ub * kb * np.sin(2.0 * kb * z)


def _bisect_minima_np(lo, hi, ka, kb, ua, ub, tol):
    # U'(lo) < 0 < U'(hi) on entry; all brackets refined together
    lo = lo.copy()
    hi = hi.copy()
    while lo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        neg = _potential_slope_np(mid, ka, kb, ua, ub) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


numpy_kernels = SimpleNamespace(
    name="numpy",
    lorentzian_sum=_lorentzian_sum_np,
    lorentzian_model_jac=_lorentzian_model_jac_np,
    potential_slope=_potential_slope_np,
    bisect_minima=_bisect_minima_np,
)


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

def _build_numba():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep in practice
        return None

    @njit(cache=True)
    def lorentzian_sum(x, centers, hwhm, heights):
        out = np.zeros(x.shape[0])
        for i in range(x.shape[0]):
            acc = 0.0
            for k in range(centers.shape[0]):
                u = (x[i] - centers[k]) / hwhm[k]
                acc += heights[k] / (1.0 + u * u)
            out[i] = acc
        return out

    @njit(cache=True)
    def lorentzian_model_jac(x, params):
        n = x.shape[0]
        npk = (params.shape[0] - 1) // 3
        model = np.empty(n)
        jac = np.empty((n, params.shape[0]))
        for i in range(n):
            acc = params[0]
            jac[i, 0] = 1.0
            for k in range(npk):
                h = params[1 + 3 * k]
                c = params[2 + 3 * k]
                w = params[3 + 3 * k]
                u = 2.0 * (x[i] - c) / w
                lor = 1.0 / (1.0 + u * u)
                acc += h * lor
                jac[i, 1 + 3 * k] = lor
                jac[i, 2 + 3 * k] = 4.0 * h * u * lor * lor / w
                jac[i, 3 + 3 * k] = 2.0 * h * u * u * lor * lor / w
            model[i] = acc
        return model, jac

    @njit(cache=True)
    def potential_slope(z, ka, kb, ua, ub):
        out = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            out[i] = ua * ka * np.sin(2.0 * ka * z[i]) + ub * kb * np.sin(2.0 * kb * z[i])
        return out

    @njit(cache=True)
    def bisect_minima(lo, hi, ka, kb, ua, ub, tol):
        out = np.empty(lo.shape[0])
        for i in range(lo.shape[0]):
            a = lo[i]
            b = hi[i]
            while b - a > tol:
                m = 0.5 * (a + b)
                s = ua * ka * np.sin(2.0 * ka * m) + ub * kb * np.sin(2.0 * kb * m)
                if s < 0.0:
                    a = m
                else:
                    b = m
            out[i] = 0.5 * (a + b)
        return out

    return SimpleNamespace(
        name="numba",
        lorentzian_sum=lorentzian_sum,
        lorentzian_model_jac=lorentzian_model_jac,
        potential_slope=potential_slope,
        bisect_minima=bisect_minima,
    )


numba_kernels = _build_numba()


def select_backend(name=None):
    """Return the kernel namespace for ``name`` (or the env default)."""
    name = (name or os.environ.get("OMARRAY_BACKEND", "")).strip().lower()
    if name in ("", "numba"):
        if numba_kernels is not None:
            return numba_kernels
        if name == "numba":
            raise RuntimeError("OMARRAY_BACKEND=numba but numba is not importable")
        return numpy_kernels
    if name == "numpy":
        return numpy_kernels
    raise ValueError(f"unknown OMARRAY_BACKEND {name!r}; use 'numba' or 'numpy'")


kernels = select_backend()
BACKEND = kernels.name
