import ast
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omarray import _kernels
from omarray._kernels import numba_kernels, numpy_kernels, select_backend
from omarray.rng import derive_seed
from omarray.superlattice import LatticeConfig

needs_numba = pytest.mark.skipif(numba_kernels is None, reason="numba not importable")


@needs_numba
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(0.1, 50), st.floats(-5, 5)),
                min_size=0, max_size=5))
def test_lorentzian_sum_backends_agree(lines):
    x = np.linspace(-1200, 1200, 301)
    c, g, h = (np.array([l[i] for l in lines], dtype=float) for i in range(3))
    np.testing.assert_allclose(numba_kernels.lorentzian_sum(x, c, g, h),
                               numpy_kernels.lorentzian_sum(x, c, g, h), rtol=1e-13, atol=1e-13)


@needs_numba
@given(st.floats(-1, 1), st.lists(st.tuples(st.floats(0.1, 5), st.floats(-50, 50), st.floats(0.5, 30)),
                                  min_size=1, max_size=3))
def test_model_jacobian_backends_agree(offset, peaks):
    x = np.arange(-100.0, 101.0)
    p = np.array([offset] + [v for pk in peaks for v in pk])
    m1, j1 = numba_kernels.lorentzian_model_jac(x, p)
    m2, j2 = numpy_kernels.lorentzian_model_jac(x, p)
    np.testing.assert_allclose(m1, m2, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(j1, j2, rtol=1e-12, atol=1e-13)


@needs_numba
def test_lattice_kernels_backends_agree():
    cfg = LatticeConfig.default()
    args = (cfg.k_a, cfg.k_b, cfg.depth_a, cfg.depth_b)
    z = np.linspace(0, 20e-6, 20001)
    s1 = numba_kernels.potential_slope(z, *args)
    np.testing.assert_allclose(s1, numpy_kernels.potential_slope(z, *args), rtol=1e-12, atol=1e-40)
    i = np.flatnonzero((s1[:-1] < 0) & (s1[1:] > 0))
    lo, hi = np.ascontiguousarray(z[i]), np.ascontiguousarray(z[i + 1])
    a = numba_kernels.bisect_minima(lo, hi, *args, 1e-15)
    b = numpy_kernels.bisect_minima(lo, hi, *args, 1e-15)
    np.testing.assert_allclose(a, b, atol=2e-15)


def test_select_backend(monkeypatch):
    assert select_backend("numpy") is numpy_kernels
    with pytest.raises(ValueError):
        select_backend("fortran")
    monkeypatch.setenv("OMARRAY_BACKEND", "numpy")
    assert select_backend() is numpy_kernels
    assert _kernels.BACKEND in ("numba", "numpy")


def _site_bytes(backend):
    code = ("import numpy as np; from omarray._kernels import BACKEND; "
            "from omarray.superlattice import LatticeConfig, find_sites; "
            "s = find_sites(LatticeConfig.default(), 0.0, 10e-6); "
            "print(BACKEND, repr([x.position for x in s]))")
    env = dict(os.environ, OMARRAY_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split(" ", 1)


@needs_numba
def test_environment_switch_selects_backend_with_same_sites():
    nb, a = _site_bytes("numba")
    npy, b = _site_bytes("numpy")
    assert (nb, npy) == ("numba", "numpy")
    np.testing.assert_allclose(ast.literal_eval(a), ast.literal_eval(b), atol=1e-14)


def test_derive_seed():
    assert derive_seed(1, "mri", 3) == derive_seed(1, "mri", 3)
    assert derive_seed(1, "mri", 3) != derive_seed(1, "mri", 4)
    assert derive_seed(1, "mri", 3) != derive_seed(2, "mri", 3)
    assert 0 <= derive_seed(2**64 - 1, "x") < 2**63
