import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obcsaa import _kernels as K


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31), st.booleans())
def test_topk_paths_agree(d, seed, coarse):
    rng = np.random.default_rng(seed)
    mag = np.abs(rng.standard_normal(d))
    if coarse:
        mag = np.round(mag, 1)  # many ties
    k = int(rng.integers(1, d + 1))
    a = K.np_topk_indices(mag, k)
    b = K.nb_topk_indices(mag, k)
    np.testing.assert_array_equal(a, b)
    order = sorted(range(d), key=lambda i: (-mag[i], i))[:k]
    np.testing.assert_array_equal(a, sorted(order))


def test_column_matvec_paths_agree():
    rng = np.random.default_rng(1)
    phi = np.asfortranarray(rng.standard_normal((40, 300)))
    idx = np.sort(rng.choice(300, 25, replace=False))
    vals = rng.standard_normal(25)
    vals[3] = 0.0
    want = phi @ np.bincount(idx, weights=vals, minlength=300)
    np.testing.assert_allclose(K.np_column_matvec(phi, idx, vals), want, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(K.nb_column_matvec(phi, idx, vals), want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("u", [1, 3, 9, 14])
def test_enumeration_paths_agree(u):
    rng = np.random.default_rng(u)
    k = rng.integers(100, 5000, u).astype(float)
    caps = rng.uniform(1e-5, 1e-3, u)
    args = (k, caps, 20.0, 30.0, float(rng.uniform(1e-9, 1e-6)), 0.5)
    m1, r1 = K.np_enumerate_schedules(*args, chunk=64)
    m2, r2 = K.nb_enumerate_schedules(*args)
    assert m1 == m2
    assert r1 == pytest.approx(r2, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31))
def test_admm_r_block_paths_agree(u, seed):
    rng = np.random.default_rng(seed)
    num = rng.uniform(-1, 2, u)
    den = rng.uniform(0.5, 3, u)
    k = rng.dirichlet(np.ones(u))
    g = float(rng.uniform(1e-4, 1.0))
    r1 = K.np_admm_r_block(num, den, k, g, 1e-6)
    r2 = K.nb_admm_r_block(num, den, k, g, 1e-6)
    np.testing.assert_allclose(r1, r2, rtol=1e-8, atol=1e-12)
    # fixed point: s = sum k r(s)
    s = float(k @ r1)
    np.testing.assert_allclose(r1, np.maximum(1e-6, (num + g * k * s**-3.0) / den), rtol=1e-6)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_backend_flag(flag, expected):
    env = dict(os.environ, OBCSAA_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import obcsaa; print(obcsaa.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
