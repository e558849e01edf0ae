import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lcs_ref
from radaug import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@settings(max_examples=200)
@given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
def test_lcs_numpy_matches_recursion(a, b):
    assert K.lcs_length_numpy(np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)) == lcs_ref(a, b)


@needs_numba
@settings(max_examples=200)
@given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
def test_lcs_numba_matches_recursion(a, b):
    assert K.lcs_length_numba(np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)) == lcs_ref(a, b)


@needs_numba
def test_lcs_paths_agree_long():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.integers(0, 20, 300), rng.integers(0, 20, 257)
        assert K.lcs_length_numba(a, b) == K.lcs_length_numpy(a, b)


@needs_numba
@pytest.mark.parametrize("shape,pool", [((8, 16, 16, 5), (2, 2, 2)), ((4, 6, 9, 3), (2, 3, 3)),
                                        ((2, 2, 2, 1), (1, 1, 1))])
def test_mean_pool_paths_agree(shape, pool):
    x = np.random.default_rng(0).normal(size=shape)
    np.testing.assert_allclose(K.mean_pool3d_numba(x, pool), K.mean_pool3d_numpy(x, pool), rtol=0, atol=1e-12)


@needs_numba
def test_attention_paths_agree():
    rng = np.random.default_rng(1)
    q, k, v = rng.normal(size=(40, 6)), rng.normal(size=(40, 8, 6)), rng.normal(size=(40, 8, 3))
    out_a, w_a = K.local_attention_numba(q, k, v)
    out_b, w_b = K.local_attention_numpy(q, k, v)
    np.testing.assert_allclose(out_a, out_b, atol=1e-12)
    np.testing.assert_allclose(w_a, w_b, atol=1e-12)


def test_env_flag_selects_fallback():
    env = {**os.environ, "RADAUG_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", "from radaug import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
