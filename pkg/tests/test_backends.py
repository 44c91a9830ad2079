"""The numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from slabcover import _kernels as K
from slabcover.cover import GraphStack, LipschitzGraph
from slabcover.poset import _sheared

pytestmark = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba disabled")

NB, NP = (K.backend("numba"), K.backend("numpy")) if K.HAS_NUMBA else (None, None)


def test_levels(rng):
    for _ in range(50):
        X = rng.random((int(rng.integers(1, 150)), 3))
        X = X[np.lexsort((X[:, 1], X[:, 0]))]
        for j in range(3):
            assert np.array_equal(NB["levels_dp"](X, j), NP["levels_dp"](X, j))
        _, br, _, _ = _sheared(X[:, :2], 0)
        nr = int(br.max()) + 1
        assert np.array_equal(NB["levels_sheared"](br, nr), NP["levels_sheared"](br, nr))
        w = rng.random(len(br))
        assert np.array_equal(NB["max_antichain_sheared"](br, nr, w), NP["max_antichain_sheared"](br, nr, w))


def test_graph_kernels(rng):
    graphs = [LipschitzGraph(1, rng.random((5, 1)), rng.random(5) * 0.1) for _ in range(6)]
    a, b = GraphStack(graphs, NB), GraphStack(graphs, NP)
    p = rng.random((300, 1))
    assert np.array_equal(a.evaluate(p), b.evaluate(p))
    graphs = [LipschitzGraph(1, rng.random((5, 2)), rng.random(5) * 0.1) for _ in range(6)]
    a, b = GraphStack(graphs, NB), GraphStack(graphs, NP)
    p = rng.random((300, 2))
    assert np.allclose(a.evaluate(p), b.evaluate(p), rtol=0, atol=1e-15)


def test_row_kernels(rng):
    C = np.sort(rng.random((400, 7)), axis=1)
    assert np.array_equal(NB["separate_rows"](C, 0.03), NP["separate_rows"](C, 0.03))
    S = NB["separate_rows"](C, 0.03)
    z = rng.random(400)
    f1, d1 = NB["collapse_rows"](S, z, 0.015)
    f2, d2 = NP["collapse_rows"](S, z, 0.015)
    assert np.array_equal(f1, f2) and np.array_equal(d1, d2)
    P, v = rng.random((80, 2)), rng.random(80)
    assert NB["max_lip_excess"](P, v) == pytest.approx(NP["max_lip_excess"](P, v), abs=1e-15)


def test_env_flag_selects_numpy(tmp_path):
    env = dict(os.environ, SLABCOVER_DISABLE_NUMBA="1")
    code = "from slabcover import _kernels as K; print(K.BACKEND, K.HAS_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]


def test_pipeline_under_numpy_backend(tmp_path):
    env = dict(os.environ, SLABCOVER_DISABLE_NUMBA="1")
    code = (
        "from slabcover import gen_cantor_product, run_experiment\n"
        "r = run_experiment(gen_cantor_product(1/3, 3), 0.3)\n"
        "print(r.passed, repr(r.det_integral), repr(r.eta))\n"
    )
    out_np = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    out_nb = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out_np.stdout == out_nb.stdout and out_np.stdout.startswith("True")
