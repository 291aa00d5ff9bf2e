"""The numba kernels and their numpy twins must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fewjumps import _kernels_numba as NB
from fewjumps import _kernels_numpy as NP
from fewjumps.models import GaussPowerModel, MdpGaussModel


@given(arrays(np.float64, st.tuples(st.integers(1, 50), st.integers(1, 4)),
              elements=st.floats(-3, 3)),
       arrays(np.float64, 4, elements=st.floats(-2, 2)))
@settings(max_examples=60, deadline=None)
def test_orthant_hits(batch, thr):
    thr = np.ascontiguousarray(thr[: batch.shape[1]])
    assert NB.orthant_hits(batch, thr) == NP.orthant_hits(batch, thr)


@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 7)),
              elements=st.floats(-5, 5)))
@settings(max_examples=60, deadline=None)
def test_project_simplex(x):
    a, b = NB.project_simplex_rows(x), NP.project_simplex_rows(x)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(a >= 0)


def test_project_simplex_is_nearest_point():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 4))
    p = NP.project_simplex_rows(x)
    # optimality: (x - p) . (s - p) <= 0 for simplex vertices s
    for s in np.eye(4):
        assert np.all(np.einsum("ij,ij->i", x - p, s - p) <= 1e-12)


@pytest.mark.parametrize("rank", [1, 2, 3])
def test_signed_quadform(rank):
    rng = np.random.default_rng(rank)
    a = rng.standard_normal((3, rank))
    m = GaussPowerModel(a @ a.T, 3)
    y = np.vstack([rng.random((40, 3)), np.abs(m.Sigma @ rng.standard_normal((20, 3)).T).T])
    args = (m.Sigma_pinv, m.range_projector, m._signs, 1e-8)
    r1, r2 = NB.signed_quadform_min(y, *args), NP.signed_quadform_min(y, *args)
    assert np.array_equal(np.isinf(r1), np.isinf(r2))
    fin = np.isfinite(r1)
    assert np.allclose(r1[fin], r2[fin], rtol=1e-12)


@pytest.mark.parametrize("rank", [1, 2, 4])
def test_face_qp_signed(rank):
    rng = np.random.default_rng(10 + rank)
    a = rng.standard_normal((4, rank))
    m = GaussPowerModel(a @ a.T, 3)
    t = rng.random((50, 4))
    t[rng.random(t.shape) < 0.25] = 0.0
    v1, y1 = NB.face_qp_min(t, m.Sigma, *m._faces, True)
    v2, y2 = NP.face_qp_min(t, m.Sigma, *m._faces, True)
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-15)
    assert np.allclose(y1, y2, atol=1e-10)


def test_face_qp_unsigned():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    m = MdpGaussModel(a @ a.T + 0.1 * np.eye(3))
    t = rng.random((30, 3)) + 0.05
    v1, y1 = NB.face_qp_min(t, m.Sigma, *m._faces, False)
    v2, y2 = NP.face_qp_min(t, m.Sigma, *m._faces, False)
    assert np.allclose(v1, v2, rtol=1e-12)
    assert np.allclose(y1, y2, atol=1e-10)


@pytest.mark.parametrize("k, n", [(1, 7), (2, 30), (3, 6)])
def test_oracle_min(k, n):
    rng = np.random.default_rng(k)
    jgrid = rng.random((n + 1,) * k)
    jgrid.flat[0] = 0.0
    v1, a1 = NB.oracle_min(jgrid, k, n)
    v2, a2 = NP.oracle_min(jgrid, k, n)
    assert v1 == v2
    assert np.array_equal(np.asarray(a1), np.asarray(a2))
    parts = np.asarray(a1).reshape(k, k) if k > 1 else np.asarray(a1)
    assert np.all(parts.sum(axis=0) == n)


def test_oracle_min_k3_brute_force():
    rng = np.random.default_rng(9)
    n = 3
    jgrid = rng.random((n + 1,) * 3)
    comps = [(a, b, n - a - b) for a in range(n + 1) for b in range(n + 1 - a)]
    best = min(sum(jgrid[c1[r], c2[r], c3[r]] for r in range(3))
               for c1 in comps for c2 in comps for c3 in comps)
    assert NP.oracle_min(jgrid, 3, n)[0] == pytest.approx(best, abs=1e-15)


def test_env_flag_selects_backend():
    code = "from fewjumps import kernels; print(kernels.BACKEND)"
    for flag, want in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, FEWJUMPS_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True).stdout.strip()
        assert out == want


def test_backends_give_same_rate():
    code = ("import numpy as np; from fewjumps import models, ratefn;"
            "h = models.to_rate_handle(models.TwoJumpModel(0.1));"
            "e = ratefn.rate_I(h, [1.0, 1.0]); print(repr(e.value))")
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, FEWJUMPS_DISABLE_NUMBA=flag)
        vals.append(float(subprocess.run([sys.executable, "-c", code], env=env,
                                         capture_output=True, text=True, check=True).stdout))
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
