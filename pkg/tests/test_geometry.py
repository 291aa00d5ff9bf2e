import math

import numpy as np
import pytest
from scipy import stats

from fewjumps import geometry as G
from fewjumps.errors import PreconditionError
from fewjumps.models import moment_Mq
from fewjumps.ratefn import OptimizerOptions
from fewjumps.sampling import SeededStream

FAST = OptimizerOptions(random_restarts=8)


def stream(i=0):
    return SeededStream(77, i)


# --- Stiefel samples -------------------------------------------------------

@pytest.mark.parametrize("m, N", [(1, 1), (1, 5), (3, 3), (3, 300), (10, 40)])
def test_rows_orthonormal(m, N):
    v = G.sample_stiefel(m, N, stream())
    assert v.V.shape == (m, N)
    assert v.orthonormality_error() < 1e-10


def test_stiefel_bad_shape():
    with pytest.raises(PreconditionError):
        G.sample_stiefel(4, 3, stream())
    with pytest.raises(PreconditionError):
        G.sample_stiefel(0, 3, stream())


def test_single_row_is_uniform_on_sphere():
    # for m = 1 each squared entry has mean 1/N
    N = 20
    sq = np.array([G.sample_stiefel(1, N, stream().substream(i)).V[0] ** 2 for i in range(2000)])
    assert sq.sum(axis=1) == pytest.approx(1.0)
    se = sq[:, 0].std() / math.sqrt(len(sq))
    assert abs(sq[:, 0].mean() - 1 / N) < 4 * se


def test_projected_column_moment_matches_gaussian():
    u = np.array([0.6, 0.0, 0.8])
    vals = np.array([G.stiefel_moment(G.sample_stiefel(3, 300, stream().substream(i)), u, 3.0)
                     for i in range(400)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - moment_Mq(3.0)) < 4 * se


def test_haar_invariance_of_first_column():
    # distribution of a fixed coordinate is unchanged by a permutation of columns
    a = np.array([G.sample_stiefel(2, 30, stream().substream(i)).V[0, 0] for i in range(1500)])
    b = np.array([G.sample_stiefel(2, 30, stream(1).substream(i)).V[1, 7] for i in range(1500)])
    assert stats.ks_2samp(a, b).pvalue > 1e-3


# --- support functions -----------------------------------------------------

@pytest.mark.parametrize("p", [1.2, 1.5, 1.9])
def test_support_function_two_ways(p):
    v = G.sample_stiefel(4, 50, stream())
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        assert G.support_function(v, p, u) == pytest.approx(G.support_function_dual(v, p, u),
                                                            rel=1e-10)


def test_support_function_attained_and_not_exceeded():
    # Hoelder maximizer reaches the value; random points of the ball stay below
    p = 1.5
    q = p / (p - 1)
    v = G.sample_stiefel(2, 8, stream())
    u = np.array([0.0, 1.0])
    scale = 8 ** (1 / p - 0.5)
    a = v.V.T @ u
    x = np.sign(a) * np.abs(a) ** (q - 1)
    x /= np.linalg.norm(x, ord=p)
    assert scale * x @ a == pytest.approx(G.support_function(v, p, u), rel=1e-12)
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(20000, 8))
    pts /= np.linalg.norm(pts, ord=p, axis=1, keepdims=True)
    assert np.max(scale * pts @ a) <= G.support_function(v, p, u)


@pytest.mark.parametrize("p", [1.0, 2.0, 2.5])
def test_p_outside_range(p):
    v = G.sample_stiefel(2, 4, stream())
    with pytest.raises(PreconditionError):
        G.support_function(v, p, [1.0, 0.0])


def test_non_unit_direction_rejected():
    v = G.sample_stiefel(2, 4, stream())
    with pytest.raises(PreconditionError):
        G.support_function(v, 1.5, [1.0, 1.0])


def test_support_concentrates_for_large_N():
    p = 1.5
    q = p / (p - 1)
    v = G.sample_stiefel(2, 200_000, stream())
    assert G.support_function(v, p, [0.0, 1.0]) == pytest.approx(moment_Mq(q) ** (1 / q), rel=2e-2)


# --- direction sets --------------------------------------------------------

def test_direction_set_validation():
    with pytest.raises(PreconditionError):
        G.DirectionSet(2, [[1.0, 1.0]])
    with pytest.raises(PreconditionError):
        G.DirectionSet(2, [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(PreconditionError):
        G.DirectionSet(3, [[1.0, 0.0]])
    ds = G.DirectionSet(2, [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(PreconditionError):
        ds.gram(3)
    with pytest.raises(ValueError):
        ds.directions[0, 0] = 2.0


@pytest.mark.parametrize("m", [2, 3, 5])
def test_spiral_directions_are_spread(m):
    ds = G.spiral_directions(m, 200)
    assert len(ds) == 200
    d = ds.directions
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    # roughly centered: low-discrepancy points leave a small resultant
    assert np.linalg.norm(d.mean(axis=0)) < 0.1


def test_spiral_is_deterministic_and_prefix_stable():
    a = G.spiral_directions(4, 10).directions
    b = G.spiral_directions(4, 30).directions
    assert np.array_equal(a, b[:10])


def test_direction_csv(tmp_path):
    ds = G.spiral_directions(3, 4)
    ds.to_csv(tmp_path / "d.csv")
    back = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back, ds.directions)


# --- support rate ----------------------------------------------------------

def test_first_rate_closed_form():
    q, f = 3.0, 1.5
    ds = G.spiral_directions(2, 4)
    res = G.support_rate(ds, [f] * 4, q, k_max=1, opts=FAST)
    assert res.J_seq[0] == pytest.approx((f ** q - moment_Mq(q)) ** (2 / q) / 2, rel=1e-9)


def test_orthonormal_directions_double():
    ds = G.DirectionSet(2, np.eye(2))
    res = G.support_rate(ds, [1.4, 1.4], 4.0, k_max=2, opts=FAST)
    assert res.J_seq[1] == pytest.approx(2 * res.J_seq[0], rel=1e-6)
    assert res.sup_value == res.J_seq[1]


def test_floor_value_gives_zero():
    q = 3.0
    floor = moment_Mq(q) ** (1 / q)
    res = G.support_rate(G.spiral_directions(3, 5), [floor] * 5, q, k_max=5, opts=FAST)
    assert res.J_seq == [0.0] * 5
    assert res.sup_value == 0.0
    assert res.converged


def test_sequence_nondecreasing():
    ds = G.spiral_directions(2, 5)
    res = G.support_rate(ds, [1.3, 1.6, 1.45, 1.5, 1.7], 3.0, k_max=5, opts=FAST)
    assert all(b >= a - 1e-9 for a, b in zip(res.J_seq, res.J_seq[1:]))


def test_rotation_invariance():
    ds = G.spiral_directions(3, 4)
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    f = [1.5, 1.3, 1.6, 1.4]
    a = G.support_rate(ds, f, 3.0, k_max=3, opts=FAST)
    b = G.support_rate(ds.rotated(rot), f, 3.0, k_max=3, opts=FAST)
    assert np.allclose(a.J_seq, b.J_seq, rtol=1e-12, atol=1e-14)


def test_collinear_directions_use_pseudoinverse():
    ds = G.DirectionSet(2, [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    res = G.support_rate(ds, [1.5, 1.5, 1.5], 3.0, k_max=3, opts=FAST)
    assert np.all(np.isfinite(res.J_seq))
    # the second direction is redundant: |<x,u>| is the same event
    assert res.J_seq[1] == pytest.approx(res.J_seq[0], rel=1e-6)


def test_support_rate_preconditions():
    ds = G.spiral_directions(2, 3)
    floor = moment_Mq(3.0) ** (1 / 3)
    with pytest.raises(PreconditionError):
        G.support_rate(ds, [floor * 0.9] * 3, 3.0, k_max=2)
    with pytest.raises(PreconditionError):
        G.support_rate(ds, [1.5] * 3, 2.0, k_max=2)
    with pytest.raises(PreconditionError):
        G.support_rate(ds, [1.5] * 3, 3.0, k_max=4)


def test_support_rate_csv(tmp_path):
    res = G.support_rate(G.spiral_directions(2, 3), [1.5] * 3, 3.0, k_max=2, opts=FAST)
    res.to_csv(tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "k,f,J_k" and len(rows) == 3
