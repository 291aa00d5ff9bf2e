"""Random projections of l_p balls: Stiefel sampling, support functions, support rates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import special

from .errors import EvaluationError, PreconditionError
from .models import GaussPowerModel, moment_Mq, to_rate_handle
from .ratefn import OptimizerOptions, rate_I
from .sampling import SeededStream

CONVERGENCE_RTOL = 1e-3


@dataclass(frozen=True, eq=False)
class StiefelSample:
    m: int
    N: int
    V: np.ndarray

    def orthonormality_error(self) -> float:
        return float(np.linalg.norm(self.V @ self.V.T - np.eye(self.m)))


def _inv_sqrt_psd(w):
    evals, evecs = np.linalg.eigh(w)
    if evals[0] <= 1e-12 * evals[-1]:
        return None
    return (evecs / np.sqrt(evals)) @ evecs.T


def sample_stiefel(m: int, N: int, s: SeededStream) -> StiefelSample:
    """Haar-distributed m x N matrix with orthonormal rows, V = (G G'/N)^{-1/2} G / sqrt(N)."""
    if not 1 <= m <= N:
        raise PreconditionError("need 1 <= m <= N")
    for attempt in range(2):
        rng = (s if attempt == 0 else s.substream(1)).generator()
        g = rng.standard_normal((m, N))
        root = _inv_sqrt_psd(g @ g.T / N)
        if root is not None:
            return StiefelSample(m, N, root @ g / math.sqrt(N))
    raise EvaluationError("Gaussian Gram matrix is numerically singular twice in a row")


def _conjugate(p: float) -> float:
    if not 1.0 < p < 2.0:
        raise PreconditionError("p must lie in (1, 2)")
    return p / (p - 1.0)


def _unit(u, m):
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (m,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise PreconditionError(f"u must be a unit vector of length {m}")
    return u


def stiefel_moment(sample: StiefelSample, u, q: float) -> float:
    """(1/N) sum_i |<sqrt(N) v_i, u>|^q over the columns v_i of V."""
    u = _unit(u, sample.m)
    proj = math.sqrt(sample.N) * (u @ sample.V)
    return float(np.mean(np.abs(proj) ** q))


def support_function(sample: StiefelSample, p: float, u) -> float:
    """Support value of N^{1/p - 1/2} V B_p^N in direction u, via the column moments."""
    q = _conjugate(p)
    return stiefel_moment(sample, u, q) ** (1.0 / q)


def support_function_dual(sample: StiefelSample, p: float, u) -> float:
    """Same quantity through the dual norm, N^{1/p - 1/2} ||V' u||_q."""
    q = _conjugate(p)
    u = _unit(u, sample.m)
    return sample.N ** (1.0 / p - 0.5) * float(np.linalg.norm(sample.V.T @ u, ord=q))


# ---------------------------------------------------------------------------
# direction sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DirectionSet:
    m: int
    directions: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if d.shape[1] != self.m:
            raise PreconditionError(f"directions must have {self.m} columns")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-12):
            raise PreconditionError("directions must be unit vectors")
        cos = np.clip(d @ d.T, -1.0, 1.0)
        np.fill_diagonal(cos, -1.0)
        if len(d) > 1 and np.max(cos) >= 1.0 - 1e-12:
            raise PreconditionError("directions must be pairwise distinct")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    def __len__(self) -> int:
        return len(self.directions)

    def gram(self, k: int) -> np.ndarray:
        if not 1 <= k <= len(self):
            raise PreconditionError(f"k must lie in [1, {len(self)}]")
        d = self.directions[:k]
        return d @ d.T

    def rotated(self, rotation) -> "DirectionSet":
        rotation = np.asarray(rotation, dtype=float)
        d = self.directions @ rotation.T
        return DirectionSet(self.m, d / np.linalg.norm(d, axis=1, keepdims=True))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"u{j + 1}" for j in range(self.m)])
            for row in self.directions:
                w.writerow([repr(float(v)) for v in row])


def _phi(d: int) -> float:
    # positive root of x^{d+1} = x + 1
    x = 2.0
    for _ in range(60):
        x = (1.0 + x) ** (1.0 / (d + 1))
    return x


def spiral_directions(m: int, n: int) -> DirectionSet:
    """Deterministic low-discrepancy directions on the unit sphere.

    m = 2 uses golden-angle steps on the circle; m = 3 the Fibonacci spiral;
    larger m push the additive golden-ratio sequence through the Gaussian
    quantile and normalize.
    """
    if m < 1 or n < 1:
        raise PreconditionError("need m >= 1 and n >= 1")
    j = np.arange(n, dtype=float)
    if m == 1:
        if n > 2:
            raise PreconditionError("the 0-sphere has only two points")
        return DirectionSet(1, np.array([[1.0], [-1.0]])[:n])
    if m == 2:
        ang = 2.0 * math.pi * ((j * (math.sqrt(5.0) - 1.0) / 2.0) % 1.0)
        return DirectionSet(2, np.column_stack([np.cos(ang), np.sin(ang)]))
    if m == 3:
        z = 1.0 - (2.0 * j + 1.0) / n
        r = np.sqrt(1.0 - z * z)
        ang = math.pi * (3.0 - math.sqrt(5.0)) * j
        return DirectionSet(3, np.column_stack([r * np.cos(ang), r * np.sin(ang), z]))
    g = _phi(m)
    steps = np.array([g ** -(i + 1) for i in range(m)])
    pts = (0.5 + np.outer(j + 1.0, steps)) % 1.0
    z = special.ndtri(pts)
    return DirectionSet(m, z / np.linalg.norm(z, axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# support rate
# ---------------------------------------------------------------------------

@dataclass
class SupportRateResult:
    f_values: np.ndarray
    q: float
    J_seq: List[float]
    sup_value: float
    k_max: int
    converged: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "f", "J_k"])
            for k, (f, v) in enumerate(zip(self.f_values, self.J_seq), start=1):
                w.writerow([k, repr(float(f)), repr(float(v))])


def support_rate(ds: DirectionSet, f_values: Sequence[float], q: float, k_max: int = 6,
                 opts: Optional[OptimizerOptions] = None) -> SupportRateResult:
    """J_1, ..., J_kmax for the support-function deviation of projected l_p balls.

    J_k is the few-jumps rate of the Gaussian-power model with covariance the
    leading k x k Gram matrix, evaluated at f(u_j)^q - M_q. Coordinates where
    that excess is zero impose no constraint and are dropped, leaving the
    marginal model on the remaining directions.
    """
    if not q > 2:
        raise PreconditionError("q must exceed 2")
    f = np.asarray(f_values, dtype=float).reshape(-1)
    if not 1 <= k_max <= min(len(ds), len(f)):
        raise PreconditionError("k_max must not exceed the number of directions or f values")
    mq = moment_Mq(q)
    floor = mq ** (1.0 / q)
    if np.any(f < floor * (1.0 - 1e-12)):
        raise PreconditionError("every f value must be at least M_q^(1/q)")
    excess = np.maximum(f ** q - mq, 0.0)
    excess[excess <= 1e-12 * mq] = 0.0
    seq = []
    ok = True
    for k in range(1, k_max + 1):
        live = np.flatnonzero(excess[:k] > 0)
        if live.size == 0:
            seq.append(0.0)
            continue
        gram = ds.gram(k)[np.ix_(live, live)]
        h = to_rate_handle(GaussPowerModel(gram, q))
        ev = rate_I(h, excess[live], opts)
        ok &= ev.converged
        seq.append(float(ev.value))
    sup = max(seq)
    if k_max > 1 and seq[-1] - seq[-2] > CONVERGENCE_RTOL * seq[-1]:
        ok = False
    return SupportRateResult(f[:k_max], q, seq, sup, k_max, bool(ok))
