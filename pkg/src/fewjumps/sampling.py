"""Samplers, orthant tail estimators and empirical rate curves.

Randomness comes from numpy's Philox counter-based generator. A
:class:`SeededStream` names a stream by ``(seed, stream_id)`` plus an
optional substream path, so large jobs can be cut into chunks that are
drawn independently and reduced by integer hit counts; the result does not
depend on how many threads run the chunks.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special, stats

from . import kernels
from .errors import PreconditionError, UnsupportedError
from .models import (BivariateGaussPower, GaussPowerModel, MdpGaussModel, Model,
                     MultivariateWeibullModel, TwoJumpModel, gausspower_J, model_to_json,
                     to_rate_handle)

DEFAULT_CHUNK = 1 << 18


@dataclass(frozen=True)
class SeededStream:
    seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.path):
            if not 0 <= int(v) < 2 ** 64:
                raise PreconditionError("seed and stream ids must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *self.path))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id, self.path + (int(index),))


def _gauss(model):
    return model.as_gauss_power() if isinstance(model, BivariateGaussPower) else model


def _check_n(n):
    if int(n) < 1:
        raise PreconditionError("n must be at least 1")
    return int(n)


def _gauss_factor(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        evals, evecs = np.linalg.eigh(sigma)
        return evecs * np.sqrt(np.clip(evals, 0.0, None))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_gaussian(sigma, n: int, s: SeededStream) -> np.ndarray:
    """n draws of N(0, sigma); Cholesky factor, eigen factor when semidefinite."""
    sigma = np.asarray(sigma, dtype=float)
    z = s.generator().standard_normal((_check_n(n), sigma.shape[0]))
    return z @ _gauss_factor(sigma).T


def sample_gausspower(m, n: int, s: SeededStream) -> np.ndarray:
    """Centered componentwise powers ``|G_j|^q - Sigma_jj^{q/2} M_q``."""
    m = _gauss(m)
    g = sample_gaussian(m.Sigma, n, s)
    return np.abs(g) ** m.q - m.mu_q


def sample_mo_weibull(m: MultivariateWeibullModel, n: int, s: SeededStream) -> np.ndarray:
    """Uncentered Marshall-Olkin Weibull vectors (exact joint survival)."""
    e = s.generator().standard_exponential((_check_n(n), m.k + 1))
    u = np.minimum(e[:, 1:] / m.lambdas, e[:, :1] / m.lambda0)
    return u ** (1.0 / m.alpha)


def sample_twojump(m: TwoJumpModel, n: int, s: SeededStream) -> np.ndarray:
    n = _check_n(n)
    rng = s.generator()
    r = rng.standard_exponential(n) ** 2          # P(R >= t) = exp(-sqrt(t))
    flip = rng.integers(0, 2, n).astype(bool)
    v = np.where(flip[:, None], [m.epsilon, 1.0], [1.0, m.epsilon])
    signs = 1.0 - 2.0 * rng.integers(0, 2, (n, 2))
    return r[:, None] * v * signs


def sample_model(model: Model, n: int, s: SeededStream) -> np.ndarray:
    """Dispatch to the family sampler. Gaussian families return centered draws."""
    if isinstance(model, (GaussPowerModel, BivariateGaussPower)):
        return sample_gausspower(model, n, s)
    if isinstance(model, MultivariateWeibullModel):
        return sample_mo_weibull(model, n, s)
    if isinstance(model, TwoJumpModel):
        return sample_twojump(model, n, s)
    if isinstance(model, MdpGaussModel):
        return sample_gaussian(model.Sigma, n, s)
    raise PreconditionError(f"no sampler for {type(model).__name__}")


def model_alpha(model: Model) -> float:
    if isinstance(model, MdpGaussModel):
        return 2.0
    return float(model.alpha)


def model_mean(model: Model) -> np.ndarray:
    """Mean of the sampler output (zero except for the uncentered Weibull)."""
    if isinstance(model, MultivariateWeibullModel):
        return model.mean
    return np.zeros(model.k)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass
class TailEstimate:
    t: np.ndarray
    x: float
    hits: int
    n: int
    log_prob: float
    ci_low: float
    ci_high: float

    def normalized(self, speed: float) -> Tuple[float, float, float]:
        """``(log_prob, ci_low, ci_high) / speed``."""
        return self.log_prob / speed, self.ci_low / speed, self.ci_high / speed

    def covers(self, log_p: float) -> bool:
        return self.ci_low <= log_p <= self.ci_high


def clopper_pearson(hits: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(a / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(stats.beta.ppf(1 - a / 2, hits + 1, n - hits))
    return lo, hi


def _safe_log(p):
    return math.log(p) if p > 0 else -math.inf


def tail_estimate(t, x: float, hits: int, n: int, level: float = 0.95) -> TailEstimate:
    if not 0 <= hits <= n or n < 1:
        raise PreconditionError("need 0 <= hits <= n and n >= 1")
    lo, hi = clopper_pearson(hits, n, level)
    return TailEstimate(np.asarray(t, dtype=float), float(x), int(hits), int(n),
                        _safe_log(hits / n), _safe_log(lo), _safe_log(hi))


def estimate_orthant_tail(batch, t, x: float, level: float = 0.95) -> TailEstimate:
    """Fraction of rows with every coordinate >= x * t_j, with a Clopper-Pearson interval."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] < 1:
        raise PreconditionError("batch must be nonempty")
    if not x > 0:
        raise PreconditionError("x must be positive")
    t = np.asarray(t, dtype=float)
    hits = kernels.orthant_hits(np.ascontiguousarray(batch), np.ascontiguousarray(x * t))
    return tail_estimate(t, x, hits, batch.shape[0], level)


def _run_chunks(fn, n_chunks: int, threads: int) -> int:
    if threads <= 1 or n_chunks <= 1:
        return sum(fn(i) for i in range(n_chunks))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(fn, range(n_chunks)))


def count_orthant_hits(model: Model, threshold, n: int, s: SeededStream, *,
                       chunk: int = DEFAULT_CHUNK, threads: int = 1) -> int:
    """Orthant hit count over n draws, generated in fixed chunks on substreams."""
    n = _check_n(n)
    thr = np.ascontiguousarray(np.asarray(threshold, dtype=float))
    n_chunks = -(-n // chunk)

    def one(i):
        size = min(chunk, n - i * chunk)
        return kernels.orthant_hits(sample_model(model, size, s.substream(i)), thr)

    return _run_chunks(one, n_chunks, threads)


def estimate_model_tail(model: Model, t, x: float, n: int, s: SeededStream, *,
                        chunk: int = DEFAULT_CHUNK, threads: int = 1) -> TailEstimate:
    t = np.asarray(t, dtype=float)
    hits = count_orthant_hits(model, x * t, n, s, chunk=chunk, threads=threads)
    return tail_estimate(t, x, hits, n)


@dataclass
class EmpiricalRateCurve:
    t: np.ndarray
    alpha: float
    scales: List[float]
    normalized: List[float]
    ci_low: List[float]
    ci_high: List[float]
    predicted: float
    estimates: List[TailEstimate] = field(default_factory=list)

    def covered(self) -> List[bool]:
        return [lo <= self.predicted <= hi for lo, hi in zip(self.ci_low, self.ci_high)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "normalized", "ci_low", "ci_high", "predicted"])
            for row in zip(self.scales, self.normalized, self.ci_low, self.ci_high):
                w.writerow([repr(float(v)) for v in row] + [repr(float(self.predicted))])


def empirical_rate_curve(model: Model, t, scales: Sequence[float], n_per_scale: int,
                         s: SeededStream, *, threads: int = 1) -> EmpiricalRateCurve:
    """Normalized log orthant tail ``x^-alpha log P(X >= x t)`` per scale, with -J(t)."""
    scales = [float(x) for x in scales]
    if any(x <= 0 for x in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise PreconditionError("scales must be positive and increasing")
    t = np.asarray(t, dtype=float)
    h = to_rate_handle(model)
    predicted = -float(h.J(t)[0])
    curve = EmpiricalRateCurve(t, h.alpha, scales, [], [], [], predicted)
    for i, x in enumerate(scales):
        est = estimate_model_tail(model, t, x, n_per_scale, s.substream(i), threads=threads)
        norm, lo, hi = est.normalized(x ** h.alpha)
        curve.normalized.append(norm)
        curve.ci_low.append(lo)
        curve.ci_high.append(hi)
        curve.estimates.append(est)
    return curve


# ---------------------------------------------------------------------------
# deterministic deep-tail oracle for Gaussian powers
# ---------------------------------------------------------------------------

def gausspower_log_orthant(m, t, x: float = 1.0, *, epsrel: float = 1e-10) -> float:
    """log P(|G_1|^q >= x t_1, |G_2|^q >= x t_2) by adaptive quadrature.

    The density of (|G_1|, |G_2|) is integrated over the shifted quadrant
    y = y0 + (u, v), y0 = (x t)^{1/q}, with the dominant factor
    exp(-x^alpha J(t)) pulled out so the integrand stays O(1) at any depth.
    """
    m = _gauss(m)
    t = np.asarray(t, dtype=float)
    if m.k == 1:
        a = (x * t[0]) ** (1.0 / m.q) / math.sqrt(m.Sigma[0, 0])
        return math.log(2.0) + float(special.log_ndtr(-a))
    if m.k != 2:
        raise UnsupportedError("the quadrature oracle covers k <= 2")
    if not m.is_definite:
        raise PreconditionError("the quadrature oracle needs a definite Sigma")
    y0 = (x * t) ** (1.0 / m.q)
    inv = np.linalg.inv(m.Sigma)
    peak = float(gausspower_J(m, x * t))
    norm = 2.0 * math.pi * math.sqrt(np.linalg.det(m.Sigma))
    scale = 1.0 / max(1.0, float(np.linalg.norm(inv @ y0)))
    signs = [np.array(e) for e in ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))]

    def f(v, u):
        y = y0 + scale * np.array([u, v])
        acc = 0.0
        for e in signs:
            ye = e * y
            acc += math.exp(peak - 0.5 * float(ye @ inv @ ye))
        return acc

    val, _ = integrate.dblquad(f, 0.0, np.inf, 0.0, np.inf, epsabs=0.0, epsrel=epsrel)
    return math.log(val * scale * scale / norm) - peak


# ---------------------------------------------------------------------------
# sums
# ---------------------------------------------------------------------------

def sum_experiment(model: Model, N: int, x_N: float, t, n_trials: int, s: SeededStream, *,
                   chunk: Optional[int] = None, threads: int = 1) -> TailEstimate:
    """Estimate P(sum_{i<=N} (X_i - E X) >= x_N t) from n_trials independent sums.

    Gaussian summands use the exact identity sum ~ sqrt(N) N(0, Sigma), so
    the cost does not grow with N; other families are summed explicitly.
    """
    N = _check_n(N)
    n_trials = _check_n(n_trials)
    if not x_N > 0:
        raise PreconditionError("x_N must be positive")
    t = np.asarray(t, dtype=float)
    if t.shape != (model.k,):
        raise PreconditionError(f"t must have shape ({model.k},)")
    thr = np.ascontiguousarray(x_N * t)
    gaussian = isinstance(model, MdpGaussModel)
    if chunk is None:
        chunk = DEFAULT_CHUNK if gaussian or N == 1 else max(1, DEFAULT_CHUNK // N)
    mean = model_mean(model)
    n_chunks = -(-n_trials // chunk)

    def one(i):
        rows = min(chunk, n_trials - i * chunk)
        sub = s.substream(i)
        if gaussian:
            sums = math.sqrt(N) * sample_gaussian(model.Sigma, rows, sub)
        else:
            draws = sample_model(model, rows * N, sub).reshape(rows, N, model.k)
            sums = draws.sum(axis=1) - N * mean
        return kernels.orthant_hits(np.ascontiguousarray(sums), thr)

    hits = _run_chunks(one, n_chunks, threads)
    return tail_estimate(t, x_N, hits, n_trials)


def twojump_planted_log_bound(m: TwoJumpModel, N: int, delta: float) -> float:
    """log of the two planted-jump factors, 2 log((1/8) exp(-sqrt((1+delta) N))).

    Lower-bounds log P(sum X_i >= N (1, 1)) up to the law-of-large-numbers
    factor for the remaining N - 2 summands.
    """
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    return 2.0 * (math.log(0.125) - math.sqrt((1.0 + delta) * N))


# ---------------------------------------------------------------------------
# left tails
# ---------------------------------------------------------------------------

@dataclass
class LeftTailReport:
    c: np.ndarray
    bounded_below: np.ndarray
    violations: List[int]

    @property
    def passed(self) -> bool:
        return not self.violations


def support_lower_bound(model: Model) -> np.ndarray:
    """Lower end of the support of the centered sampler output (-inf when unbounded)."""
    if isinstance(model, (GaussPowerModel, BivariateGaussPower)):
        return -_gauss(model).mu_q
    if isinstance(model, MultivariateWeibullModel):
        return -model.mean
    return np.full(model.k, -np.inf)


def check_left_tail(batch, alpha: float, c_grid: Optional[Sequence[float]] = None, *,
                    lower_bound=None, min_hits: int = 20) -> LeftTailReport:
    """Largest c_j with log P(Y_j <= -t) <= -c_j t^alpha over the observed range.

    Coordinates whose support is bounded below (``lower_bound`` finite) get
    c_j = +inf provided no sample falls below the bound. Otherwise c_j is the
    minimum of -log P_hat(Y_j <= -t) / t^alpha over grid points with at
    least ``min_hits`` exceedances; a non-positive fit is a violation.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    n, k = batch.shape
    if n < 1:
        raise PreconditionError("batch must be nonempty")
    lb = np.full(k, -np.inf) if lower_bound is None else np.asarray(lower_bound, dtype=float)
    c = np.empty(k)
    bounded = np.isfinite(lb)
    violations = []
    for j in range(k):
        col = batch[:, j]
        if bounded[j]:
            c[j] = math.inf
            if np.any(col < lb[j] - 1e-9 * (1 + abs(lb[j]))):
                violations.append(j)
            continue
        neg = np.sort(-col[col < 0])[::-1]
        if len(neg) < min_hits:
            c[j] = math.inf
            continue
        grid = (np.asarray(c_grid, dtype=float) if c_grid is not None
                else np.geomspace(max(np.median(neg), 1e-12), neg[min_hits - 1], 40))
        best = math.inf
        for tv in grid:
            hits = int(np.count_nonzero(-col >= tv))
            if hits < min_hits or tv <= 0:
                continue
            best = min(best, -math.log(hits / n) / tv ** alpha)
        c[j] = best
        if not best > 0:
            violations.append(j)
    return LeftTailReport(c, bounded, violations)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_batch_csv(path, batch, model: Model) -> None:
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    with open(path, "w", newline="") as fh:
        fh.write("# model: " + json.dumps(model_to_json(model), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(batch.shape[1])])
        for row in batch:
            w.writerow([repr(float(v)) for v in row])
