"""Few-big-jumps rate functions.

Given an alpha-homogeneous tail exponent ``Jbar`` on the nonnegative orthant,
this module computes

* the monotone envelope ``J(t) = inf_{s >= t} Jbar(s)``,
* the rate ``I(t) = min sum_r J(t_r)`` over decompositions of ``t`` into at
  most ``k`` nonnegative parts (the optimizer and a brute-force grid oracle),
* structural probes (homogeneity, convexity/concavity).

Rate evaluators are vectorized: they take an ``(n, k)`` array of points and
return an ``(n,)`` array of values in ``[0, inf]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from . import kernels
from .errors import EvaluationError, PreconditionError, UnsupportedError

VECTOR_TOL = 1e-9

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RateFunctionHandle:
    """Tail-rate descriptor: dimension, homogeneity index and evaluators.

    ``eval_J`` is an optional exact evaluator of the monotone envelope. When
    it is absent and ``envelope_is_identity`` is false, the envelope is
    computed numerically by :func:`monotone_envelope`.
    """

    k: int
    alpha: float
    eval_Jbar: Evaluator
    envelope_is_identity: bool = False
    eval_J: Optional[Evaluator] = None
    name: str = "custom"

    def __post_init__(self):
        if self.k < 1:
            raise PreconditionError("dimension k must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise PreconditionError("alpha must lie in (0, 1)")

    def jbar(self, z) -> np.ndarray:
        z = _as_points(z, self.k)
        out = np.asarray(self.eval_Jbar(z), dtype=float)
        if np.isnan(out).any():
            raise EvaluationError(f"{self.name}: Jbar returned NaN")
        return out

    def J(self, t) -> np.ndarray:
        """Monotone envelope at each row of ``t`` (exact path when available)."""
        t = _as_points(t, self.k)
        if self.envelope_is_identity:
            return self.jbar(t)
        if self.eval_J is not None:
            out = np.asarray(self.eval_J(t), dtype=float)
            if np.isnan(out).any():
                raise EvaluationError(f"{self.name}: J returned NaN")
            return out
        return np.array([monotone_envelope(self, row) for row in t])


@dataclass(frozen=True)
class OptimizerOptions:
    random_restarts: int = 32
    agreement_tol: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 400
    cd_sweeps: int = 8
    line_grid: int = 17
    refine_top: int = 3
    nm_restart_steps: tuple = (0.05, 0.01)
    seed: int = 0


@dataclass(frozen=True)
class Decomposition:
    target: np.ndarray
    parts: np.ndarray
    part_rates: np.ndarray
    total: float

    @property
    def m(self) -> int:
        return len(self.parts)

    def residual(self) -> float:
        return float(np.max(np.abs(self.parts.sum(axis=0) - self.target)))


@dataclass(frozen=True)
class RateEvaluation:
    value: float
    decomposition: Decomposition
    method: str
    restarts_used: int
    converged: bool


@dataclass
class HomogeneityReport:
    max_violation: float
    worst_x: Optional[np.ndarray]
    worst_lambda: Optional[float]
    samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


@dataclass
class ConvexityReport:
    lambdas: np.ndarray
    mixed_values: np.ndarray
    chord_values: np.ndarray
    value_a: float
    value_b: float
    tol: float
    convexity_violations: list = field(default_factory=list)
    concavity_violations: list = field(default_factory=list)


def _as_points(z, k: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != k:
        raise PreconditionError(f"expected points of dimension {k}, got shape {z.shape}")
    return z


# ---------------------------------------------------------------------------
# monotone envelope
# ---------------------------------------------------------------------------

def monotone_envelope(h: RateFunctionHandle, t, *, box_factor: float = 10.0,
                      n_samples: int = 256, n_refine: int = 4, seed: int = 0,
                      full_output: bool = False):
    """Numerical ``inf_{s >= t} Jbar(s)`` by multi-start bounded local descent.

    The search runs over ``s = t + d`` with ``d`` in the box
    ``[0, box_factor * max(|t|, 1)]^k``; if the best point touches the outer
    face the box is doubled once. With ``full_output`` a dict with the
    minimizer, the box factor used and a ``finite`` flag is returned too.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape != (h.k,):
        raise PreconditionError(f"t must have shape ({h.k},)")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise PreconditionError("t must lie in the nonnegative orthant")

    if h.envelope_is_identity:
        v = float(h.jbar(t)[0])
        info = {"argmin": t.copy(), "finite": math.isfinite(v), "box_factor": 0.0}
        return (v, info) if full_output else v

    best_v, best_s, used = np.inf, t.copy(), box_factor
    for factor in (box_factor, 2.0 * box_factor):
        used = factor
        width = factor * max(float(np.linalg.norm(t)), 1.0)
        best_v, best_s = _envelope_search(h, t, width, n_samples, n_refine, seed)
        if not math.isfinite(best_v):
            continue
        if np.all(best_s - t < 0.99 * width):
            break
    info = {"argmin": best_s, "finite": math.isfinite(best_v), "box_factor": used}
    return (best_v, info) if full_output else best_v


def _envelope_search(h, t, width, n_samples, n_refine, seed):
    k = h.k
    sobol = qmc.Sobol(d=k, scramble=True, seed=seed)
    d = sobol.random(n_samples) * width
    axis = np.concatenate([np.outer(np.geomspace(1e-4, 1.0, 12) * width, np.eye(k)[j])
                           for j in range(k)])
    cand = np.vstack([np.zeros((1, k)), axis, d]) + t
    vals = h.jbar(cand)
    order = np.argsort(vals, kind="stable")
    best_v = float(vals[order[0]])
    best_s = cand[order[0]].copy()
    if not math.isfinite(best_v):
        return best_v, best_s

    def f(x):
        v = float(h.jbar(t + x)[0])
        return v if math.isfinite(v) else 1e300

    bounds = [(0.0, width)] * k
    for idx in order[:n_refine]:
        if not math.isfinite(vals[idx]):
            break
        res = optimize.minimize(f, cand[idx] - t, method="Powell", bounds=bounds,
                                options={"xtol": 1e-12, "ftol": 1e-14, "maxfev": 4000})
        x = np.clip(res.x, 0.0, width)
        v = float(h.jbar(t + x)[0])
        if v < best_v:
            best_v, best_s = v, t + x
    return best_v, best_s


# ---------------------------------------------------------------------------
# few-big-jumps rate
# ---------------------------------------------------------------------------

def _objective(h: RateFunctionHandle, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_r J(t * w[:, :, r]) for fraction arrays ``w`` of shape (P, k, m)."""
    p, k, m = w.shape
    parts = t[:, :, None] * w
    pts = parts.transpose(0, 2, 1).reshape(-1, k)
    return h.J(pts).reshape(p, m).sum(axis=1)


def _to_fractions(x: np.ndarray, k: int, m: int) -> np.ndarray:
    """Free coordinates (P, k*(m-1)) -> rows on the simplex, shape (P, k, m)."""
    p = x.shape[0]
    free = x.reshape(p, k, m - 1)
    last = 1.0 - free.sum(axis=2, keepdims=True)
    full = np.concatenate([free, last], axis=2).reshape(-1, m)
    return kernels.project_simplex_rows(np.ascontiguousarray(full)).reshape(p, k, m)


def _starts(k: int, opts: OptimizerOptions) -> np.ndarray:
    """Start fractions, shape (S, k, m): one jump, axis split, random splits."""
    m = k
    one = np.zeros((k, m))
    one[:, 0] = 1.0
    axis = np.eye(k)
    rng = np.random.Generator(np.random.Philox(opts.seed))
    rand = rng.dirichlet(np.ones(m), size=(opts.random_restarts, k))
    return np.concatenate([one[None], axis[None], rand])


def _coordinate_refine(h, t, w, f, opts: OptimizerOptions):
    """Pairwise-transfer line searches: move mass of one coordinate between two parts.

    Works in lockstep on P problems; each move is a global grid search along
    the segment followed by golden-section refinement around the best node.
    """
    p, k, m = w.shape
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    g = opts.line_grid
    nodes = np.linspace(0.0, 1.0, g)
    for _ in range(opts.cd_sweeps):
        f_start = f.copy()
        for j in range(k):
            for r, r2 in itertools.combinations(range(m), 2):
                total = w[:, j, r] + w[:, j, r2]
                # grid over the amount kept in part r
                cand = np.repeat(w[:, None], g, axis=1)
                amount = total[:, None] * nodes[None, :]
                cand[:, :, j, r] = amount
                cand[:, :, j, r2] = total[:, None] - amount
                fg = _objective(h, np.repeat(t, g, axis=0), cand.reshape(-1, k, m)).reshape(p, g)
                ib = np.argmin(fg, axis=1)
                lo = nodes[np.maximum(ib - 1, 0)] * total
                hi = nodes[np.minimum(ib + 1, g - 1)] * total
                best_amt = nodes[ib] * total
                best_f = fg[np.arange(p), ib]
                # golden section on [lo, hi]
                a, b = lo.copy(), hi.copy()
                c = b - gr * (b - a)
                d = a + gr * (b - a)

                def evaluate(x):
                    ww = w.copy()
                    ww[:, j, r] = x
                    ww[:, j, r2] = total - x
                    return _objective(h, t, ww)

                fc, fd = evaluate(c), evaluate(d)
                for _ in range(40):
                    left = fc < fd
                    b = np.where(left, d, b)
                    a = np.where(left, a, c)
                    fd_new = np.where(left, fc, fd)
                    fc_new = np.where(left, np.nan, fc)
                    c_new = np.where(left, b - gr * (b - a), d)
                    d_new = np.where(left, c, a + gr * (b - a))
                    x_eval = np.where(left, c_new, d_new)
                    fx = evaluate(x_eval)
                    fc = np.where(left, fx, fc_new)
                    fd = np.where(left, fd_new, fx)
                    c, d = c_new, d_new
                for x, fx in ((c, fc), (d, fd)):
                    better = fx < best_f
                    best_amt = np.where(better, x, best_amt)
                    best_f = np.where(better, fx, best_f)
                improve = best_f < f
                w[improve, j, r] = best_amt[improve]
                w[improve, j, r2] = total[improve] - best_amt[improve]
                f = np.where(improve, best_f, f)
        gain = np.where(np.isfinite(f_start), f_start - f, 0.0)
        if np.all(gain <= opts.tol * (1.0 + np.abs(f))):
            break
    return w, f


def _snap(h, t, w, f, tol: float):
    """Round near-0/near-1 fractions when that does not raise the objective."""
    snapped = np.where(w < 1e-7, 0.0, w)
    snapped /= snapped.sum(axis=2, keepdims=True)
    fs = _objective(h, t, snapped)
    ok = fs <= f + tol * (1.0 + np.abs(f))
    w = np.where(ok[:, None, None], snapped, w)
    f = np.where(ok, fs, f)
    return w, f


def _decomposition(h: RateFunctionHandle, t: np.ndarray, parts: np.ndarray) -> Decomposition:
    keep = np.linalg.norm(parts, axis=1) > VECTOR_TOL
    parts = parts[keep] if keep.any() else np.zeros((1, len(t)))
    order = np.lexsort(parts.T[::-1])
    parts = parts[order]
    rates = h.J(parts)
    total = 0.0
    for v in rates:
        total += float(v)
    return Decomposition(target=t.copy(), parts=parts, part_rates=rates, total=total)


def _tie_key(dec: Decomposition):
    return (dec.m, tuple(dec.parts.ravel()))


def rate_I_many(h: RateFunctionHandle, targets, opts: Optional[OptimizerOptions] = None
                ) -> list[RateEvaluation]:
    """Vectorized :func:`rate_I` over the rows of ``targets``.

    Each row is solved independently; the result for a row does not depend on
    which other rows share the batch.
    """
    opts = opts or OptimizerOptions()
    targets = _as_points(targets, h.k)
    if np.any(targets <= 0) or not np.all(np.isfinite(targets)):
        raise PreconditionError("rate_I requires strictly positive finite targets")
    b, k = targets.shape
    if k == 1:
        out = []
        for t in targets:
            dec = _decomposition(h, t, t[None, :])
            out.append(RateEvaluation(dec.total, dec, "optimizer", 1, True))
        return out

    m = k
    starts = _starts(k, opts)
    s = len(starts)
    tt = np.repeat(targets, s, axis=0)  # (b*s, k)
    w0 = np.tile(starts, (b, 1, 1))
    x0 = w0[:, :, : m - 1].reshape(b * s, -1)

    x_best, f_best = _lockstep_nm(h, tt, x0, k, m, opts, 0.1)
    for step in opts.nm_restart_steps:
        # a fresh simplex frees runs that collapsed on a kink or a clipped face
        x_new, f_new = _lockstep_nm(h, tt, _to_fractions(x_best, k, m)[:, :, : m - 1].reshape(len(tt), -1),
                                    k, m, opts, step)
        better = f_new < f_best
        x_best = np.where(better[:, None], x_new, x_best)
        f_best = np.where(better, f_new, f_best)
    w = _to_fractions(x_best, k, m)
    f = _objective(h, tt, w)

    # refine the best few starts of each target
    fmat = f.reshape(b, s)
    order = np.argsort(fmat, axis=1, kind="stable")[:, : opts.refine_top]
    sel = (np.arange(b)[:, None] * s + order).ravel()
    w_ref, f_ref = _coordinate_refine(h, tt[sel], w[sel].copy(), f[sel].copy(), opts)
    w_ref, f_ref = _snap(h, tt[sel], w_ref, f_ref, 1e-12)
    w[sel], f[sel] = w_ref, f_ref
    w_all, f_all = _snap(h, tt, w, f, 1e-12)

    results = []
    fmat = f_all.reshape(b, s)
    for i in range(b):
        t = targets[i]
        vals = fmat[i]
        srt = np.sort(vals)
        best = srt[0]
        converged = bool(math.isfinite(best) and
                         srt[1] - best <= opts.agreement_tol * max(abs(best), 1e-300))
        window = best + VECTOR_TOL * (1.0 + abs(best)) if math.isfinite(best) else best
        chosen = None
        for jdx in np.flatnonzero(vals <= window):
            parts = (t[:, None] * w_all[i * s + jdx]).T
            dec = _decomposition(h, t, parts)
            if chosen is None or _tie_key(dec) < _tie_key(chosen):
                chosen = dec
        if chosen is None:
            dec = _decomposition(h, t, t[None, :])
            results.append(RateEvaluation(dec.total, dec, "optimizer", s, False))
            continue
        results.append(RateEvaluation(chosen.total, chosen, "optimizer", s, converged))
    return results


def _lockstep_nm(h, tt, x0, k, m, opts, step):
    # NM evaluates arrays for a subset of problems (possibly several points
    # per problem, stacked block-wise); state["idx"] names that subset.
    state = {"idx": np.arange(x0.shape[0])}

    def fun(x):
        q = x.shape[0]
        ids = state["idx"]
        reps = q // len(ids)
        tvec = np.tile(tt[ids], (reps, 1)) if reps > 1 else tt[ids]
        return _objective(h, tvec, _to_fractions(x, k, m))

    return _nelder_mead_indexed(fun, state, x0, step, opts.max_iter, opts.tol, 1e-10)


def _nelder_mead_indexed(fun, state, x0, step, max_iter, ftol, xtol):
    """Lockstep Nelder-Mead over independent problems (adaptive coefficients)."""
    p, d = x0.shape
    a_r, a_e = 1.0, 1.0 + 2.0 / d
    a_c, a_s = 0.75 - 1.0 / (2 * d), 1.0 - 1.0 / d
    sim = np.repeat(x0[:, None, :], d + 1, axis=1)
    for i in range(d):
        sim[:, i + 1, i] += np.where(x0[:, i] + step <= 1.0, step, -step)
    rows = np.arange(p)
    # initial vertices: ordered vertex-major so that rows map via tiling
    state["idx"] = rows
    fs = fun(sim.transpose(1, 0, 2).reshape(-1, d)).reshape(d + 1, p).T
    active = np.ones(p, dtype=bool)
    for _ in range(max_iter):
        order = np.argsort(fs, axis=1, kind="stable")
        sim = np.take_along_axis(sim, order[:, :, None], axis=1)
        fs = np.take_along_axis(fs, order, axis=1)
        spread_f = np.where(np.isfinite(fs[:, -1]), fs[:, -1] - fs[:, 0], np.inf)
        spread_x = np.max(np.abs(sim[:, 1:] - sim[:, :1]), axis=(1, 2))
        active &= ~((spread_f <= ftol * (1.0 + np.abs(fs[:, 0]))) & (spread_x <= xtol))
        active &= np.isfinite(fs[:, 0])
        idx = rows[active]
        if idx.size == 0:
            break
        state["idx"] = idx
        s, f = sim[idx], fs[idx]
        xo = s[:, :-1].mean(axis=1)
        xw = s[:, -1]
        xr = xo + a_r * (xo - xw)
        fr = fun(xr)
        outside = fr < f[:, -1]
        xe = xo + a_e * (xr - xo)
        xc = np.where(outside[:, None], xo + a_c * (xr - xo), xo - a_c * (xo - xw))
        fe_fc = fun(np.vstack([xe, xc]))
        n_act = len(idx)
        fe, fc = fe_fc[:n_act], fe_fc[n_act:]

        new_x = xw.copy()
        new_f = f[:, -1].copy()
        better_than_best = fr < f[:, 0]
        mid = (~better_than_best) & (fr < f[:, -2])
        take_e = better_than_best & (fe < fr)
        take_r = (better_than_best & ~take_e) | mid
        rest = ~(better_than_best | mid)
        take_c = rest & np.where(outside, fc <= fr, fc < f[:, -1])
        shrink = rest & ~take_c
        new_x[take_e], new_f[take_e] = xe[take_e], fe[take_e]
        new_x[take_r], new_f[take_r] = xr[take_r], fr[take_r]
        new_x[take_c], new_f[take_c] = xc[take_c], fc[take_c]
        s[:, -1] = new_x
        f[:, -1] = new_f
        if shrink.any():
            js = np.flatnonzero(shrink)
            sh = s[js]
            sh[:, 1:] = sh[:, :1] + a_s * (sh[:, 1:] - sh[:, :1])
            state["idx"] = idx[js]
            f[js, 1:] = fun(sh[:, 1:].transpose(1, 0, 2).reshape(-1, d)).reshape(d, len(js)).T
            s[js] = sh
        sim[idx], fs[idx] = s, f
    best = np.argmin(fs, axis=1)
    return sim[rows, best], fs[rows, best]


def rate_I(h: RateFunctionHandle, t, opts: Optional[OptimizerOptions] = None) -> RateEvaluation:
    """Few-big-jumps rate ``min sum_r J(t_r)`` over <= k parts summing to ``t``.

    Multi-start Nelder-Mead over the product of simplices (each coordinate of
    ``t`` split across k parts), started from the one-jump split, the axis
    split and ``opts.random_restarts`` Dirichlet splits; the best few are
    polished by pairwise-transfer coordinate descent.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape != (h.k,):
        raise PreconditionError(f"t must have shape ({h.k},)")
    return rate_I_many(h, t[None, :], opts)[0]


def rate_I_oracle(h: RateFunctionHandle, t, grid_n: int = 100,
                  max_candidates: float = 1e8) -> RateEvaluation:
    """Exhaustive grid minimum of the decomposition problem (test oracle).

    Each coordinate of ``t`` is split across k parts with fractions on
    ``{0, 1/grid_n, ..., 1}``. The result is an upper bound on the true rate.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    k = h.k
    if t.shape != (k,):
        raise PreconditionError(f"t must have shape ({k},)")
    if np.any(t <= 0):
        raise PreconditionError("rate_I_oracle requires strictly positive targets")
    if k > 3:
        raise UnsupportedError("the grid oracle supports k <= 3")
    if grid_n < 2:
        raise PreconditionError("grid_n must be at least 2")
    if float(grid_n) ** (k * (k - 1)) > max_candidates:
        raise UnsupportedError(
            f"grid_n={grid_n} gives about {float(grid_n) ** (k * (k - 1)):.3g} candidates "
            f"(limit {max_candidates:.3g})")
    n = grid_n
    idx = np.stack(np.meshgrid(*[np.arange(n + 1)] * k, indexing="ij"), axis=-1).reshape(-1, k)
    pts = idx / n * t
    jgrid = h.J(pts).reshape((n + 1,) * k)
    _, arg = kernels.oracle_min(jgrid, k, n)
    parts = np.asarray(arg) / n * t
    dec = _decomposition(h, t, parts)
    return RateEvaluation(dec.total, dec, "oracle", 0, True)


# ---------------------------------------------------------------------------
# structural probes
# ---------------------------------------------------------------------------

def check_homogeneity(h: RateFunctionHandle, samples: int = 1000, tol: float = 1e-9,
                      seed: int = 0, scale: float = 3.0) -> HomogeneityReport:
    """Sample (x, lam) pairs and measure |Jbar(lam x) - lam^alpha Jbar(x)|."""
    if samples < 1:
        raise PreconditionError("samples must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.uniform(0.0, scale, size=(samples, h.k))
    lam = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), size=samples))
    base = h.jbar(x)
    scaled = h.jbar(x * lam[:, None])
    expect = lam ** h.alpha * base
    both_inf = np.isinf(scaled) & np.isinf(expect)
    with np.errstate(invalid="ignore"):
        viol = np.abs(scaled - expect) / (1.0 + expect)
    viol = np.where(both_inf, 0.0, viol)
    viol = np.where(np.isnan(viol), np.inf, viol)
    i = int(np.argmax(viol))
    worst = float(viol[i])
    if worst > tol:
        return HomogeneityReport(worst, x[i].copy(), float(lam[i]), samples, tol)
    return HomogeneityReport(worst, None, None, samples, tol)


def convexity_probe(h: RateFunctionHandle, t_a, t_b, lambdas: Sequence[float],
                    tol: float = 1e-9, opts: Optional[OptimizerOptions] = None
                    ) -> ConvexityReport:
    """Compare I on the segment between ``t_a`` and ``t_b`` with the chord."""
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any((lambdas <= 0) | (lambdas >= 1)):
        raise PreconditionError("all lambdas must lie in (0, 1)")
    mixes = lambdas[:, None] * t_a + (1.0 - lambdas[:, None]) * t_b
    evals = rate_I_many(h, np.vstack([t_a, t_b, mixes]), opts)
    ia, ib = evals[0].value, evals[1].value
    mixed = np.array([e.value for e in evals[2:]])
    chord = lambdas * ia + (1.0 - lambdas) * ib
    rep = ConvexityReport(lambdas, mixed, chord, ia, ib, tol)
    for lam, mv, cv in zip(lambdas, mixed, chord):
        if mv > cv + tol:
            rep.convexity_violations.append((float(lam), float(mv - cv)))
        if mv < cv - tol:
            rep.concavity_violations.append((float(lam), float(cv - mv)))
    return rep
