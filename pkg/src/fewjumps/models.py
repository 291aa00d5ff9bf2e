"""Closed-form tail exponents for the built-in model families.

Families
--------
gauss-power            componentwise absolute powers ``|G_j|^q`` of G ~ N(0, Sigma)
bivariate-gauss-power  the k = 2 correlation-matrix special case
weibull                Marshall-Olkin multivariate Weibull
two-jump               ``(R V_1 S_1, R V_2 S_2)`` with Weibull(1/2) radius
mdp-gauss              Gaussian summands for the moderate-deviation rate

Every model is immutable after construction; :func:`to_rate_handle` adapts
a model to :class:`~fewjumps.ratefn.RateFunctionHandle`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import ConfigError, PreconditionError, UnsupportedError
from .ratefn import RateFunctionHandle

PINV_CUTOFF = 1e-10
RANGE_TOL = 1e-8
MAX_SIGN_K = 20
MAX_FACE_K = 10
MAX_QP_K = 12


def moment_Mq(q: float) -> float:
    """E|G|^q for a standard Gaussian G, i.e. 2^{q/2} Gamma((q+1)/2) / sqrt(pi)."""
    if not q > 0:
        raise PreconditionError("q must be positive")
    return math.exp(0.5 * q * math.log(2.0) + special.gammaln(0.5 * (q + 1.0))
                    - 0.5 * math.log(math.pi))


def psd_pinv(sigma: np.ndarray, cutoff: float = PINV_CUTOFF):
    """Pseudoinverse, range projector and a square-root factor of a PSD matrix.

    Eigenvalues below ``cutoff * largest`` are treated as zero. Returns
    ``(pinv, proj, factor)`` with ``factor @ factor.T == sigma``.
    """
    evals, evecs = np.linalg.eigh(sigma)
    top = max(float(evals[-1]), 0.0)
    keep = evals > cutoff * top
    v = evecs[:, keep]
    lam = evals[keep]
    pinv = (v / lam) @ v.T
    proj = v @ v.T
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return pinv, proj, factor


def _validate_psd(sigma, name="Sigma") -> np.ndarray:
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] < 1:
        raise PreconditionError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(sigma)):
        raise PreconditionError(f"{name} must be finite")
    if np.max(np.abs(sigma - sigma.T)) > 1e-12:
        raise PreconditionError(f"{name} must be symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sigma)
    if evals[0] < -1e-10:
        raise PreconditionError(f"{name} must be positive semidefinite (min eigenvalue {evals[0]:.3g})")
    if evals[0] < 0:
        sigma = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


def _sign_table(k: int) -> np.ndarray:
    """All sign vectors with the first entry fixed to +1 (the forms are even)."""
    rest = np.array(list(itertools.product((1.0, -1.0), repeat=k - 1)), dtype=float).reshape(2 ** (k - 1), k - 1)
    return np.hstack([np.ones((len(rest), 1)), rest])


def _face_tables(sigma: np.ndarray, signed: bool):
    """Candidate faces (active set S, signs on S) of the box-constrained quadratic.

    For a face the multiplier is ``lam_S = pinv(D_S Sigma_SS D_S) t_S`` with
    D = diag(e); the table stores that pinv embedded in a k x k zero matrix.
    Signs off S do not change the candidate point, so only signs on S are
    enumerated (first entry of S fixed to +1 since the form is even); the
    kernel then checks the off-S bounds through |y_j|.
    """
    k = sigma.shape[0]
    rows_p, rows_s, rows_m = [np.zeros((k, k))], [np.zeros(k)], [np.zeros(k, dtype=bool)]
    for mask in range(1, 2 ** k):
        idx = np.array([j for j in range(k) if (mask >> j) & 1])
        sub = np.zeros(k, dtype=bool)
        sub[idx] = True
        patterns = _sign_table(len(idx)) if signed else np.ones((1, len(idx)))
        for e_s in patterns:
            e = np.zeros(k)
            e[idx] = e_s
            block = sigma[np.ix_(idx, idx)] * np.outer(e_s, e_s)
            p = np.zeros((k, k))
            p[np.ix_(idx, idx)] = np.linalg.pinv(block, rcond=PINV_CUTOFF, hermitian=True)
            rows_p.append(p)
            rows_s.append(e)
            rows_m.append(sub)
    return np.array(rows_p), np.array(rows_s), np.array(rows_m)


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussPowerModel:
    """Absolute q-th powers of a centered Gaussian vector with covariance Sigma (PSD)."""

    Sigma: np.ndarray
    q: float
    family: str = field(default="gauss-power", init=False)

    def __post_init__(self):
        object.__setattr__(self, "Sigma", _validate_psd(self.Sigma))
        if not self.q > 2:
            raise PreconditionError("q must exceed 2")
        self.Sigma.setflags(write=False)

    @property
    def k(self) -> int:
        return self.Sigma.shape[0]

    @property
    def alpha(self) -> float:
        return 2.0 / self.q

    @cached_property
    def _pinv(self):
        return psd_pinv(self.Sigma)

    @property
    def Sigma_pinv(self) -> np.ndarray:
        return self._pinv[0]

    @property
    def range_projector(self) -> np.ndarray:
        return self._pinv[1]

    @property
    def factor(self) -> np.ndarray:
        return self._pinv[2]

    @cached_property
    def mu_q(self) -> np.ndarray:
        return np.diag(self.Sigma) ** (self.q / 2.0) * moment_Mq(self.q)

    @cached_property
    def is_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.Sigma)[0] > PINV_CUTOFF * np.linalg.eigvalsh(self.Sigma)[-1])

    @cached_property
    def _signs(self) -> np.ndarray:
        if self.k > MAX_SIGN_K:
            raise UnsupportedError(f"sign enumeration is capped at k={MAX_SIGN_K}")
        return _sign_table(self.k)

    @cached_property
    def _faces(self):
        if self.k > MAX_FACE_K:
            raise UnsupportedError(f"exact envelope is capped at k={MAX_FACE_K}")
        return _face_tables(self.Sigma, signed=True)

    def to_json(self) -> dict:
        return {"family": self.family, "k": self.k, "Sigma": self.Sigma.tolist(), "q": self.q}


@dataclass(frozen=True)
class BivariateGaussPower:
    rho: float
    q: float
    family: str = field(default="bivariate-gauss-power", init=False)

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise PreconditionError("rho must lie in (-1, 1)")
        if not self.q > 2:
            raise PreconditionError("q must exceed 2")

    k = 2

    @property
    def alpha(self) -> float:
        return 2.0 / self.q

    @property
    def Sigma(self) -> np.ndarray:
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    def as_gauss_power(self) -> GaussPowerModel:
        return GaussPowerModel(self.Sigma, self.q)

    def to_json(self) -> dict:
        return {"family": self.family, "k": 2, "rho": self.rho, "q": self.q}


@dataclass(frozen=True, eq=False)
class MultivariateWeibullModel:
    alpha: float
    lambda0: float
    lambdas: np.ndarray
    family: str = field(default="weibull", init=False)

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float).reshape(-1)
        if lam.size < 1:
            raise PreconditionError("lambdas must be nonempty")
        if not 0.0 < self.alpha < 1.0:
            raise PreconditionError("alpha must lie in (0, 1)")
        if not self.lambda0 > 0 or np.any(~(lam > 0)):
            raise PreconditionError("all rates must be strictly positive")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def k(self) -> int:
        return self.lambdas.size

    @cached_property
    def mean(self) -> np.ndarray:
        """Mean of the uncentered vector, by quadrature of the marginal survival."""
        out = []
        for lj in self.lambdas:
            rate = lj + self.lambda0
            val, _ = integrate.quad(lambda u: math.exp(-rate * u ** self.alpha), 0.0, np.inf,
                                    epsabs=0.0, epsrel=1e-12, limit=200)
            out.append(val)
        return np.array(out)

    def to_json(self) -> dict:
        return {"family": self.family, "k": self.k, "alpha": self.alpha,
                "lambda0": self.lambda0, "lambdas": self.lambdas.tolist()}


@dataclass(frozen=True)
class TwoJumpModel:
    epsilon: float
    family: str = field(default="two-jump", init=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise PreconditionError("epsilon must lie in (0, 1)")

    k = 2
    alpha = 0.5

    def to_json(self) -> dict:
        return {"family": self.family, "k": 2, "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class MdpGaussModel:
    Sigma: np.ndarray
    family: str = field(default="mdp-gauss", init=False)

    def __post_init__(self):
        sigma = _validate_psd(self.Sigma)
        if np.linalg.eigvalsh(sigma)[0] <= 1e-10:
            raise PreconditionError("Sigma must be positive definite")
        sigma.setflags(write=False)
        object.__setattr__(self, "Sigma", sigma)

    @property
    def k(self) -> int:
        return self.Sigma.shape[0]

    @cached_property
    def Sigma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Sigma)

    @cached_property
    def _faces(self):
        if self.k > MAX_QP_K:
            raise UnsupportedError(f"active-set enumeration is capped at k={MAX_QP_K}")
        return _face_tables(self.Sigma, signed=False)

    def to_json(self) -> dict:
        return {"family": self.family, "k": self.k, "Sigma": self.Sigma.tolist()}


Model = Union[GaussPowerModel, BivariateGaussPower, MultivariateWeibullModel,
              TwoJumpModel, MdpGaussModel]


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

def _points(z, k):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[1] != k:
        raise PreconditionError(f"expected points of dimension {k}")
    if np.any(z < 0):
        raise PreconditionError("points must lie in the nonnegative orthant")
    return z, single


def _ret(out, single):
    return float(out[0]) if single else out


def gausspower_Jbar(m: GaussPowerModel, z):
    """Half the minimum over sign vectors of the pseudoinverse quadratic form at z^{1/q}.

    ``+inf`` when every signed vector falls outside the range of Sigma.
    """
    z, single = _points(z, m.k)
    y = np.ascontiguousarray(z ** (1.0 / m.q))
    quad = kernels.signed_quadform_min(y, m.Sigma_pinv, m.range_projector, m._signs, RANGE_TOL)
    return _ret(0.5 * quad, single)


def gausspower_J(m: GaussPowerModel, t):
    """Exact monotone envelope ``inf_{s >= t} Jbar(s)``.

    With y = e * s^{1/q} the envelope is the smallest ``0.5 y' Sigma^+ y``
    over y in range(Sigma) with |y_j| >= t_j^{1/q}; each sign pattern is a
    convex box-constrained quadratic solved by active-set enumeration.
    """
    t, single = _points(t, m.k)
    lower = np.ascontiguousarray(t ** (1.0 / m.q))
    p_table, s_table, m_table = m._faces
    val, _ = kernels.face_qp_min(lower, m.Sigma, p_table, s_table, m_table, True)
    return _ret(val, single)


def bivariate_Jbar(m: BivariateGaussPower, z1, z2):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(z1 < 0) or np.any(z2 < 0):
        raise PreconditionError("z1, z2 must be nonnegative")
    a = z1 ** (1.0 / m.q)
    b = z2 ** (1.0 / m.q)
    out = (a * a + b * b - 2.0 * abs(m.rho) * a * b) / (2.0 * (1.0 - m.rho ** 2))
    return float(out) if out.ndim == 0 else out


def bivariate_J(m: BivariateGaussPower, z1, z2):
    """Closed-form envelope of the bivariate exponent.

    In a = s1^{1/q}, b = s2^{1/q} the exponent is a convex quadratic, so the
    infimum over the box a >= A, b >= B sits at (A, |rho| A) when B <= |rho| A,
    at (|rho| B, B) when A <= |rho| B, and at the corner otherwise.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(z1 < 0) or np.any(z2 < 0):
        raise PreconditionError("z1, z2 must be nonnegative")
    r = abs(m.rho)
    a = z1 ** (1.0 / m.q)
    b = z2 ** (1.0 / m.q)
    corner = (a * a + b * b - 2.0 * r * a * b) / (2.0 * (1.0 - m.rho ** 2))
    out = np.where(b <= r * a, 0.5 * a * a, np.where(a <= r * b, 0.5 * b * b, corner))
    return float(out) if out.ndim == 0 else out


def weibull_log_survival(m: MultivariateWeibullModel, t):
    t, single = _points(t, m.k)
    out = -(t ** m.alpha) @ m.lambdas - m.lambda0 * np.max(t, axis=1) ** m.alpha
    return _ret(out, single)


def weibull_J(m: MultivariateWeibullModel, t):
    t, single = _points(t, m.k)
    out = (t ** m.alpha) @ m.lambdas + m.lambda0 * np.max(t, axis=1) ** m.alpha
    return _ret(out, single)


def twojump_J(m: TwoJumpModel, t1, t2):
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise PreconditionError("t1, t2 must be nonnegative")
    eps = m.epsilon
    out = np.minimum(np.sqrt(np.maximum(t1, t2 / eps)), np.sqrt(np.maximum(t1 / eps, t2)))
    return float(out) if out.ndim == 0 else out


def twojump_log_orthant(m: TwoJumpModel, t1: float, t2: float) -> float:
    """log P(X1 >= t1, X2 >= t2) for t1, t2 > 0 (exact)."""
    eps = m.epsilon
    a = math.sqrt(max(t1, t2 / eps))
    b = math.sqrt(max(t1 / eps, t2))
    lo = min(a, b)
    return math.log(0.125) - lo + math.log1p(math.exp(-abs(a - b)))


def twojump_log_marginal(m: TwoJumpModel, t: float) -> float:
    """log P(X1 >= t) = log P(X1 <= -t) for t > 0 (exact)."""
    return math.log(0.25) - math.sqrt(t) + math.log1p(math.exp(math.sqrt(t) - math.sqrt(t / m.epsilon)))


def mdp_rate(m: MdpGaussModel, t):
    """``min 0.5 z' Sigma^{-1} z`` subject to ``z >= t``; returns (value, argmin).

    Exhaustive active-set enumeration: for each subset S of active bounds the
    stationary point is ``z = Sigma[:, S] Sigma_SS^{-1} t_S``; the smallest
    feasible candidate is the optimum of this strictly convex program.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape != (m.k,):
        raise PreconditionError(f"t must have shape ({m.k},)")
    if np.any(t <= 0):
        raise PreconditionError("mdp_rate requires strictly positive t")
    p_table, s_table, m_table = m._faces
    val, z = kernels.face_qp_min(t[None, :], m.Sigma, p_table, s_table, m_table, False)
    return float(val[0]), z[0].copy()


def gausspower_density(m: GaussPowerModel, z):
    """Density of (|G_1|^q, ..., |G_k|^q) at z in (0, inf)^k (Sigma definite)."""
    if not m.is_definite:
        raise PreconditionError("the density exists only for definite Sigma")
    z = np.atleast_2d(np.asarray(z, dtype=float))
    k, q = m.k, m.q
    out = np.zeros(len(z))
    pos = np.all(z > 0, axis=1)
    if not pos.any():
        return out
    zp = z[pos]
    y = zp ** (1.0 / q)
    inv = np.linalg.inv(m.Sigma)
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=k)))
    ye = y[:, None, :] * signs[None]
    quad = np.einsum("nsi,ij,nsj->ns", ye, inv, ye)
    norm = ((2 * math.pi) ** (k / 2) * math.sqrt(np.linalg.det(m.Sigma)) * q ** k
            * np.prod(zp ** ((q - 1.0) / q), axis=1))
    out[pos] = np.exp(-0.5 * quad).sum(axis=1) / norm
    return out


# ---------------------------------------------------------------------------
# adapters
# ---------------------------------------------------------------------------

def to_rate_handle(model: Model) -> RateFunctionHandle:
    if isinstance(model, BivariateGaussPower):
        return RateFunctionHandle(
            k=2, alpha=model.alpha,
            eval_Jbar=lambda z: bivariate_Jbar(model, z[:, 0], z[:, 1]),
            eval_J=lambda z: bivariate_J(model, z[:, 0], z[:, 1]),
            name=f"bivariate-gauss-power(rho={model.rho}, q={model.q})")
    if isinstance(model, GaussPowerModel):
        exact = (lambda z: gausspower_J(model, z)) if model.k <= MAX_FACE_K else None
        return RateFunctionHandle(
            k=model.k, alpha=model.alpha,
            eval_Jbar=lambda z: gausspower_Jbar(model, z),
            eval_J=exact, name=f"gauss-power(k={model.k}, q={model.q})")
    if isinstance(model, MultivariateWeibullModel):
        return RateFunctionHandle(
            k=model.k, alpha=model.alpha, eval_Jbar=lambda z: weibull_J(model, z),
            envelope_is_identity=True, name=f"weibull(alpha={model.alpha})")
    if isinstance(model, TwoJumpModel):
        return RateFunctionHandle(
            k=2, alpha=0.5, eval_Jbar=lambda z: twojump_J(model, z[:, 0], z[:, 1]),
            envelope_is_identity=True, name=f"two-jump(epsilon={model.epsilon})")
    if isinstance(model, MdpGaussModel):
        raise PreconditionError("the moderate-deviation model has a quadratic rate; use mdp_rate")
    raise PreconditionError(f"unknown model type {type(model).__name__}")


_FAMILIES = {
    "gauss-power": lambda d: GaussPowerModel(np.array(d["Sigma"], dtype=float), float(d["q"])),
    "bivariate-gauss-power": lambda d: BivariateGaussPower(float(d["rho"]), float(d["q"])),
    "weibull": lambda d: MultivariateWeibullModel(float(d["alpha"]), float(d["lambda0"]),
                                                   np.array(d["lambdas"], dtype=float)),
    "two-jump": lambda d: TwoJumpModel(float(d["epsilon"])),
    "mdp-gauss": lambda d: MdpGaussModel(np.array(d["Sigma"], dtype=float)),
}


def model_from_json(doc: Union[dict, str]) -> Model:
    """Build a model from ``{"family": ..., "k": ..., <parameters>}``."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    family = doc.get("family")
    if family not in _FAMILIES:
        raise ConfigError(f"unknown model family {family!r}")
    try:
        model = _FAMILIES[family](doc)
    except KeyError as exc:
        raise ConfigError(f"model family {family!r} is missing parameter {exc.args[0]!r}") from None
    if "k" in doc and int(doc["k"]) != model.k:
        raise ConfigError(f"declared k={doc['k']} does not match the parameters (k={model.k})")
    return model


def model_to_json(model: Model) -> dict:
    return model.to_json()
