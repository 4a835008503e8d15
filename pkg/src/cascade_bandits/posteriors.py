"""Conjugate posterior state and sampling.

Gaussian and Beta per-item posteriors back the non-contextual policies;
the regularized Gram matrix (confidence ellipsoid) backs the contextual
ones. All updates are closed form; the Gram inverse is maintained with
rank-one (Sherman-Morrison) updates plus a periodic full re-inversion to
keep drift in check over long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "GaussianItemPosterior",
    "BetaItemPosterior",
    "EllipsoidState",
    "RadiusParams",
    "gaussian_observe",
    "gaussian_posterior_params",
    "gaussian_sample",
    "gaussian_sample_all",
    "beta_observe",
    "beta_quantile",
    "radius_beta_t",
    "delta_schedule",
    "ellipsoid_rank_one_update",
    "mvn_sample",
]

# full re-inversion cadence for the incrementally maintained Gram inverse
_REFRESH_EVERY = 1000


@dataclass
class GaussianItemPosterior:
    """Independent Gaussian-Gaussian conjugate posteriors for L items.

    Likelihood per observation: value ~ N(mu_i, noise_var). Tracks the
    examined-observation count and feedback sum per item.
    """

    n_items: int
    prior_mean: float = 0.0
    prior_var: float = 1.0
    noise_var: float = 1.0
    obs_count: np.ndarray = field(init=False)
    obs_sum: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.prior_var <= 0 or self.noise_var <= 0:
            raise ValueError("prior_var and noise_var must be positive")
        self.obs_count = np.zeros(self.n_items, dtype=np.int64)
        self.obs_sum = np.zeros(self.n_items, dtype=float)


@dataclass
class BetaItemPosterior:
    """Per-item Beta(alpha, beta) posteriors over click probabilities."""

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float).copy()
        self.betas = np.asarray(self.betas, dtype=float).copy()
        if self.alphas.shape != self.betas.shape:
            raise ValueError("alpha/beta arrays must have the same shape")
        if (self.alphas <= 0).any() or (self.betas <= 0).any():
            raise ValueError("Beta parameters must be strictly positive")


def gaussian_observe(state: GaussianItemPosterior, item: int, value: float) -> GaussianItemPosterior:
    """Fold one examined observation of ``item`` into the posterior."""
    state.obs_count[item] += 1
    state.obs_sum[item] += value
    return state


def gaussian_posterior_params(state: GaussianItemPosterior, item=None):
    """Posterior (mean, variance): var = (1/prior_var + n/noise_var)^-1,
    mean = (sum/noise_var + prior_mean/prior_var) * var.

    With ``item`` None, returns vectors over all items.
    """
    n = state.obs_count if item is None else state.obs_count[item]
    s = state.obs_sum if item is None else state.obs_sum[item]
    var = 1.0 / (1.0 / state.prior_var + n / state.noise_var)
    mean = (s / state.noise_var + state.prior_mean / state.prior_var) * var
    return mean, var


def gaussian_sample(state: GaussianItemPosterior, item: int, rng: np.random.Generator) -> float:
    mean, var = gaussian_posterior_params(state, item)
    return float(rng.normal(mean, math.sqrt(var)))


def gaussian_sample_all(state: GaussianItemPosterior, rng: np.random.Generator) -> np.ndarray:
    """One posterior sample per item, drawn jointly for efficiency."""
    mean, var = gaussian_posterior_params(state)
    return mean + np.sqrt(var) * rng.standard_normal(state.n_items)


def beta_observe(state: BetaItemPosterior, item: int, clicked: bool) -> BetaItemPosterior:
    """Examined observation: a click bumps alpha, a skip bumps beta."""
    if clicked:
        state.alphas[item] += 1.0
    else:
        state.betas[item] += 1.0
    return state


def _beta_quantile_bisect(alphas, betas, q: float, tol: float = 1e-12) -> np.ndarray:
    """Vectorized bisection for the q-quantile of Beta(alpha, beta).

    Bisects the regularized incomplete beta CDF on [0, 1] down to ``tol``
    interval width, so no inverse special function is required.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    lo = np.zeros_like(alphas)
    hi = np.ones_like(alphas)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        below = special.betainc(alphas, betas, mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if float(np.max(hi - lo)) <= tol:
            break
    return 0.5 * (lo + hi)


def beta_quantile(state: BetaItemPosterior, item: int, q: float) -> float:
    """The q-quantile of the item's Beta posterior, monotone in q."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    return float(_beta_quantile_bisect(state.alphas[item], state.betas[item], q))


@dataclass(frozen=True)
class RadiusParams:
    """Inputs of the confidence-ellipsoid radius.

    sigma_sq is the sub-Gaussian noise parameter as it appears (squared)
    in front of the log term; S bounds the parameter norm.
    """

    sigma_sq: float
    lam: float
    S: float
    d: int
    delta: float
    # the literature often writes sigma (not sigma^2) in front of the log
    # term; "sigma" switches to that convention
    prefactor: str = "sigma_sq"

    def __post_init__(self):
        if min(self.sigma_sq, self.lam, self.S) <= 0:
            raise ValueError("sigma_sq, lam and S must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.prefactor not in ("sigma_sq", "sigma"):
            raise ValueError(f"unknown prefactor convention {self.prefactor!r}")


def radius_beta_t(params: RadiusParams, t: int, delta: float | None = None) -> float:
    """Ellipsoid radius sigma^2 * sqrt(2 log((lam+t)^{d/2} lam^{-d/2} / delta)) + sqrt(lam) S.

    ``delta`` overrides params.delta (used with the per-round doubling
    schedule). Strictly increasing in t and decreasing in delta.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    delta = params.delta if delta is None else delta
    log_term = 0.5 * params.d * (math.log(params.lam + t) - math.log(params.lam))
    log_term -= math.log(delta)
    front = params.sigma_sq if params.prefactor == "sigma_sq" else math.sqrt(params.sigma_sq)
    return front * math.sqrt(2.0 * log_term) + math.sqrt(params.lam) * params.S


def delta_schedule(delta: float, t: int) -> float:
    """Per-round failure budget delta / 2^max(1, ceil(log2 t)).

    Base-2 logs keep the doubling-trick sum below log2(T)/2 + 1.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return delta / 2.0 ** max(1, math.ceil(math.log2(t)))


@dataclass
class EllipsoidState:
    """Regularized Gram matrix V = lam*I + sum w x x^T with running inverse.

    Also tracks the response vector b and the least-squares point estimate
    theta_hat = V^-1 b used by the linear policies.
    """

    dim: int
    lam: float
    V: np.ndarray = field(init=False)
    gram_inv: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    theta_hat: np.ndarray = field(init=False)
    _updates: int = field(init=False, default=0)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        self.V = self.lam * np.eye(self.dim)
        self.gram_inv = np.eye(self.dim) / self.lam
        self.b = np.zeros(self.dim)
        self.theta_hat = np.zeros(self.dim)


def ellipsoid_rank_one_update(
    state: EllipsoidState, x, weight: float = 1.0, y: float = 0.0
) -> EllipsoidState:
    """Apply V += weight * x x^T and b += y * x, refreshing the inverse.

    The inverse uses the Sherman-Morrison identity; every _REFRESH_EVERY
    updates it is recomputed from V to stop floating-point drift.
    """
    if weight < 0:
        raise ValueError("update weight must be nonnegative")
    x = np.asarray(x, dtype=float)
    if weight > 0.0:
        state.V += weight * np.outer(x, x)
        vx = state.gram_inv @ x
        state.gram_inv -= np.outer(vx, vx) * (weight / (1.0 + weight * float(x @ vx)))
        state._updates += 1
        if state._updates % _REFRESH_EVERY == 0:
            state.gram_inv = np.linalg.inv(state.V)
    state.b += y * x
    state.theta_hat = state.gram_inv @ state.b
    return state


def mvn_sample(
    mean,
    scale: float,
    gram_inv,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw from N(mean, scale^2 * gram_inv) via Cholesky factorization.

    A single jitter of 1e-10 * I is added if the factorization fails on a
    near-singular covariance; a second failure is raised to the caller.
    ``size`` batches draws into a (size, d) array.
    """
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(gram_inv, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cov + 1e-10 * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "covariance is not positive definite even after jitter"
            ) from exc
    n = 1 if size is None else size
    z = rng.standard_normal((n, mean.size))
    draws = mean + scale * (z @ chol.T)
    return draws[0] if size is None else draws
