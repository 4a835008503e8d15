"""Ranking policies: select a K-item list, then learn from cascade feedback.

Every policy implements select/update/reset. Contextual policies receive an
(L, d) per-item feature array in select and remember it for the matching
update; non-contextual ones ignore it. Updates only ever read positions the
user examined (position <= click position).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import rel_entr

from .cascade import Feedback, RankedAction, best_action
from .glm import (
    SIGMOID,
    GlmDataset,
    LinkFunction,
    irls_solve,
    kappa_min,
    sigmoid,
)
from .posteriors import (
    BetaItemPosterior,
    EllipsoidState,
    GaussianItemPosterior,
    RadiusParams,
    _beta_quantile_bisect,
    beta_observe,
    delta_schedule,
    ellipsoid_rank_one_update,
    gaussian_observe,
    gaussian_sample_all,
    mvn_sample,
    radius_beta_t,
)

__all__ = [
    "Policy",
    "gts_policy",
    "lints_policy",
    "glmts_policy",
    "newton_glmts_policy",
    "ts_beta_policy",
    "bayes_ucb_policy",
    "cascade_ucb1_policy",
    "cascade_klucb_policy",
    "cascade_linucb_policy",
    "oracle_policy",
    "POLICY_NAMES",
]

# names exposed by the CLI registry, in listing order
POLICY_NAMES = [
    "gts",
    "lints",
    "glmts",
    "newton-glmts",
    "ts-beta",
    "bayes-ucb",
    "cascade-ucb1",
    "cascade-klucb",
    "cascade-linucb",
]


def default_horizon_delta(horizon: int) -> float:
    """The 1 / (T (log2 T + 2)) failure budget tied to a known horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return 1.0 / (horizon * (math.log2(horizon) + 2.0))


def _top_k(scores: np.ndarray, k: int) -> RankedAction:
    # stable sort on the negated scores: ties break toward smaller index
    order = np.argsort(-scores, kind="stable")
    return RankedAction(tuple(int(i) for i in order[:k]))


class Policy:
    """Base class: owns an rng and restores it (and all state) on reset."""

    name = "policy"

    def __init__(self, rng: np.random.Generator | None = None):
        self._rng = rng if rng is not None else np.random.default_rng()
        self._rng_state0 = self._rng.bit_generator.state

    def select(self, context=None) -> RankedAction:
        raise NotImplementedError

    def update(self, action: RankedAction, feedback: Feedback) -> None:
        raise NotImplementedError

    def reset(self) -> None:
        self._rng.bit_generator.state = self._rng_state0
        self._init_state()

    def _init_state(self) -> None:
        raise NotImplementedError

    def _require_context(self, context) -> np.ndarray:
        if context is None:
            raise ValueError(f"{self.name} needs a per-item feature array")
        return np.asarray(context, dtype=float)


class GaussianTS(Policy):
    """Thompson sampling with independent Gaussian item posteriors."""

    name = "gts"

    def __init__(self, L, K, prior_mean=0.0, prior_var=1.0, noise_var=1.0, rng=None):
        super().__init__(rng)
        if K > L:
            raise ValueError("K must not exceed L")
        self.L, self.K = L, K
        self.prior_mean, self.prior_var, self.noise_var = prior_mean, prior_var, noise_var
        self._init_state()

    def _init_state(self):
        self.posterior = GaussianItemPosterior(
            self.L, self.prior_mean, self.prior_var, self.noise_var
        )

    def select(self, context=None) -> RankedAction:
        samples = gaussian_sample_all(self.posterior, self._rng)
        return _top_k(samples, self.K)

    def update(self, action, feedback):
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                gaussian_observe(self.posterior, item, feedback.values[pos])


class TSBeta(Policy):
    """Thompson sampling with per-item Beta posteriors (prior-informed)."""

    name = "ts-beta"

    def __init__(self, L, K, prior_alphas, prior_betas, rng=None):
        super().__init__(rng)
        self.L, self.K = L, K
        self._alphas0 = np.asarray(prior_alphas, dtype=float)
        self._betas0 = np.asarray(prior_betas, dtype=float)
        self._init_state()

    def _init_state(self):
        self.posterior = BetaItemPosterior(self._alphas0, self._betas0)

    def select(self, context=None) -> RankedAction:
        samples = self._rng.beta(self.posterior.alphas, self.posterior.betas)
        return _top_k(samples, self.K)

    def update(self, action, feedback):
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                beta_observe(self.posterior, item, feedback.values[pos] == 1.0)


class BayesUCBBeta(TSBeta):
    """Quantile-index policy over Beta posteriors; level 1 - 1/t per round."""

    name = "bayes-ucb"

    def _init_state(self):
        super()._init_state()
        self.t = 1

    def select(self, context=None) -> RankedAction:
        # round 1 would need the 0-quantile; floor the level at the median
        q = max(1.0 - 1.0 / self.t, 0.5)
        indices = _beta_quantile_bisect(self.posterior.alphas, self.posterior.betas, q)
        return _top_k(indices, self.K)

    def update(self, action, feedback):
        super().update(action, feedback)
        self.t += 1


class CascadeUCB1(Policy):
    """UCB1 indices on examined-round empirical means."""

    name = "cascade-ucb1"

    def __init__(self, L, K, rng=None):
        super().__init__(rng)
        self.L, self.K = L, K
        self._init_state()

    def _init_state(self):
        self.counts = np.zeros(self.L, dtype=np.int64)
        self.sums = np.zeros(self.L)
        self.t = 1

    def indices(self) -> np.ndarray:
        idx = np.full(self.L, np.inf)
        seen = self.counts > 0
        mu = self.sums[seen] / self.counts[seen]
        idx[seen] = mu + np.sqrt(1.5 * math.log(self.t) / self.counts[seen])
        return idx

    def select(self, context=None) -> RankedAction:
        return _top_k(self.indices(), self.K)

    def update(self, action, feedback):
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                self.counts[item] += 1
                self.sums[item] += feedback.values[pos]
        self.t += 1


class CascadeKLUCB(CascadeUCB1):
    """KL-UCB indices: the largest q with n * KL(mu_hat || q) within budget."""

    name = "cascade-klucb"

    @staticmethod
    def _kl_bernoulli(p, q):
        return rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)

    def indices(self) -> np.ndarray:
        idx = np.ones(self.L)
        seen = self.counts > 0
        if not seen.any():
            return idx
        n = self.counts[seen].astype(float)
        mu = self.sums[seen] / n
        log_t = math.log(self.t)
        budget = (log_t + 3.0 * math.log(max(log_t, 1.0))) / n
        lo, hi = mu.copy(), np.ones_like(mu)
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            feasible = self._kl_bernoulli(mu, mid) <= budget
            lo = np.where(feasible, mid, lo)
            hi = np.where(feasible, hi, mid)
        idx[seen] = lo
        return idx


class CascadeLinUCB(Policy):
    """LinUCB on the shared parameter; optimism scaled by the ellipsoid radius."""

    name = "cascade-linucb"

    def __init__(
        self,
        d,
        K,
        lam,
        confidence_scale=None,
        S=1.0,
        sigma_sq=0.25,
        delta=0.05,
        radius_prefactor="sigma_sq",
        rng=None,
    ):
        super().__init__(rng)
        self.d, self.K, self.lam = d, K, lam
        self.confidence_scale = confidence_scale
        self.radius = RadiusParams(sigma_sq, lam, S, d, delta, radius_prefactor)
        self._init_state()

    def _init_state(self):
        self.state = EllipsoidState(self.d, self.lam)
        self.t = 1
        self._last_context = None

    def _scale(self) -> float:
        if self.confidence_scale is not None:
            return self.confidence_scale
        return radius_beta_t(self.radius, self.t, delta_schedule(self.radius.delta, self.t))

    def select(self, context=None) -> RankedAction:
        X = self._require_context(context)
        self._last_context = X
        norms = np.sqrt(np.einsum("ij,jk,ik->i", X, self.state.gram_inv, X))
        scores = X @ self.state.theta_hat + self._scale() * norms
        return _top_k(scores, self.K)

    def update(self, action, feedback):
        X = self._last_context
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                ellipsoid_rank_one_update(self.state, X[item], 1.0, feedback.values[pos])
        self.t += 1


class LinTS(Policy):
    """Linear Thompson sampling on the confidence ellipsoid."""

    name = "lints"

    def __init__(
        self,
        d,
        K,
        lam,
        S=1.0,
        sigma_sq=0.25,
        delta=0.05,
        radius_prefactor="sigma_sq",
        rng=None,
    ):
        super().__init__(rng)
        self.d, self.K, self.lam = d, K, lam
        self.radius = RadiusParams(sigma_sq, lam, S, d, delta, radius_prefactor)
        self._init_state()

    def _init_state(self):
        self.state = EllipsoidState(self.d, self.lam)
        self.t = 1
        self._last_context = None

    def posterior_scale(self) -> float:
        return radius_beta_t(self.radius, self.t, delta_schedule(self.radius.delta, self.t))

    def select(self, context=None) -> RankedAction:
        X = self._require_context(context)
        self._last_context = X
        theta = mvn_sample(
            self.state.theta_hat, self.posterior_scale(), self.state.gram_inv, self._rng
        )
        return _top_k(X @ theta, self.K)

    def update(self, action, feedback):
        X = self._last_context
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                ellipsoid_rank_one_update(self.state, X[item], 1.0, feedback.values[pos])
        self.t += 1


class GlmTS(Policy):
    """Generalized-linear Thompson sampling with a Laplace posterior.

    The point estimate solves the ridge score equation by warm-started
    IRLS; the sampling covariance is beta_t^2 V^-1 / kappa^2 where V is the
    slope-weighted Gram matrix.
    """

    name = "glmts"

    def __init__(
        self,
        d,
        K,
        lam,
        S=1.0,
        sigma_sq=0.25,
        delta=0.05,
        link: LinkFunction = SIGMOID,
        refit_every=1,
        irls_tol=1e-8,
        irls_max_iter=100,
        radius_prefactor="sigma_sq",
        rng=None,
    ):
        super().__init__(rng)
        self.d, self.K, self.lam = d, K, lam
        self.S = S
        self.link = link
        self.kappa = kappa_min(S, link)
        self.refit_every = max(1, int(refit_every))
        self.irls_tol = irls_tol
        self.irls_max_iter = irls_max_iter
        self.radius = RadiusParams(sigma_sq, lam, S, d, delta, radius_prefactor)
        self._init_state()

    def _init_state(self):
        self.state = EllipsoidState(self.d, self.lam)
        self.data = GlmDataset(self.d)
        self.theta_hat = np.zeros(self.d)
        self.t = 1
        self._rounds_since_fit = 0
        self._last_context = None

    def _refit(self):
        theta = irls_solve(
            self.data,
            self.lam,
            tol=self.irls_tol,
            max_iter=self.irls_max_iter,
            theta0=self.theta_hat,
            link=self.link,
        )
        norm = float(np.linalg.norm(theta))
        if norm > self.S:
            theta *= self.S / norm
        self.theta_hat = theta

    def posterior_scale(self) -> float:
        beta = radius_beta_t(self.radius, self.t, delta_schedule(self.radius.delta, self.t))
        return beta / self.kappa

    def select(self, context=None) -> RankedAction:
        X = self._require_context(context)
        self._last_context = X
        if len(self.data) and self._rounds_since_fit >= self.refit_every:
            self._refit()
            self._rounds_since_fit = 0
        theta = mvn_sample(self.theta_hat, self.posterior_scale(), self.state.gram_inv, self._rng)
        # monotone link: ranking x^T theta ranks mu(x^T theta) identically
        return _top_k(X @ theta, self.K)

    def update(self, action, feedback):
        X = self._last_context
        for pos, item in enumerate(action.items):
            if feedback.examined[pos]:
                x = X[item]
                self.data.append(x, feedback.values[pos])
                slope = float(self.link.derivative(x @ self.theta_hat))
                ellipsoid_rank_one_update(self.state, x, slope, 0.0)
        self.t += 1
        self._rounds_since_fit += 1


class NewtonGlmTS(Policy):
    """Logistic Thompson sampling driven by single online Newton steps.

    Avoids the per-round estimation solve: each examined position adds its
    outer product to the Gram matrix and nudges the estimate along the
    damped logistic gradient. The per-observation counter advances by the
    click position each round.
    """

    name = "newton-glmts"

    def __init__(self, d, K, step_size=1.0, sample_scale=1.0, rng=None):
        super().__init__(rng)
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        self.d, self.K = d, K
        self.step_size = step_size
        self.sample_scale = sample_scale
        self._init_state()

    def _init_state(self):
        self.state = EllipsoidState(self.d, float(self.K))  # V starts at K*I
        self.theta_hat = np.zeros(self.d)
        self.counter = 1
        self._last_context = None

    def select(self, context=None) -> RankedAction:
        X = self._require_context(context)
        self._last_context = X
        theta = mvn_sample(self.theta_hat, self.sample_scale, self.state.gram_inv, self._rng)
        return _top_k(X @ theta, self.K)

    def update(self, action, feedback):
        X = self._last_context
        processed = 0
        for pos, item in enumerate(action.items):
            if not feedback.examined[pos]:
                break
            x = X[item]
            ellipsoid_rank_one_update(self.state, x, 1.0, 0.0)
            y_sign = 1.0 if feedback.values[pos] == 1.0 else -1.0
            damp = float(sigmoid(-y_sign * float(self.theta_hat @ x)))
            self.theta_hat = self.theta_hat + self.step_size * damp * y_sign * (
                self.state.gram_inv @ x
            )
            processed += 1
        # the cascade convention guarantees position 1 is always examined
        assert processed >= 1
        self.counter += feedback.click_position


class OraclePolicy(Policy):
    """Plays the best list for the true means; useful as a regret floor."""

    name = "oracle"

    def __init__(self, attraction_means, K, rng=None):
        super().__init__(rng)
        self.means = np.asarray(attraction_means, dtype=float)
        self.K = K
        self._init_state()

    def _init_state(self):
        self._action = best_action(self.means, self.K)

    def select(self, context=None) -> RankedAction:
        return self._action

    def update(self, action, feedback):
        pass


def gts_policy(L, K, prior_mean=0.0, prior_var=1.0, noise_var=1.0, rng=None) -> GaussianTS:
    return GaussianTS(L, K, prior_mean, prior_var, noise_var, rng=rng)


def lints_policy(d, K, lam, S=1.0, sigma_sq=0.25, delta=0.05, rng=None, **kw) -> LinTS:
    return LinTS(d, K, lam, S, sigma_sq, delta, rng=rng, **kw)


def glmts_policy(
    d, K, lam, S=1.0, sigma_sq=0.25, delta=0.05, link=SIGMOID, rng=None, **kw
) -> GlmTS:
    return GlmTS(d, K, lam, S, sigma_sq, delta, link, rng=rng, **kw)


def newton_glmts_policy(d, K, step_size=1.0, rng=None, **kw) -> NewtonGlmTS:
    return NewtonGlmTS(d, K, step_size, rng=rng, **kw)


def ts_beta_policy(L, K, prior_alphas, prior_betas, rng=None) -> TSBeta:
    return TSBeta(L, K, prior_alphas, prior_betas, rng=rng)


def bayes_ucb_policy(L, K, prior_alphas, prior_betas, rng=None) -> BayesUCBBeta:
    return BayesUCBBeta(L, K, prior_alphas, prior_betas, rng=rng)


def cascade_ucb1_policy(L, K, rng=None) -> CascadeUCB1:
    return CascadeUCB1(L, K, rng=rng)


def cascade_klucb_policy(L, K, rng=None) -> CascadeKLUCB:
    return CascadeKLUCB(L, K, rng=rng)


def cascade_linucb_policy(d, K, lam, confidence_scale=None, rng=None, **kw) -> CascadeLinUCB:
    return CascadeLinUCB(d, K, lam, confidence_scale, rng=rng, **kw)


def oracle_policy(attraction_means, K, rng=None) -> OraclePolicy:
    return OraclePolicy(attraction_means, K, rng=rng)
