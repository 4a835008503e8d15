"""Synthetic problem instances and the simulation step.

Three families: per-item Bernoulli attractions drawn from Beta priors,
linear mean rewards x^T theta, and logistic click probabilities
sigmoid(x^T theta). Instances are immutable after creation and serialize
to a versioned JSON document.

The simulation step draws one attraction realization for every item in the
catalog each round (not just the displayed ones), so two algorithms sharing
an environment stream face identical randomness regardless of what they
recommend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cascade import Feedback, RankedAction, simulate_cascade_round
from .glm import sigmoid

__all__ = [
    "PriorSpec",
    "BanditInstance",
    "sample_beta_instances",
    "misspecified_prior",
    "sample_linear_instance",
    "sample_logistic_instance",
    "env_step",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PriorSpec:
    """Per-item Beta prior parameters, possibly shifted away from the truth.

    alphas/betas may be scalars (shared by all items) or length-L arrays.
    """

    alphas: object
    betas: object
    shift: int = 0

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        b = np.asarray(self.betas, dtype=float)
        if (a <= 0).any() or (b <= 0).any():
            raise ValueError("Beta prior parameters must be strictly positive")

    def item_arrays(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        a = np.broadcast_to(np.asarray(self.alphas, dtype=float), (L,)).copy()
        b = np.broadcast_to(np.asarray(self.betas, dtype=float), (L,)).copy()
        return a, b

    def to_dict(self) -> dict:
        def plain(v):
            arr = np.asarray(v, dtype=float)
            return float(arr) if arr.ndim == 0 else arr.tolist()

        return {"alphas": plain(self.alphas), "betas": plain(self.betas), "shift": self.shift}

    @classmethod
    def from_dict(cls, doc: dict) -> "PriorSpec":
        return cls(doc["alphas"], doc["betas"], int(doc.get("shift", 0)))


def misspecified_prior(c: int) -> PriorSpec:
    """Beta(1+c, 10-c): the true Beta(1, 10) prior shifted by c notches."""
    if not 0 <= c <= 8:
        raise ValueError(f"misspecification shift must lie in [0, 8], got {c}")
    return PriorSpec(1.0 + c, 10.0 - c, shift=int(c))


@dataclass(frozen=True)
class BanditInstance:
    """One problem instance: attraction means plus optional context.

    kind: "bernoulli" (per-item means), "linear" (means = x^T theta) or
    "logistic" (means = sigmoid(x^T theta)). Contextual kinds carry the
    (L, d) feature matrix; features are fixed across rounds unless
    ``redraw_features`` asks for a fresh draw each round. The linear kind
    defaults to Bernoulli attraction feedback; ``feedback_mode="gaussian"``
    switches to scalar x^T theta + noise with a stop-above-threshold scan.
    """

    kind: str
    L: int
    K: int
    d: int = 0
    means: np.ndarray = None
    theta: np.ndarray | None = None
    features: np.ndarray | None = None
    prior: PriorSpec | None = None
    feedback_mode: str = "bernoulli"
    noise_std: float = 0.1
    click_threshold: float = 0.5
    redraw_features: bool = False

    def __post_init__(self):
        if self.kind not in ("bernoulli", "linear", "logistic"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.feedback_mode not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")
        means = np.asarray(self.means, dtype=float)
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        for name in ("theta", "features"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        if self.K > self.L:
            raise ValueError("K must not exceed L")
        if means.shape != (self.L,):
            raise ValueError("means must have shape (L,)")
        if self.kind == "bernoulli" and (means.min() < 0 or means.max() > 1):
            raise ValueError("bernoulli means must lie in [0, 1]")

    def round_context(self, rng: np.random.Generator | None = None):
        """(features, means) for one round; redraws both when configured."""
        if not self.redraw_features:
            return self.features, self.means
        X = _unit_rows(rng.random((self.L, self.d)))
        raw = X @ self.theta
        means = sigmoid(raw) if self.kind == "logistic" else np.clip(raw, 0.0, 1.0)
        return X, means

    def to_dict(self) -> dict:
        doc = {
            "version": SCHEMA_VERSION,
            "kind": self.kind,
            "L": self.L,
            "K": self.K,
            "d": self.d,
            "means": self.means.tolist(),
            "theta": None if self.theta is None else self.theta.tolist(),
            "features": None if self.features is None else self.features.tolist(),
            "prior": None if self.prior is None else self.prior.to_dict(),
        }
        if self.kind == "linear":
            doc["feedback_mode"] = self.feedback_mode
            doc["noise_std"] = self.noise_std
            doc["click_threshold"] = self.click_threshold
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BanditInstance":
        version = doc.get("version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported instance schema version {version!r}")
        return cls(
            kind=doc["kind"],
            L=int(doc["L"]),
            K=int(doc["K"]),
            d=int(doc["d"]),
            means=doc["means"],
            theta=doc["theta"],
            features=doc["features"],
            prior=None if doc.get("prior") is None else PriorSpec.from_dict(doc["prior"]),
            feedback_mode=doc.get("feedback_mode", "bernoulli"),
            noise_std=float(doc.get("noise_std", 0.1)),
            click_threshold=float(doc.get("click_threshold", 0.5)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BanditInstance":
        return cls.from_dict(json.loads(text))


def sample_beta_instances(
    L: int, K: int, n_outer: int = 20, n_inner: int = 20, rng: np.random.Generator = None
) -> list[BanditInstance]:
    """The nested Beta protocol: n_outer prior draws x n_inner instances each.

    For each outer draw, every item gets Beta(b1_i, 10) with b1_i uniform
    over {1, ..., 10}; the inner loop samples attraction means from that
    prior. Defaults yield 400 instances.
    """
    rng = rng if rng is not None else np.random.default_rng()
    instances = []
    for _ in range(n_outer):
        beta1 = rng.integers(1, 11, size=L).astype(float)
        prior = PriorSpec(beta1, 10.0)
        for _ in range(n_inner):
            means = rng.beta(beta1, 10.0)
            instances.append(BanditInstance("bernoulli", L, K, means=means, prior=prior))
    return instances


def _unit_rows(M: np.ndarray) -> np.ndarray:
    return M / np.linalg.norm(M, axis=-1, keepdims=True)


def sample_linear_instance(
    L: int,
    K: int,
    d: int,
    rng: np.random.Generator,
    feedback_mode: str = "bernoulli",
    noise_std: float = 0.1,
    click_threshold: float = 0.5,
) -> BanditInstance:
    """theta and features uniform on [0,1]^d, normalized to unit length.

    Nonnegative unit vectors keep x^T theta inside [0, 1], so the clip is
    a formality.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    theta = _unit_rows(rng.random(d))
    X = _unit_rows(rng.random((L, d)))
    means = np.clip(X @ theta, 0.0, 1.0)
    return BanditInstance(
        "linear",
        L,
        K,
        d=d,
        means=means,
        theta=theta,
        features=X,
        feedback_mode=feedback_mode,
        noise_std=noise_std,
        click_threshold=click_threshold,
    )


def sample_logistic_instance(L: int, K: int, d: int, rng: np.random.Generator) -> BanditInstance:
    """Like the linear draw but with sigmoid attractions and matched Beta priors.

    Each item's prior Beta(10 mu/(1-mu), 10) has mean exactly mu, giving
    the prior-informed baselines the true per-item expectation.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    theta = _unit_rows(rng.random(d))
    X = _unit_rows(rng.random((L, d)))
    means = sigmoid(X @ theta)
    safe = np.clip(means, 1e-12, 1.0 - 1e-12)  # mu = 1 cannot happen for finite logits
    prior = PriorSpec(10.0 * safe / (1.0 - safe), 10.0)
    return BanditInstance(
        "logistic", L, K, d=d, means=means, theta=theta, features=X, prior=prior
    )


def env_step(
    instance: BanditInstance,
    action: RankedAction,
    rng: np.random.Generator,
    means: np.ndarray | None = None,
) -> Feedback:
    """Simulate the user's scan of ``action`` for one round.

    Click kinds realize a full attraction vector and run the cascade scan;
    the scalar-feedback mode reveals noisy item scores down to the first
    one above the click threshold. ``means`` overrides the instance means
    (used with per-round feature redraws).
    """
    means = instance.means if means is None else means
    if instance.kind == "linear" and instance.feedback_mode == "gaussian":
        noise = rng.normal(0.0, instance.noise_std, instance.L)
        scores = means + noise
        idx = np.fromiter(action.items, dtype=int, count=len(action))
        shown = scores[idx]
        hits = np.flatnonzero(shown > instance.click_threshold)
        click_position = int(hits[0]) + 1 if hits.size else idx.size
        values = shown.copy()
        values[click_position:] = 0.0
        examined = tuple(j + 1 <= click_position for j in range(idx.size))
        return Feedback(tuple(values), click_position, examined)
    attractions = (rng.random(instance.L) < means).astype(float)
    return simulate_cascade_round(action, means, rng, attractions=attractions)
