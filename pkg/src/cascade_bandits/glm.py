"""Link functions and the reweighted least-squares estimation oracle.

The generalized-linear policies model click probabilities as mu(x^T theta)
for a monotone link mu. Estimation solves the ridge-stabilized score
equation lam*theta + sum_i w_i (mu(x_i^T theta) - y_i) x_i = 0 by damped
Newton steps (IRLS). The unregularized score equation can have no finite
root on separable data, hence the ridge term; it also matches the
lam*I initialization of the policies' Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "LinkFunction",
    "SIGMOID",
    "IDENTITY",
    "get_link",
    "GlmDataset",
    "IrlsNonConvergence",
    "sigmoid",
    "sigmoid_derivative",
    "kappa_min",
    "irls_solve",
]


def sigmoid(z):
    return expit(z)


def sigmoid_derivative(z):
    s = expit(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class LinkFunction:
    """A continuously differentiable monotone link and its derivative."""

    kind: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


SIGMOID = LinkFunction("sigmoid", sigmoid, sigmoid_derivative)
IDENTITY = LinkFunction("identity", lambda z: np.asarray(z, dtype=float), lambda z: np.ones_like(np.asarray(z, dtype=float)))

_LINKS = {"sigmoid": SIGMOID, "identity": IDENTITY}


def get_link(name: str) -> LinkFunction:
    try:
        return _LINKS[name]
    except KeyError:
        raise ValueError(f"unknown link {name!r}; expected one of {sorted(_LINKS)}") from None


def kappa_min(S: float, link: LinkFunction = SIGMOID) -> float:
    """Smallest link slope over scores |z| <= S (unit features, ||theta|| <= S).

    For the sigmoid the slope is unimodal and symmetric, so the infimum
    sits at |z| = S. The identity link has constant slope 1.
    """
    if S < 0:
        raise ValueError("S must be nonnegative")
    if link.kind == "identity":
        return 1.0
    return float(sigmoid_derivative(S))


class GlmDataset:
    """Examined (feature, label, weight) rows with amortized appends.

    Rows are stored in capacity-doubling arrays so the per-round append in
    a long simulation stays O(d).
    """

    def __init__(self, dim: int):
        self.dim = dim
        self._cap = 64
        self._n = 0
        self._X = np.zeros((self._cap, dim))
        self._y = np.zeros(self._cap)
        self._w = np.zeros(self._cap)

    def __len__(self) -> int:
        return self._n

    def append(self, x, y: float, weight: float = 1.0) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected feature of shape ({self.dim},), got {x.shape}")
        if not 0.0 <= y <= 1.0:
            raise ValueError(f"labels must lie in [0, 1], got {y}")
        if self._n == self._cap:
            self._cap *= 2
            for name in ("_X", "_y", "_w"):
                old = getattr(self, name)
                grown = np.zeros((self._cap,) + old.shape[1:])
                grown[: self._n] = old[: self._n]
                setattr(self, name, grown)
        self._X[self._n] = x
        self._y[self._n] = y
        self._w[self._n] = weight
        self._n += 1

    @property
    def features(self) -> np.ndarray:
        return self._X[: self._n]

    @property
    def labels(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def weights(self) -> np.ndarray:
        return self._w[: self._n]


class IrlsNonConvergence(RuntimeError):
    def __init__(self, grad_norm: float, iterations: int):
        super().__init__(
            f"IRLS did not reach tolerance after {iterations} iterations "
            f"(gradient norm {grad_norm:.3e})"
        )
        self.grad_norm = grad_norm
        self.iterations = iterations


def _objective(theta, X, y, w, lam, link: LinkFunction):
    z = X @ theta
    if link.kind == "sigmoid":
        # per-row negative log-likelihood log(1+e^z) - y z, valid for y in [0,1]
        nll = np.logaddexp(0.0, z) - y * z
    else:
        nll = 0.5 * (z - y) ** 2
    return 0.5 * lam * float(theta @ theta) + float(w @ nll)


def irls_solve(
    data: GlmDataset,
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 100,
    theta0=None,
    link: LinkFunction = SIGMOID,
) -> np.ndarray:
    """Solve lam*theta + sum w (mu(x^T theta) - y) x = 0 by damped Newton.

    The Newton system uses the weighted Hessian lam*I + sum w mu'(x^T theta)
    x x^T; steps are halved while the penalized objective increases. Raises
    IrlsNonConvergence when the gradient norm stays above ``tol`` after
    ``max_iter`` iterations.
    """
    if lam <= 0 and len(data) == 0:
        raise ValueError("need lam > 0 or a nonempty dataset")
    d = data.dim
    X, y, w = data.features, data.labels, data.weights
    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float).copy()

    def grad(th):
        resid = link.evaluate(X @ th) - y
        return lam * th + X.T @ (w * resid)

    g = grad(theta)
    gnorm = float(np.linalg.norm(g))
    obj = _objective(theta, X, y, w, lam, link)
    for it in range(max_iter):
        if gnorm <= tol:
            return theta
        slopes = link.derivative(X @ theta)
        H = lam * np.eye(d) + (X * (w * slopes)[:, None]).T @ X
        step = np.linalg.solve(H, g)
        # backtrack: halve until the objective stops increasing; the slack
        # scales with |obj| so float noise on large sums cannot stall a step
        alpha = 1.0
        slack = 1e-12 * (1.0 + abs(obj))
        for _ in range(40):
            cand = theta - alpha * step
            cand_obj = _objective(cand, X, y, w, lam, link)
            if cand_obj <= obj + slack:
                break
            alpha *= 0.5
        theta = theta - alpha * step
        obj = _objective(theta, X, y, w, lam, link)
        g = grad(theta)
        gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return theta
    raise IrlsNonConvergence(gnorm, max_iter)
