"""Count-distribution families with weighted maximum-likelihood fitting.

Three regression families are supported, each with its canonical mean
structure on the linear predictor eta = x'beta:

* binomial with K occasions and a logit link, mean K*g(eta),
* Poisson with a log link, mean exp(eta),
* geometric with a log link on the mean mu = exp(eta).

Every method is vectorised over the rows of a design matrix.  Responses
passed to the weighted fit may be non-integer: the log-likelihood kernels
extend continuously in y, which the EM machinery relies on when it fits
against expected counts.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln

from .errors import SeparationError, SingularDesignError

# Coefficient box guarding complete-separation blowup.
BETA_BOX = 30.0


def _softplus(eta: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, eta)


def solve_pd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for a small symmetric positive-definite a.

    Closed forms for d <= 2 avoid the LAPACK call overhead that dominates
    the EM inner loop; larger systems fall through to numpy.
    """
    d = a.shape[0]
    if d == 1:
        if a[0, 0] <= 0.0:
            raise np.linalg.LinAlgError("non-positive 1x1 system")
        return b / a[0, 0]
    if d == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if det <= 0.0 or not np.isfinite(det):
            raise np.linalg.LinAlgError("non-positive-definite 2x2 system")
        return np.array(
            [
                (a[1, 1] * b[0] - a[0, 1] * b[1]) / det,
                (a[0, 0] * b[1] - a[1, 0] * b[0]) / det,
            ]
        )
    return np.linalg.solve(a, b)


class Family(ABC):
    """A count regression family f(y, x; beta)."""

    name: str

    def linpred(self, x: np.ndarray, beta: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        beta = np.asarray(beta, dtype=float)
        if x.shape[1] != beta.shape[0]:
            raise ValueError(
                f"covariate dimension {x.shape[1]} does not match beta length {beta.shape[0]}"
            )
        return x @ beta

    # -- support ------------------------------------------------------

    def validate_counts(self, y: np.ndarray) -> None:
        """Raise if any count lies outside the family support."""
        y = np.asarray(y)
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise ValueError(f"{self.name} counts must be nonnegative integers")

    # -- probabilities ------------------------------------------------

    @abstractmethod
    def logpmf_kernel(self, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Coefficient-dependent part of log f at linear predictor eta."""

    @abstractmethod
    def logpmf_const(self, y: np.ndarray) -> np.ndarray:
        """Coefficient-free part of log f (cacheable across refits)."""

    def logpmf(self, y: np.ndarray, x: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """log f(y, x; beta), continuous in y."""
        y = np.asarray(y, dtype=float)
        return self.logpmf_kernel(y, self.linpred(x, beta)) + self.logpmf_const(y)

    def pmf(self, y, x, beta) -> np.ndarray:
        self.validate_counts(y)
        return np.exp(self.logpmf(y, x, beta))

    @abstractmethod
    def zero_one_probs(self, x, beta) -> tuple[np.ndarray, np.ndarray]:
        """(f(0,x;beta), f(1,x;beta)) for every row of x."""

    @abstractmethod
    def mean_var(self, x, beta) -> tuple[np.ndarray, np.ndarray]:
        """Conditional mean and variance of Y given x."""

    @abstractmethod
    def zt_mean(self, x, beta) -> np.ndarray:
        """Mean of Y given Y >= 1, i.e. e_f / (1 - f(0))."""

    # -- weighted ML --------------------------------------------------

    def _kernel(self, y, eta, w) -> float:
        """Weighted log-likelihood up to beta-free constants."""
        return float(np.dot(w, self.logpmf_kernel(y, eta)))

    @abstractmethod
    def _score_info(self, y, x, eta, w) -> tuple[np.ndarray, np.ndarray]:
        """Weighted score vector and (observed) information matrix."""

    def fit_weighted(
        self,
        y: np.ndarray,
        x: np.ndarray,
        w: np.ndarray,
        beta0: np.ndarray | None = None,
        tol: float = 1e-10,
        max_iter: int = 100,
    ) -> np.ndarray:
        """Maximise sum_i w_i log f(y_i, x_i; beta) by damped Newton.

        For the canonical binomial/Poisson links this is iteratively
        reweighted least squares; step halving makes every accepted step
        increase the objective.  Convergence: relative objective change
        below `tol`, or `max_iter` sweeps.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        beta = (
            np.zeros(x.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
        )
        eta = x @ beta
        ll = self._kernel(y, eta, w)
        for _ in range(max_iter):
            score, info = self._score_info(y, x, eta, w)
            try:
                step = solve_pd(info, score)
            except np.linalg.LinAlgError as exc:
                raise SingularDesignError(
                    "weighted information matrix is singular"
                ) from exc
            # Step halving keeps the objective non-decreasing.
            scale = 1.0
            for _ in range(40):
                cand = beta + scale * step
                eta_c = x @ cand
                ll_c = self._kernel(y, eta_c, w)
                if ll_c >= ll - 1e-13 * (1.0 + abs(ll)):
                    break
                scale *= 0.5
            else:
                return beta
            if np.max(np.abs(cand)) > BETA_BOX:
                raise SeparationError(
                    f"|beta| exceeded {BETA_BOX}; data are likely separated"
                )
            done = ll_c - ll <= tol * (1.0 + abs(ll_c))
            beta, eta, ll = cand, eta_c, ll_c
            if done:
                break
        return beta


class Binomial(Family):
    """Binomial(K, g(x'beta)) with a logit link; requires K >= 2."""

    def __init__(self, k: int):
        k = int(k)
        if k < 2:
            raise ValueError("binomial family requires K >= 2 occasions")
        self.k = k
        self.name = f"binomial(K={k})"

    def validate_counts(self, y) -> None:
        super().validate_counts(y)
        if np.any(np.asarray(y) > self.k):
            raise ValueError(f"binomial counts must not exceed K={self.k}")

    def logpmf_kernel(self, y, eta):
        return y * eta - self.k * _softplus(eta)

    def logpmf_const(self, y):
        y = np.asarray(y, dtype=float)
        k = self.k
        return gammaln(k + 1) - gammaln(y + 1) - gammaln(k - y + 1)

    def zero_one_probs(self, x, beta):
        eta = self.linpred(x, beta)
        log1mg = -_softplus(eta)
        f0 = np.exp(self.k * log1mg)
        f1 = self.k * expit(eta) * np.exp((self.k - 1) * log1mg)
        return f0, f1

    def mean_var(self, x, beta):
        g = expit(self.linpred(x, beta))
        return self.k * g, self.k * g * (1.0 - g)

    def zt_mean(self, x, beta):
        eta = self.linpred(x, beta)
        denom = -np.expm1(-self.k * _softplus(eta))  # 1 - (1-g)^K
        return self.k * expit(eta) / denom

    def _kernel(self, y, eta, w):
        return float(np.dot(w, y * eta - self.k * _softplus(eta)))

    def _score_info(self, y, x, eta, w):
        g = expit(eta)
        mu = self.k * g
        resid = w * (y - mu)
        wv = w * self.k * g * (1.0 - g)
        return resid @ x, (x * wv[:, None]).T @ x


class Poisson(Family):
    """Poisson(exp(x'beta)) with a log link."""

    name = "poisson"

    def logpmf_kernel(self, y, eta):
        return y * eta - np.exp(eta)

    def logpmf_const(self, y):
        return -gammaln(np.asarray(y, dtype=float) + 1)

    def zero_one_probs(self, x, beta):
        lam = np.exp(self.linpred(x, beta))
        f0 = np.exp(-lam)
        return f0, lam * f0

    def mean_var(self, x, beta):
        lam = np.exp(self.linpred(x, beta))
        return lam, lam.copy()

    def zt_mean(self, x, beta):
        lam = np.exp(self.linpred(x, beta))
        return lam / -np.expm1(-lam)

    def _kernel(self, y, eta, w):
        return float(np.dot(w, y * eta - np.exp(eta)))

    def _score_info(self, y, x, eta, w):
        lam = np.exp(eta)
        resid = w * (y - lam)
        wv = w * lam
        return resid @ x, (x * wv[:, None]).T @ x


class Geometric(Family):
    """Geometric with mean mu = exp(x'beta): f(y) = (mu/(1+mu))^y / (1+mu)."""

    name = "geometric"

    def logpmf_kernel(self, y, eta):
        return -y * _softplus(-eta) - _softplus(eta)

    def logpmf_const(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def zero_one_probs(self, x, beta):
        eta = self.linpred(x, beta)
        f0 = expit(-eta)
        return f0, expit(eta) * f0

    def mean_var(self, x, beta):
        mu = np.exp(self.linpred(x, beta))
        return mu, mu * (1.0 + mu)

    def zt_mean(self, x, beta):
        return 1.0 + np.exp(self.linpred(x, beta))

    def _kernel(self, y, eta, w):
        return float(np.dot(w, -y * _softplus(-eta) - _softplus(eta)))

    def _score_info(self, y, x, eta, w):
        # Log link is not canonical here, so use the observed information,
        # which is positive for every y >= 0.
        mu = np.exp(eta)
        resid = w * (y - mu) / (1.0 + mu)
        wv = w * mu * (1.0 + y) / (1.0 + mu) ** 2
        return resid @ x, (x * wv[:, None]).T @ x


_FAMILIES = {
    "poisson": Poisson,
    "geometric": Geometric,
}


def make_family(name: str, k: int | None = None) -> Family:
    """Build a family from its CLI name (`binomial` needs `k`)."""
    if name == "binomial":
        if k is None:
            raise ValueError("binomial family requires the number of occasions k")
        return Binomial(k)
    try:
        return _FAMILIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; expected binomial, poisson, or geometric"
        ) from None


def pmf(family: Family, y: int, x: np.ndarray, beta: np.ndarray) -> float:
    """Probability mass f(y, x; beta) for a single observation."""
    out = family.pmf(np.asarray([y]), np.atleast_2d(x), beta)
    return float(out[0])


def cond_mean_var(family: Family, x: np.ndarray, beta: np.ndarray) -> tuple[float, float]:
    """Conditional mean and variance of Y given a single covariate row."""
    e, v = family.mean_var(np.atleast_2d(x), beta)
    return float(e[0]), float(v[0])


def weighted_ml_step(
    family: Family,
    data: Sequence[tuple[float, np.ndarray, float]],
    beta_init: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted maximum-likelihood coefficients from (y, x, weight) rows.

    Raises SingularDesignError when the positively-weighted design is rank
    deficient and SeparationError when the coefficients leave the box
    |beta_j| <= 30.
    """
    ys = np.array([row[0] for row in data], dtype=float)
    xs = np.array([np.atleast_1d(row[1]) for row in data], dtype=float)
    ws = np.array([row[2] for row in data], dtype=float)
    if np.any(ws < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(ws > 0):
        raise ValueError("at least one weight must be positive")
    active = xs[ws > 0]
    if np.linalg.matrix_rank(active) < xs.shape[1]:
        raise SingularDesignError(
            "positively-weighted design rows do not have full column rank"
        )
    return family.fit_weighted(ys, xs, ws, beta0=beta_init)
