"""Empirical-likelihood objective for one-inflated capture-recapture data.

The observed units are the n individuals captured at least once.  The
log-EL of the parameters (N, beta, w, alpha, {p_i}) is

    log C(N, n) + (N - n) log(alpha) + sum_i log h(y_i, x_i; beta, w)
        + sum_i log p_i,

where h is the one-inflated mass function of the chosen inflation form and
the point masses p_i on the observed covariates satisfy sum p_i = 1 and the
mean-zero constraint sum_i (c_i - alpha) p_i = 0 with c_i the conditional
zero probability (w * f(0, x_i) for one-then-truncate inflation, f(0, x_i)
for truncate-then-inflate).  Profiling the p_i out with a single Lagrange
multiplier xi gives the profile log-EL used by the outer optimisers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InfeasibleConstraintError
from .families import Family

NEG_INF = float("-inf")


class InflationForm(enum.Enum):
    """How the excess mass at count one enters the model.

    ZTOI: inflate at one first, then condition on capture; the never-
    captured probability is w * f(0, x).  OIZT: truncate first, then
    inflate; the never-captured probability is f(0, x) and does not
    involve w.  NONE pins w = 1 (no inflation).
    """

    ZTOI = "ztoi"
    OIZT = "oizt"
    NONE = "none"


@dataclass(frozen=True)
class Dataset:
    """Observed capture counts with covariates, ones-first ordered.

    x has an intercept as its first column; y holds counts >= 1; m is the
    number of rows with y == 1, and those rows come first.
    """

    x: np.ndarray
    y: np.ndarray
    k: int | None = None
    m: int = field(init=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y)
        if y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have matching row counts")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one captured unit")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("first covariate column must be the intercept")
        if np.any(y < 1) or np.any(y != np.floor(y)):
            raise ValueError("capture counts must be integers >= 1")
        if self.k is not None and np.any(y > self.k):
            raise ValueError(f"capture counts must not exceed K={self.k}")
        ones = y == 1
        m = int(ones.sum())
        if np.any(ones[m:]):
            raise ValueError("rows must be ordered with y == 1 first")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", np.asarray(y, dtype=np.int64))
        object.__setattr__(self, "m", m)

    @classmethod
    def from_raw(cls, x, y, k: int | None = None) -> "Dataset":
        """Build a dataset from unordered rows, moving y == 1 rows first."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y)
        order = np.argsort(y != 1, kind="stable")
        return cls(x[order], y[order], k=k)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass
class ElParams:
    """A point in the EL parameter space."""

    N: float
    beta: np.ndarray
    w: float
    alpha: float
    p: np.ndarray

    def validate(self, form: InflationForm, family: Family, data: Dataset,
                 tol: float = 1e-8) -> None:
        """Check simplex, range, and mean-zero constraints."""
        if not (self.N >= data.n):
            raise ValueError("N must be at least the number captured")
        if not (0.0 < self.w <= 1.0):
            raise ValueError("w must lie in (0, 1]")
        if form is InflationForm.NONE and self.w != 1.0:
            raise ValueError("w must be 1 when there is no inflation")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-10:
            raise ValueError("p must be a probability vector")
        c = constraint_values(form, family, data, self.beta, self.w)
        if abs(np.dot(c - self.alpha, self.p)) > tol:
            raise ValueError("mean-zero constraint violated")


def constraint_values(form: InflationForm, family: Family, data: Dataset,
                      beta: np.ndarray, w: float) -> np.ndarray:
    """c_i entering the constraint sum (c_i - alpha) p_i = 0."""
    f0, _ = family.zero_one_probs(data.x, beta)
    if form is InflationForm.OIZT:
        return f0
    return w * f0


def h_log_vector(form: InflationForm, family: Family, data: Dataset,
                 beta: np.ndarray, w: float) -> np.ndarray:
    """log h(y_i, x_i; beta, w) for every observed row.

    Any zero mass yields -inf in that slot (callers treat the sum as a
    sentinel rather than an error).
    """
    logf = family.logpmf(data.y, data.x, beta)
    ones = data.y == 1
    with np.errstate(divide="ignore"):
        if form is InflationForm.NONE or w == 1.0:
            return logf
        if form is InflationForm.ZTOI:
            out = np.log(w) + logf
            f1 = np.exp(logf[ones])
            out[ones] = np.log(w * f1 + (1.0 - w))
            return out
        # OIZT: mass at one mixes the genuine f(1) with the inflated 1-f(0).
        f0, f1 = family.zero_one_probs(data.x, beta)
        out = np.log(w) + logf
        out[ones] = np.log((1.0 - w) * (1.0 - f0[ones]) + w * f1[ones])
        return out


def h_mass(form: InflationForm, family: Family, y: int, x: np.ndarray,
           beta: np.ndarray, w: float) -> float:
    """One-inflated mass h(y, x; beta, w) (h_e for the OIZT form)."""
    if not 0.0 < w <= 1.0:
        raise ValueError("w must lie in (0, 1]")
    x = np.atleast_2d(x)
    f = float(family.pmf(np.asarray([y]), x, beta)[0])
    if form is InflationForm.NONE:
        return f
    if form is InflationForm.ZTOI:
        return w * f + (1.0 - w) * (y == 1)
    f0, f1 = family.zero_one_probs(x, beta)
    if y == 0:
        return float(f0[0])
    if y == 1:
        return float((1.0 - w) * (1.0 - f0[0]) + w * f1[0])
    return w * f


def solve_xi(c: np.ndarray, alpha: float, tol: float = 1e-12,
             max_iter: int = 200) -> float:
    """Root of sum_i (c_i - alpha) / (1 + xi (c_i - alpha)) = 0.

    The constraint function is strictly decreasing on the feasible
    interval, so bisection always converges; Newton polishing tightens the
    root to |constraint| <= tol.  Requires alpha inside the hull of c
    (or all c_i equal to alpha, which gives xi = 0).
    """
    d = np.asarray(c, dtype=float) - alpha
    dmax = d.max()
    dmin = d.min()
    if dmax <= 0.0 and dmin >= 0.0:
        return 0.0
    if dmax <= 0.0 or dmin >= 0.0:
        raise InfeasibleConstraintError(
            "alpha must lie strictly between min(c) and max(c)"
        )

    def g_and_slope(xi):
        t = 1.0 + xi * d
        r = d / t
        return r.sum(), -(r * r).sum()

    # Feasible interval keeping every 1 + xi*d_i > 0.
    lo = -1.0 / dmax
    hi = 1.0 / (-dmin)
    shrink = 1e-12 * (hi - lo)
    lo += shrink
    hi -= shrink
    xi = 0.0
    g, slope = g_and_slope(xi)
    for _ in range(max_iter):
        if abs(g) <= tol:
            return xi
        if g > 0.0:  # decreasing function: root is to the right
            lo = xi
        else:
            hi = xi
        step = -g / slope
        cand = xi + step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        xi = cand
        g, slope = g_and_slope(xi)
    return xi


def profile_weights(form: InflationForm, family: Family, data: Dataset,
                    beta: np.ndarray, w: float, alpha: float) -> np.ndarray:
    """Constrained-optimal point masses p_i at the given outer parameters."""
    c = constraint_values(form, family, data, beta, w)
    xi = solve_xi(c, alpha)
    p = 1.0 / (data.n * (1.0 + xi * (c - alpha)))
    return p / p.sum()


def log_binom_coef(n_total: float, n_obs: int) -> float:
    """log C(N, n) through log-gamma, valid for real N >= n."""
    return float(
        gammaln(n_total + 1.0) - gammaln(n_obs + 1.0) - gammaln(n_total - n_obs + 1.0)
    )


def log_el(form: InflationForm, family: Family, data: Dataset,
           params: ElParams) -> float:
    """Full log-EL at explicit point masses; -inf when any mass vanishes."""
    n = data.n
    if params.N < n or not (0.0 < params.alpha < 1.0):
        return NEG_INF
    logh = h_log_vector(form, family, data, params.beta, params.w)
    if not np.all(np.isfinite(logh)):
        return NEG_INF
    if np.any(params.p <= 0.0):
        return NEG_INF
    return (
        log_binom_coef(params.N, n)
        + (params.N - n) * math.log(params.alpha)
        + float(logh.sum())
        + float(np.log(params.p).sum())
    )


def profile_log_el(form: InflationForm, family: Family, data: Dataset,
                   N: float, beta: np.ndarray, w: float, alpha: float) -> float:
    """Profile log-EL with the p_i maximised out.

    Equals ``log_el`` at the recovered weights.  The additive -n log n
    constant is kept for every inflation form so that profile and full
    log-EL agree identically.  Infeasible (N, beta, w, alpha) return -inf
    so outer maximisers can retreat.
    """
    n = data.n
    if N < n or not (0.0 < alpha < 1.0) or not (0.0 < w <= 1.0):
        return NEG_INF
    logh = h_log_vector(form, family, data, beta, w)
    if not np.all(np.isfinite(logh)):
        return NEG_INF
    c = constraint_values(form, family, data, beta, w)
    try:
        xi = solve_xi(c, alpha)
    except InfeasibleConstraintError:
        return NEG_INF
    t = 1.0 + xi * (c - alpha)
    if np.any(t <= 0.0):
        return NEG_INF
    return (
        log_binom_coef(N, n)
        + (N - n) * math.log(alpha)
        + float(logh.sum())
        - float(np.log(t).sum())
        - n * math.log(n)
    )
