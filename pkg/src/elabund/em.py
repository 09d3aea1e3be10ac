"""EM algorithm maximising the one-inflated empirical likelihood.

Two kinds of missing information drive the augmentation: the covariates of
the never-captured individuals, and—for units captured exactly once—whether
the count arose from the base family or from the inflation component.  The
E-step produces per-unit responsibilities v_i, expected phantom-zero masses
u_i, and (truncate-then-inflate form only) the expected latent count behind
an inflated one.  The M-step has closed forms for w, {p_i}, alpha, a
weighted GLM refit for beta, and a one-dimensional search for N.

Every sweep increases the log-EL; the fit stops when the increment drops
below the configured tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, polygamma

from .elcore import (
    Dataset,
    ElParams,
    InflationForm,
    log_binom_coef,
    log_el,
)
from .errors import DegenerateModelError, EstimationError, SeparationError
from .families import Family

DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 5000
N_MAX_FACTOR = 1e7
MULTISTART_W0 = (0.5, 0.9, 0.99)


@dataclass
class EmConfig:
    """Stopping rule and optional warm start for a fit."""

    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    init: ElParams | None = None
    n_max: float | None = None  # defaults to N_MAX_FACTOR * n

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class LatentWeights:
    """E-step output.

    v: probability that an observed count comes from the base family
       (1 for every unit with y > 1).
    u: expected number of never-captured phantoms at each observed
       covariate; sums to N - n.
    uz: expected base-family (z = 1) mass among the phantoms; equals u
        when the zero class is pure inflation-free, w * u otherwise.
    y1_mean: expected latent count behind an inflated one (truncated
        mean), needed by the truncate-then-inflate M-step.
    """

    v: np.ndarray
    u: np.ndarray
    uz: np.ndarray
    y1_mean: np.ndarray | None = None


@dataclass
class ElFit:
    """Converged (or stopped) EM state."""

    params: ElParams
    loglik: float
    trace: np.ndarray  # columns: log-EL, N, w, alpha
    form: InflationForm
    family: Family
    data: Dataset
    converged: bool
    n_iter: int
    fixed_N: float | None = None

    @property
    def N(self) -> float:
        return self.params.N


def _estep_arrays(form, family, data, beta, w, p, N, f0=None, f1=None):
    if f0 is None:
        f0, f1 = family.zero_one_probs(data.x, beta)
    m, n = data.m, data.n
    v = np.ones(n)
    if w < 1.0 and m:
        if form is InflationForm.ZTOI:
            num = w * f1[:m]
            v[:m] = num / ((1.0 - w) + num)
        elif form is InflationForm.OIZT:
            num = w * f1[:m]
            v[:m] = num / ((1.0 - w) * (1.0 - f0[:m]) + num)
    zp = f0 * p
    tot = zp.sum()
    if tot <= 0.0:
        raise DegenerateModelError("zero-capture probability vanished")
    u = (N - n) * zp / tot
    uz = u if form is not InflationForm.OIZT else w * u
    y1_mean = None
    if form is InflationForm.OIZT and m:
        y1_mean = family.zt_mean(data.x[:m], beta)
    return v, u, uz, y1_mean, f0, f1


def e_step(form: InflationForm, family: Family, data: Dataset,
           params: ElParams, N: float) -> LatentWeights:
    """Responsibilities and expected phantom masses at the current point."""
    v, u, uz, y1_mean, _, _ = _estep_arrays(
        form, family, data, params.beta, params.w, params.p, N
    )
    return LatentWeights(v=v, u=u, uz=uz, y1_mean=y1_mean)


def _mstep_arrays(form, family, data, v, u, uz, y1_mean, N, beta_init,
                  stacked=None):
    n, m = data.n, data.m
    usum = u.sum()
    if form is InflationForm.NONE:
        w = 1.0
    else:
        w = (v.sum() + uz.sum()) / (n + usum)
        if w <= 0.0:
            raise DegenerateModelError("inflation weight collapsed to zero")
        w = min(w, 1.0)
    if stacked is None:
        stacked = _stack_design(form, family, data)
    ys, xs, ws = stacked
    ws[:n] = v
    ws[n:2 * n] = u
    if form is InflationForm.OIZT and m:
        ys[2 * n:] = 1.0 if y1_mean is None else y1_mean
        ws[2 * n:] = 1.0 - v[:m]
    beta = family.fit_weighted(ys, xs, ws, beta0=beta_init)
    p = (1.0 + u) / (n + usum)
    f0, f1 = family.zero_one_probs(data.x, beta)
    alpha = float(np.dot(f0, p))
    if form is not InflationForm.OIZT:
        alpha *= w
    if not 0.0 < alpha < 1.0:
        raise DegenerateModelError(f"alpha left (0, 1): {alpha}")
    return beta, w, alpha, p, f0, f1


def _stack_design(form, family, data):
    """Preallocate the doubled (y, x, weight) rows used by the beta refit."""
    n, m = data.n, data.m
    extra = m if form is InflationForm.OIZT else 0
    ys = np.concatenate([data.y.astype(float), np.zeros(n), np.ones(extra)])
    xs = np.vstack([data.x, data.x] + ([data.x[:m]] if extra else []))
    ws = np.empty(2 * n + extra)
    return ys, xs, ws


def m_step(form: InflationForm, family: Family, data: Dataset,
           weights: LatentWeights, N: float,
           beta_init: np.ndarray | None = None) -> ElParams:
    """Closed-form updates for (w, p, alpha) plus the weighted beta refit."""
    beta, w, alpha, p, _, _ = _mstep_arrays(
        form, family, data, weights.v, weights.u, weights.uz,
        weights.y1_mean, N, beta_init,
    )
    return ElParams(N=N, beta=beta, w=w, alpha=alpha, p=p)


def update_N(alpha: float, n: int, n_max: float | None = None) -> float:
    """Maximiser of log C(N, n) + (N - n) log(alpha) over [n, n_max].

    The derivative digamma(N+1) - digamma(N-n+1) + log(alpha) is strictly
    decreasing in N, so a safeguarded Newton search finds the unique root;
    the optimum sits near n / (1 - alpha).
    """
    if alpha >= 1.0:
        raise ValueError("alpha >= 1 makes the objective unbounded in N")
    if alpha <= 0.0:
        return float(n)
    if n_max is None:
        n_max = N_MAX_FACTOR * n
    la = math.log(alpha)

    def slope(N):
        return float(digamma(N + 1.0) - digamma(N - n + 1.0)) + la

    if slope(n) <= 0.0:
        return float(n)
    if slope(n_max) >= 0.0:
        return float(n_max)
    lo, hi = float(n), float(n_max)
    N = min(max(float(n), (n - 0.5 + 0.5 * alpha) / (1.0 - alpha)), n_max)
    for _ in range(100):
        g = slope(N)
        if g > 0.0:
            lo = N
        else:
            hi = N
        gp = float(polygamma(1, N + 1.0) - polygamma(1, N - n + 1.0))
        cand = N - g / gp if gp < 0.0 else 0.5 * (lo + hi)
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - N) <= 1e-10 * max(1.0, abs(N)):
            return cand
        N = cand
    return N


def _initial_beta(family, data):
    try:
        return family.fit_weighted(
            data.y.astype(float), data.x, np.ones(data.n)
        )
    except SeparationError:
        return np.zeros(data.dim)


def _loglik(form, family, data, N, beta, w, alpha, p, logf=None):
    params = ElParams(N=N, beta=beta, w=w, alpha=alpha, p=p)
    return log_el(form, family, data, params)


def _run_em(form, family, data, config, fixed_N, beta0, w0):
    n = data.n
    n_max = config.n_max if config.n_max is not None else N_MAX_FACTOR * n
    if config.init is not None:
        seed = config.init
        beta = np.array(seed.beta, dtype=float)
        w = 1.0 if form is InflationForm.NONE else float(seed.w)
        p = np.array(seed.p, dtype=float)
        alpha = float(seed.alpha)
        N = float(fixed_N) if fixed_N is not None else float(seed.N)
    else:
        beta = beta0
        w = 1.0 if form is InflationForm.NONE else w0
        p = np.full(n, 1.0 / n)
        f0, _ = family.zero_one_probs(data.x, beta)
        alpha = float(np.dot(f0, p))
        if form is not InflationForm.OIZT:
            alpha *= w
        alpha = min(max(alpha, 1e-12), 1.0 - 1e-12)
        N = float(fixed_N) if fixed_N is not None else max(
            float(n), update_N(alpha, n, n_max)
        )

    stacked = _stack_design(form, family, data)
    f0 = f1 = None
    ll = _loglik(form, family, data, N, beta, w, alpha, p)
    trace = [(ll, N, w, alpha)]
    converged = False
    for it in range(config.max_iter):
        v, u, uz, y1m, f0, f1 = _estep_arrays(
            form, family, data, beta, w, p, N, f0, f1
        )
        beta, w, alpha, p, f0, f1 = _mstep_arrays(
            form, family, data, v, u, uz, y1m, N, beta, stacked
        )
        if fixed_N is None:
            N = update_N(alpha, n, n_max)
        ll_new = _loglik(form, family, data, N, beta, w, alpha, p)
        trace.append((ll_new, N, w, alpha))
        if ll_new - ll <= config.tol:
            ll = ll_new
            converged = True
            break
        ll = ll_new
    if w > 1.0 - 1e-10:
        w = 1.0
    params = ElParams(N=N, beta=beta, w=w, alpha=alpha, p=p)
    return ElFit(
        params=params,
        loglik=ll,
        trace=np.asarray(trace),
        form=form,
        family=family,
        data=data,
        converged=converged,
        n_iter=len(trace) - 1,
        fixed_N=fixed_N,
    )


def fit(form: InflationForm, family: Family, data: Dataset,
        config: EmConfig | None = None,
        fixed_N: float | None = None) -> ElFit:
    """Maximum EL estimate via EM, multi-started over the inflation weight.

    With `fixed_N` the abundance is held at the given value (used by the
    likelihood-ratio machinery); otherwise N is updated each sweep.  The
    no-inflation form pins w = 1 and runs a single start.  Non-convergence
    is flagged on the result, not raised.
    """
    if config is None:
        config = EmConfig()
    if fixed_N is not None and fixed_N < data.n:
        raise ValueError("fixed_N must be at least the number captured")
    beta0 = _initial_beta(family, data)
    if config.init is not None or form is InflationForm.NONE:
        return _run_em(form, family, data, config, fixed_N, beta0, 1.0)
    best: ElFit | None = None
    last_err: EstimationError | None = None
    for w0 in MULTISTART_W0:
        try:
            cand = _run_em(form, family, data, config, fixed_N, beta0, w0)
        except EstimationError as err:
            last_err = err
            continue
        if best is None or cand.loglik > best.loglik:
            best = cand
    if best is None:
        raise last_err if last_err is not None else DegenerateModelError(
            "every start failed"
        )
    return best
