"""Penalized Poisson regression: lasso and ridge via coordinate descent on
the IRLS quadratic surrogate, with a descending lambda path and 10-fold CV.

The intercept and the segment indicator-offset columns are never penalized;
slope columns are standardized internally (population standard deviations)
and coefficients are reported back on the original scale. lambda_max is the
smallest penalty at which every penalized coefficient is zero, computed from
the KKT condition at the unpenalized-columns fit.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, NotConverged
from .features import DesignMatrix
from .glm import fit_poisson, poisson_deviance

N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-4
_ALPHA_FLOOR = 1e-3  # ridge shares the lasso grid construction


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic-net style penalty: alpha=1 lasso, alpha=0 ridge."""

    alpha: float
    lam: float
    standardize: bool = True
    # the intercept (and segment offsets) are never penalized

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("alpha must lie in [0, 1]")
        if self.lam < 0.0:
            raise DomainError("lambda must be nonnegative")


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray      # strictly decreasing
    mean_cv_deviance: np.ndarray  # mean held-out deviance per observation
    se: np.ndarray
    lambda_min: float
    seed: int
    alpha: float


def _penalized_mask(design):
    return np.array([c not in design.unpenalized for c in design.columns])


def _standardize(x, mask):
    scale = np.ones(x.shape[1])
    sd = x.std(axis=0, ddof=0)
    for j in np.where(mask)[0]:
        if sd[j] > 0:
            scale[j] = sd[j]
    return x / scale, scale


def _objective(y, eta, beta, lam, alpha, mask, n):
    mu = np.exp(eta)
    nll = float(np.sum(mu - y * eta)) / n
    b = beta[mask]
    return nll + lam * (alpha * np.abs(b).sum() + 0.5 * (1 - alpha) * (b * b).sum())


def _fit_std(xs, y, lam, alpha, mask, beta0, tol, max_outer):
    """Penalized fit on the standardized design; returns standardized beta."""
    n = xs.shape[0]
    beta = beta0.copy()
    eta = xs @ beta
    np.clip(eta, -30.0, 30.0, out=eta)
    obj = _objective(y, eta, beta, lam, alpha, mask, n)
    lam1 = lam * alpha
    lam2 = lam * (1.0 - alpha)
    for _ in range(max_outer):
        mu = np.exp(eta)
        w = mu
        z = eta + (y - mu) / mu
        prev = beta.copy()
        _kernels.cd_solve(xs, w, z, beta, lam1, lam2, mask, 1e-16, 1000)
        step = 1.0
        for _half in range(30):
            cand = prev + step * (beta - prev)
            eta_c = np.clip(xs @ cand, -30.0, 30.0)
            obj_c = _objective(y, eta_c, cand, lam, alpha, mask, n)
            if obj_c <= obj + 1e-14 * (1.0 + abs(obj)):
                break
            step *= 0.5
        else:
            raise NotConverged("penalized step halving failed")
        beta = cand
        eta = eta_c
        if abs(obj - obj_c) <= tol * (abs(obj_c) + 0.1):
            return beta
        obj = obj_c
    raise NotConverged("penalized fit did not converge")


def _null_beta(design, mask):
    """Fit the unpenalized columns alone; embed into a full-length vector."""
    free = ~mask
    sub = DesignMatrix(
        x=design.x[:, free],
        columns=tuple(np.array(design.columns)[free]),
        fips=design.fips,
        y=design.y,
        lag_counts=design.lag_counts,
        unpenalized=design.unpenalized,
    )
    model = fit_poisson(sub)
    beta = np.zeros(design.p)
    beta[free] = model.beta
    return beta


def fit_penalized(design, penalty, tol=1e-9, max_outer=200, _warm=None):
    """Minimize Poisson NLL/n plus the elastic-net penalty on slope columns.

    Returns coefficients on the original column scale.
    """
    y = np.asarray(design.y, dtype=float)
    if np.any(y < 0):
        raise DomainError("negative counts")
    mask = _penalized_mask(design)
    xs, scale = (_standardize(design.x, mask) if penalty.standardize
                 else (np.asarray(design.x, float), np.ones(design.p)))
    if _warm is not None:
        beta0 = _warm * scale
    else:
        beta0 = _null_beta(
            DesignMatrix(x=xs, columns=design.columns, fips=design.fips, y=design.y,
                         lag_counts=design.lag_counts, unpenalized=design.unpenalized),
            mask,
        )
    beta = _fit_std(xs, y, penalty.lam, penalty.alpha, mask, beta0, tol, max_outer)
    return beta / scale


def lambda_max(design, alpha, standardize=True):
    """Smallest lambda at which all penalized coefficients are zero (KKT)."""
    mask = _penalized_mask(design)
    if not mask.any():
        raise DomainError("design has no penalized columns")
    xs, _ = (_standardize(design.x, mask) if standardize
             else (np.asarray(design.x, float), None))
    beta0 = _null_beta(
        DesignMatrix(x=xs, columns=design.columns, fips=design.fips, y=design.y,
                     lag_counts=design.lag_counts, unpenalized=design.unpenalized),
        mask,
    )
    mu0 = np.exp(np.clip(xs @ beta0, -30.0, 30.0))
    grad = xs[:, mask].T @ (design.y - mu0) / design.n
    # the relative nudge keeps the KKT boundary strict under fp rounding
    return float(np.max(np.abs(grad)) / max(alpha, _ALPHA_FLOOR)) * (1.0 + 1e-12)


def lambda_grid(design, alpha, n_lambda=N_LAMBDA, min_ratio=LAMBDA_MIN_RATIO):
    top = lambda_max(design, alpha)
    return np.geomspace(top, top * min_ratio, n_lambda)


def fit_path(design, alpha, lambdas=None, standardize=True, tol=1e-9):
    """Warm-started descending-lambda solutions; rows align with the grid."""
    if lambdas is None:
        lambdas = lambda_grid(design, alpha)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise DomainError("lambda grid must be strictly decreasing")
    coefs = np.empty((len(lambdas), design.p))
    warm = None
    for k, lam in enumerate(lambdas):
        warm = fit_penalized(
            design, PenaltySpec(alpha=alpha, lam=float(lam), standardize=standardize),
            tol=tol, _warm=warm,
        )
        coefs[k] = warm
    return lambdas, coefs


def cross_validate(design, alpha, folds=10, seed=0, lambdas=None):
    """10-fold CV over the lambda path; deterministic folds from the seed."""
    n = design.n
    if n < folds:
        raise DomainError("need at least as many rows as folds")
    if lambdas is None:
        lambdas = lambda_grid(design, alpha)
    lambdas = np.asarray(lambdas, dtype=float)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    for i, row in enumerate(perm):
        fold_of[row] = i % folds

    fold_dev = np.empty((folds, len(lambdas)))
    for k in range(folds):
        test_rows = np.where(fold_of == k)[0]
        train_rows = np.where(fold_of != k)[0]
        train = design.take(train_rows)
        _, coefs = fit_path(train, alpha, lambdas=lambdas)
        x_test = design.x[test_rows]
        y_test = design.y[test_rows]
        for j in range(len(lambdas)):
            mu = np.exp(np.clip(x_test @ coefs[j], -30.0, 30.0))
            fold_dev[k, j] = poisson_deviance(y_test, mu) / len(test_rows)
    mean_dev = fold_dev.mean(axis=0)
    se = fold_dev.std(axis=0, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(mean_dev))  # ties resolve to the larger lambda
    return CvResult(
        lambda_grid=lambdas,
        mean_cv_deviance=mean_dev,
        se=se,
        lambda_min=float(lambdas[best]),
        seed=seed,
        alpha=alpha,
    )


def fit_cv(design, alpha, folds=10, seed=0):
    """Cross-validate, then refit on all rows at lambda_min."""
    cv = cross_validate(design, alpha, folds=folds, seed=seed)
    coefs = fit_penalized(design, PenaltySpec(alpha=alpha, lam=cv.lambda_min))
    return coefs, cv


def cv_to_csv(cv):
    lines = ["lambda,mean_deviance,se"]
    for lam, dev, se in zip(cv.lambda_grid, cv.mean_cv_deviance, cv.se):
        lines.append("%s,%s,%s" % (repr(float(lam)), repr(float(dev)), repr(float(se))))
    return "\n".join(lines) + "\n"
