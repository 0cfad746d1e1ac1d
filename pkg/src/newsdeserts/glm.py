"""Poisson log-link GLM fitting by iteratively reweighted least squares.

Covers fitting, deviance, Wald inference, nested likelihood-ratio tests and
the deviance-based pseudo R-squared. The weighted least-squares step is
solved through a QR decomposition rather than the normal equations because
dollar-scaled income columns make X'WX badly conditioned.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from . import _kernels
from .errors import DomainError, NotConverged, NotNested, RankDeficient

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 25


@dataclass(frozen=True)
class FittedModel:
    """A converged Poisson GLM: coefficients, covariance and fit summaries."""

    beta: np.ndarray
    covariance: np.ndarray
    null_deviance: float
    residual_deviance: float
    n: int
    p: int
    iterations: int
    converged: bool
    column_names: tuple
    deviance_trace: tuple

    def linear_predictor(self, x):
        return x @ self.beta


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    estimate: float
    std_error: float
    z_value: float
    p_value: float


@dataclass(frozen=True)
class CoefficientReport:
    rows: tuple


def poisson_deviance(y, mu):
    """Poisson deviance 2*sum[y*ln(y/mu) - (y - mu)]; zero-count terms drop the log."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape:
        raise DomainError("y and mu must have matching shapes")
    if np.any(y < 0):
        raise DomainError("negative counts")
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise DomainError("mu must be strictly positive and finite")
    return _kernels.deviance_sum(y, mu)


def _check_rank(x, names):
    # Scale columns to unit norm first so dollar-valued columns do not mask
    # true dependencies; all-zero columns are dependent by definition.
    n, p = x.shape
    norms = np.sqrt((x * x).sum(axis=0))
    zero = norms == 0.0
    if np.any(zero):
        raise RankDeficient(
            "design contains all-zero columns: %s" % ", ".join(np.array(names)[zero]),
            columns=tuple(np.array(names)[zero]),
        )
    xn = x / norms
    svals = np.linalg.svd(xn, compute_uv=False)
    tol = max(n, p) * np.finfo(float).eps * svals[0]
    rank = int((svals > tol).sum())
    if rank < p:
        _, _, vt = np.linalg.svd(xn, full_matrices=True)
        null_vecs = vt[rank:]
        involved = np.any(np.abs(null_vecs) > 1e-8, axis=0)
        cols = tuple(np.array(names)[involved])
        raise RankDeficient(
            "design is rank deficient (rank %d < %d); dependent columns: %s"
            % (rank, p, ", ".join(cols)),
            columns=cols,
        )


def _wls_qr(x, w, z):
    """Solve the sqrt(w)-weighted least squares problem; returns (beta, R)."""
    sw = np.sqrt(w)
    q, r = np.linalg.qr(sw[:, None] * x)
    beta = np.linalg.solve(r, q.T @ (sw * z))
    return beta, r


def fit_poisson(design, tol=IRLS_TOL, max_iter=IRLS_MAX_ITER):
    """Fit a Poisson log-link GLM by IRLS with step halving.

    The deviance trace is monotone non-increasing; convergence is declared
    when the relative deviance change |dD|/(|D|+0.1) drops below ``tol``.
    Raises RankDeficient for singular designs and NotConverged (carrying the
    trace) if ``max_iter`` is exhausted.
    """
    x = np.asarray(design.x, dtype=float)
    y = np.asarray(design.y, dtype=float)
    names = tuple(design.columns)
    n, p = x.shape
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DomainError("response must be nonnegative integer counts")
    _check_rank(x, names)

    # mu0 = y + 0.5 seeds the working response; it is not itself an iterate,
    # so the monotone deviance trace starts at the first solved beta.
    mu = y + 0.5
    eta = np.log(mu)
    trace = []
    beta = None
    dev = math.inf
    converged = False
    polish = 0  # extra Newton steps after the deviance tolerance is met;
    # they drive the score equations to roundoff even for dollar-scaled columns
    for _ in range(max_iter):
        w = mu
        z = eta + (y - mu) / mu
        beta_new, _ = _wls_qr(x, w, z)
        if beta is None:
            cand = beta_new
            eta_c = x @ cand
            if np.max(eta_c) >= 700.0:
                raise NotConverged("linear predictor overflow at first IRLS step")
            mu_c = np.exp(eta_c)
            dev_c = poisson_deviance(y, mu_c)
        else:
            step = 1.0
            for _half in range(30):
                cand = beta + step * (beta_new - beta)
                eta_c = x @ cand
                if np.max(eta_c) < 700.0:
                    mu_c = np.exp(eta_c)
                    dev_c = poisson_deviance(y, mu_c)
                    if dev_c <= dev * (1.0 + 1e-12) + 1e-12:
                        break
                step *= 0.5
            else:
                raise NotConverged(
                    "IRLS step halving failed to reduce deviance", trace=trace
                )
        beta = cand
        eta = eta_c
        mu = mu_c
        trace.append(dev_c)
        if abs(dev - dev_c) / (abs(dev_c) + 0.1) < tol:
            converged = True
            if polish >= 2:
                dev = dev_c
                break
            polish += 1
        dev = dev_c
    if not converged:
        raise NotConverged(
            "IRLS did not converge in %d iterations" % max_iter, trace=trace
        )

    # Expected Fisher information at the converged fit equals X'WX for the
    # canonical log link; invert through R from the final QR.
    _, r_final = _wls_qr(x, mu, eta + (y - mu) / mu)
    r_inv = np.linalg.solve(r_final, np.eye(p))
    cov = r_inv @ r_inv.T

    ybar = y.mean()
    null_dev = poisson_deviance(y, np.full(n, ybar)) if ybar > 0 else 0.0
    return FittedModel(
        beta=beta,
        covariance=cov,
        null_deviance=null_dev,
        residual_deviance=dev,
        n=n,
        p=p,
        iterations=len(trace) - 1,
        converged=True,
        column_names=names,
        deviance_trace=tuple(trace),
    )


def normal_upper_tail(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wald_inference(model):
    """Per-coefficient SEs, z values and two-sided normal p-values."""
    if not model.converged:
        raise DomainError("inference requires a converged model")
    se = np.sqrt(np.diag(model.covariance))
    rows = []
    for name, b, s in zip(model.column_names, model.beta, se):
        z = b / s if s > 0 else 0.0
        p = 2.0 * normal_upper_tail(abs(z))
        rows.append(CoefficientRow(name, float(b), float(s), float(z), float(p)))
    return CoefficientReport(rows=tuple(rows))


def chisq_upper_tail(x, df):
    """P(chi-square with df > x) via the regularized upper incomplete gamma."""
    if x < 0:
        raise DomainError("chi-square statistic must be nonnegative")
    if df != int(df) or df < 1:
        raise DomainError("df must be a positive integer")
    return float(gammaincc(df / 2.0, x / 2.0))


def likelihood_ratio_test(full, reduced, assume_nested=False):
    """Deviance-difference test of nested fits against a chi-square reference.

    Nesting is checked by column names; pass ``assume_nested`` for reduced
    designs that are structural linear restrictions (e.g. segment slopes
    pooled into one main effect), where the names differ.
    """
    if full.n != reduced.n:
        raise NotNested("models were fit on different numbers of rows")
    if not assume_nested and not set(reduced.column_names) <= set(full.column_names):
        raise NotNested("reduced model columns are not a subset of the full model")
    if reduced.p > full.p:
        raise NotNested("reduced model has more parameters than the full model")
    stat = reduced.residual_deviance - full.residual_deviance
    if stat < -1e-6:
        raise NotNested("reduced model fits better than the full model")
    stat = max(stat, 0.0)
    df = full.p - reduced.p
    if df == 0:
        p = 1.0
    else:
        p = chisq_upper_tail(stat, df)
    return {"stat": stat, "df": df, "p": p}


def pseudo_r2(null_dev, resid_dev):
    """1 - residual deviance / null deviance."""
    if null_dev <= 0:
        raise DomainError("null deviance must be positive")
    return 1.0 - resid_dev / null_dev


# --- report serialization ---

INCOME_SCALE = 1e6  # dollar-scaled rows display as estimate * 1e6, dagger-marked


def _is_income_row(name):
    return name.endswith(":HHincome") or name == "HHincome"


def format_p(p):
    if p < 1e-16:
        return "<0.0001"
    return "%.6f" % p


def report_to_csv(report):
    lines = ["name,estimate,std_error,z_value,p_value"]
    for row in report.rows:
        lines.append(
            "%s,%s,%s,%s,%s"
            % (row.name, repr(row.estimate), repr(row.std_error),
               repr(row.z_value), repr(row.p_value))
        )
    return "\n".join(lines) + "\n"


def report_to_text(report):
    """Aligned coefficient table; income rows carry the x1e-6 dagger."""
    header = "%-28s %12s %12s %9s %11s" % (
        "", "Estimate", "Std. Error", "z value", "P-value")
    lines = [header]
    dagger = False
    for row in report.rows:
        est, se = row.estimate, row.std_error
        mark = " "
        if _is_income_row(row.name):
            est *= INCOME_SCALE
            se *= INCOME_SCALE
            mark = "+"
            dagger = True
        lines.append(
            "%-28s %11.4g%s %11.4g%s %9.3f %11s"
            % (row.name, est, mark, se, mark, row.z_value, format_p(row.p_value))
        )
    if dagger:
        lines.append("(+ means multiply by 1e-6)")
    return "\n".join(lines) + "\n"


def model_to_json(model):
    return json.dumps(
        {
            "columns": list(model.column_names),
            "beta": [repr(float(v)) for v in model.beta],
            "covariance": [[repr(float(v)) for v in row] for row in model.covariance],
            "null_deviance": repr(float(model.null_deviance)),
            "residual_deviance": repr(float(model.residual_deviance)),
            "n": model.n,
            "p": model.p,
            "iterations": model.iterations,
            "converged": model.converged,
        },
        indent=1,
    )


def model_from_json(text):
    obj = json.loads(text)
    return FittedModel(
        beta=np.array([float(v) for v in obj["beta"]]),
        covariance=np.array([[float(v) for v in row] for row in obj["covariance"]]),
        null_deviance=float(obj["null_deviance"]),
        residual_deviance=float(obj["residual_deviance"]),
        n=int(obj["n"]),
        p=int(obj["p"]),
        iterations=int(obj["iterations"]),
        converged=bool(obj["converged"]),
        column_names=tuple(obj["columns"]),
        deviance_trace=(),
    )
