"""Doubly robust estimation of linear functionals with sample splitting.

The point estimate combines a primal fit h (of the structural function,
over the X-sieve) and a dual fit q (of the moment representer, over the
Z-sieve), both trained on the fit fold:

    theta_hat = mean over the eval fold of
        m_target(W; h) + m_outcome(W; q) - q(Z) h(X),

so a first-order error in either nuisance is cancelled by the cross
term.  Standard errors come from the empirical variance of the same
per-record values, which estimates the influence-function variance.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from adaptik.discrepancy import DpConfig, DpOutcome, run_dp
from adaptik.estimators import (
    FitResult,
    MomentFunctional,
    TraeDualEstimator,
    TraeEstimator,
    trae_dual_fit,
    trae_fit,
)
from adaptik.sieve import Dataset, SieveBasis
from adaptik.util import stream_rng

__all__ = [
    "SplitPlan",
    "FunctionalEstimate",
    "DrPipelineConfig",
    "DrPipelineResult",
    "CoverageResult",
    "split",
    "dr_estimate",
    "adaptive_dr_pipeline",
    "coverage_experiment",
]


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic fit/eval partition: shuffle by seed, cut by fraction."""

    seed: int
    fit_fraction: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.fit_fraction < 1.0):
            raise ValueError("fit_fraction must lie strictly between 0 and 1")


def split(data: Dataset, plan: SplitPlan) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive (fit, eval) folds with sizes within 1 of the
    requested fractions."""
    if data.n < 4:
        raise ValueError("need at least 4 records to split")
    perm = stream_rng(plan.seed, 0x5B17).permutation(data.n)
    n_fit = round(data.n * plan.fit_fraction)
    n_fit = min(max(n_fit, 1), data.n - 1)
    return data.take(perm[:n_fit]), data.take(perm[n_fit:])


@dataclass(frozen=True)
class FunctionalEstimate:
    """Point estimate with influence-function standard error and interval."""

    theta_hat: float
    se: float
    ci_low: float
    ci_high: float
    level: float
    n_eval: int
    components: dict

    def __post_init__(self):
        if self.se < 0.0:
            raise ValueError("standard error cannot be negative")
        if not (self.ci_low <= self.theta_hat <= self.ci_high):
            raise ValueError("interval must contain the point estimate")

    def to_record(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "n_eval": self.n_eval,
        }


def dr_estimate(
    eval_fold: Dataset,
    h_fit: FitResult,
    basis_h: SieveBasis,
    q_fit: FitResult,
    basis_q: SieveBasis,
    moment_h: MomentFunctional,
    moment_q: MomentFunctional,
    level: float = 0.95,
) -> FunctionalEstimate:
    """Evaluate the doubly robust combination on held-out records.

    moment_h is the target functional applied to the primal fit (its
    test functions read X); moment_q is the outcome-side moment applied
    to the dual fit (reading Z).  Fits must come from the other fold.
    """
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    n = eval_fold.n
    mh = moment_h.per_record(eval_fold, basis_h, "x", h_fit.coeffs)
    mq = moment_q.per_record(eval_fold, basis_q, "z", q_fit.coeffs)
    h_vals = basis_h.evaluate(eval_fold.x) @ h_fit.coeffs
    q_vals = basis_q.evaluate(eval_fold.z) @ q_fit.coeffs
    cross = q_vals * h_vals
    rho = mh + mq - cross
    theta = float(rho.mean())
    se = float(rho.std(ddof=1) / math.sqrt(n))
    zcrit = float(norm.ppf(0.5 + level / 2.0))
    return FunctionalEstimate(
        theta_hat=theta,
        se=se,
        ci_low=theta - zcrit * se,
        ci_high=theta + zcrit * se,
        level=level,
        n_eval=n,
        components={
            "target_moment": mh,
            "outcome_moment": mq,
            "cross": cross,
            "influence": rho,
        },
    )


@dataclass(frozen=True)
class DrPipelineConfig:
    """Everything the adaptive pipeline needs besides the data.

    The primal fit solves the outcome-moment problem for h over basis_h
    with adversary basis_f; the dual fit solves the target-moment
    problem for q over basis_q with adversary basis_s.  Setting
    fixed_lambda_* bypasses the adaptive search for that side.
    """

    basis_h: SieveBasis
    basis_f: SieveBasis
    basis_q: SieveBasis
    basis_s: SieveBasis
    outcome_moment: MomentFunctional
    target_moment: MomentFunctional
    dp_primal: DpConfig
    dp_dual: DpConfig
    split_plan: SplitPlan
    level: float = 0.95
    ridge_inner: float | None = None
    fixed_lambda_primal: float | None = None
    fixed_lambda_dual: float | None = None


@dataclass(frozen=True)
class DrPipelineResult:
    estimate: FunctionalEstimate
    h_fit: FitResult
    q_fit: FitResult
    dp_primal: DpOutcome | None
    dp_dual: DpOutcome | None


def adaptive_dr_pipeline(data: Dataset, config: DrPipelineConfig) -> DrPipelineResult:
    """Split, tune both nuisances on the fit fold, evaluate on the other."""
    fit_fold, eval_fold = split(data, config.split_plan)
    dp_primal = dp_dual = None
    if config.fixed_lambda_primal is None:
        primal = TraeEstimator(config.outcome_moment, config.basis_h,
                               config.basis_f, config.ridge_inner)
        dp_primal = run_dp(primal, fit_fold, config.dp_primal)
        h_fit = dp_primal.fit
    else:
        h_fit = trae_fit(fit_fold, config.outcome_moment, config.basis_h,
                         config.basis_f, config.fixed_lambda_primal,
                         config.ridge_inner)
    if config.fixed_lambda_dual is None:
        dual = TraeDualEstimator(config.target_moment, config.basis_q,
                                 config.basis_s, config.ridge_inner)
        dp_dual = run_dp(dual, fit_fold, config.dp_dual)
        q_fit = dp_dual.fit
    else:
        q_fit = trae_dual_fit(fit_fold, config.target_moment, config.basis_q,
                              config.basis_s, config.fixed_lambda_dual,
                              config.ridge_inner)
    estimate = dr_estimate(
        eval_fold, h_fit, config.basis_h, q_fit, config.basis_q,
        moment_h=config.target_moment, moment_q=config.outcome_moment,
        level=config.level,
    )
    return DrPipelineResult(estimate, h_fit, q_fit, dp_primal, dp_dual)


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    mean_width: float
    reps: int
    hits: int


def coverage_experiment(
    dgp,
    make_config,
    n: int,
    reps: int,
    level: float,
    seed: int = 0,
) -> CoverageResult:
    """Monte Carlo interval coverage of the adaptive pipeline.

    dgp(n, rng) must return (Dataset, theta0); make_config(rep) returns
    the pipeline configuration (the split seed may depend on rep).  Each
    repetition owns an independent stream derived from (seed, rep).
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    hits = 0
    widths = np.empty(reps)
    for rep in range(reps):
        rng = stream_rng(seed, n, rep)
        data, theta0 = dgp(n, rng)
        config = dataclasses.replace(make_config(rep), level=level)
        result = adaptive_dr_pipeline(data, config)
        est = result.estimate
        hits += int(est.ci_low <= theta0 <= est.ci_high)
        widths[rep] = est.ci_high - est.ci_low
    return CoverageResult(hits / reps, float(widths.mean()), reps, hits)
