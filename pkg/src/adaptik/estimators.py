"""Data-driven regularized estimators over sieve classes.

Two families, both closed form in the sieve coefficients:

RDIV (operator regression, then ridge).  Stage 1 regresses every
X-basis function on the Z-basis, giving a matrix B with
(T^ h)(z) = phi(z)^T B c for h = sum_k c_k psi_k.  Stage 2 minimizes

    (1/n) ||y - Phi B c||^2 + lam * c^T G_x c,

where G_x is the empirical X-basis Gram, so the empirical loss is the
mean squared residual of y against the estimated conditional mean of h.

TRAE (adversarial Tikhonov).  The empirical loss is the inner maximum

    L_n(h) = max_f  E_n[2 m(W; f) - 2 h(X) f(Z) - f(Z)^2]

over the Z-sieve, which is a concave quadratic with maximizer
f = M^{-1} (g - B c), value (g - B c)^T M^{-1} (g - B c), where
g_j = E_n[m(W; phi_j)], B_jk = E_n[psi_k(X) phi_j(Z)], M the Z-Gram.
The outer problem adds lam * c^T G_x c and stays quadratic in c.  The
dual fit swaps the roles of X and Z and uses the target moment.

Penalties are always empirical second moments.  Symmetric solves go
through a Cholesky factorization and fall back to minimum-norm least
squares on rank deficiency, matching the minimum-norm solution
convention of the underlying inverse problem.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from adaptik.sieve import Dataset, SieveBasis, empirical_gram

__all__ = [
    "NumericalError",
    "OperatorEstimate",
    "MomentFunctional",
    "FitResult",
    "RegularizedPath",
    "outcome_moment",
    "ate_moment",
    "mean_moment",
    "custom_moment",
    "rdiv_stage1",
    "rdiv_fit",
    "rdiv_loss",
    "trae_inner_max",
    "trae_fit",
    "trae_dual_fit",
    "loss_of",
    "RdivEstimator",
    "TraeEstimator",
    "TraeDualEstimator",
]


class NumericalError(RuntimeError):
    """A solve produced non-finite values or an irrecoverably singular system."""


def _invertible(a: np.ndarray, cond_cap: float = 1e12) -> bool:
    cond = np.linalg.cond(a)
    return bool(np.isfinite(cond) and cond < cond_cap)


def _solve_spd(a: np.ndarray, b: np.ndarray, context: str) -> np.ndarray:
    """Solve a symmetric PSD system; fall back to minimum-norm lstsq."""
    try:
        cf = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        x = scipy.linalg.cho_solve(cf, b, check_finite=False)
    except scipy.linalg.LinAlgError:
        warnings.warn(
            f"{context}: rank-deficient system, using minimum-norm least squares",
            RuntimeWarning,
            stacklevel=3,
        )
        x = np.linalg.lstsq(a, b, rcond=None)[0]
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{context}: solve produced non-finite values")
    return x


# -- domain types ----------------------------------------------------------------

@dataclass(frozen=True)
class OperatorEstimate:
    """Stage-1 regression operator: column k of B maps psi_k(X) onto the Z-sieve."""

    b: np.ndarray           # (J, K)
    gram_z: np.ndarray      # (J, J)
    ridge_stage1: float
    basis_x: SieveBasis
    basis_z: SieveBasis

    def __post_init__(self):
        if not np.all(np.isfinite(self.b)):
            raise NumericalError("operator estimate has non-finite entries")

    def conditional_mean(self, phi: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """(T^ h)(z_i) for h = sum_k coeffs_k psi_k, given phi = Phi(z)."""
        return phi @ (self.b @ coeffs)


@dataclass(frozen=True)
class MomentFunctional:
    """A known linear functional f -> m(W; f), evaluated on sieve elements.

    `matrix(data, basis, arg)` returns the (n, K) array with entry
    (i, k) = m(W_i; phi_k) where the test functions read the `arg`
    feature block ("x" or "z").  Linearity in f is then automatic:
    per-record values of m(W; f_c) are matrix @ c.
    """

    kind: str
    treatment_col: int = 0
    evaluator: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("outcome", "ate", "mean", "custom"):
            raise ValueError(f"unknown moment kind {self.kind!r}")
        if self.kind == "custom" and self.evaluator is None:
            raise ValueError("custom moments need an evaluator")

    def matrix(self, data: Dataset, basis: SieveBasis, arg: str) -> np.ndarray:
        pts = _feature_block(data, arg)
        if self.kind == "outcome":
            return data.y[:, None] * basis.evaluate(pts)
        if self.kind == "ate":
            t = self.treatment_col
            on = np.array(pts)
            on[:, t] = 1.0
            off = np.array(pts)
            off[:, t] = 0.0
            return basis.evaluate(on) - basis.evaluate(off)
        if self.kind == "mean":
            return basis.evaluate(pts)
        return np.asarray(self.evaluator(data, basis, arg), dtype=np.float64)

    def per_record(self, data: Dataset, basis: SieveBasis, arg: str,
                   coeffs: np.ndarray) -> np.ndarray:
        return self.matrix(data, basis, arg) @ np.asarray(coeffs, dtype=np.float64)


def _feature_block(data: Dataset, arg: str) -> np.ndarray:
    if arg == "x":
        return data.x
    if arg == "z":
        return data.z
    raise ValueError(f"arg must be 'x' or 'z', got {arg!r}")


def outcome_moment() -> MomentFunctional:
    """m(W; f) = Y * f(arg), the moment whose representer is E[Y | Z]."""
    return MomentFunctional("outcome")


def ate_moment(treatment_col: int = 0) -> MomentFunctional:
    """m(W; h) = h(arg with treatment 1) - h(arg with treatment 0)."""
    return MomentFunctional("ate", treatment_col=treatment_col)


def mean_moment() -> MomentFunctional:
    """m(W; h) = h(arg), whose expectation is the mean of h."""
    return MomentFunctional("mean")


def custom_moment(evaluator: Callable) -> MomentFunctional:
    """Arbitrary linear form given by (data, basis, arg) -> (n, K) matrix."""
    return MomentFunctional("custom", evaluator=evaluator)


@dataclass(frozen=True)
class FitResult:
    """A fitted coefficient vector plus the quantities the DP loop consumes."""

    coeffs: np.ndarray
    lam: float
    empirical_loss: float
    norm_penalty: float
    inner_adversary: np.ndarray | None = None

    def __post_init__(self):
        if not math.isfinite(self.empirical_loss):
            raise NumericalError("empirical loss is not finite")
        if self.norm_penalty < 0.0:
            raise NumericalError("norm penalty is negative")

    def to_record(self) -> dict:
        rec = {
            "coeffs": np.asarray(self.coeffs).tolist(),
            "lambda": self.lam,
            "empirical_loss": self.empirical_loss,
            "norm_penalty": self.norm_penalty,
        }
        if self.inner_adversary is not None:
            rec["inner_adversary"] = np.asarray(self.inner_adversary).tolist()
        return rec


@dataclass(frozen=True)
class RegularizedPath:
    """(lambda, fit) pairs from a DP search, lambda strictly decreasing."""

    entries: tuple

    def __post_init__(self):
        lams = [lam for lam, _ in self.entries]
        if any(b >= a for a, b in zip(lams, lams[1:])):
            raise ValueError("path lambdas must be strictly decreasing")

    def lambdas(self) -> list[float]:
        return [lam for lam, _ in self.entries]

    def losses(self) -> list[float]:
        return [fit.empirical_loss for _, fit in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# -- RDIV ------------------------------------------------------------------------

def rdiv_stage1(
    data: Dataset,
    basis_x: SieveBasis,
    basis_z: SieveBasis,
    ridge_stage1: float | None = None,
) -> OperatorEstimate:
    """Estimate the conditional-mean operator by per-function ridge regression.

    B = (Phi'Phi/n + eps1 I)^{-1} (Phi'Psi/n); column k holds the
    coefficients of the regression of psi_k(X) on the Z-sieve.  With
    ridge_stage1 = None a small conditioning ridge proportional to the
    mean Gram eigenvalue is used; an explicit 0 demands a nonsingular
    Gram and raises with a condition estimate otherwise.
    """
    psi = basis_x.evaluate(data.x)
    phi = basis_z.evaluate(data.z)
    gram_z = empirical_gram(phi)
    cross = phi.T @ psi / data.n
    j = gram_z.shape[0]
    if ridge_stage1 is None:
        ridge_stage1 = 1e-6 * float(np.trace(gram_z)) / j
    if ridge_stage1 < 0.0:
        raise ValueError("ridge_stage1 must be nonnegative")
    a = gram_z + ridge_stage1 * np.eye(j)
    if ridge_stage1 == 0.0 and not _invertible(gram_z):
        raise NumericalError(
            "stage-1 normal equations are singular with zero ridge "
            f"(condition estimate {np.linalg.cond(gram_z):.3e})"
        )
    b = _solve_spd(a, cross, "rdiv stage 1")
    return OperatorEstimate(b, gram_z, float(ridge_stage1), basis_x, basis_z)


def rdiv_fit(data: Dataset, op: OperatorEstimate, lam: float) -> FitResult:
    """Penalized least squares against the estimated operator.

    Minimizes (1/n)||y - Phi B c||^2 + lam c'G_x c.  lam = 0 is accepted
    for the unregularized baseline; the solve then leans on the stage-1
    ridge and the minimum-norm fallback.
    """
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    psi = op.basis_x.evaluate(data.x)
    phi = op.basis_z.evaluate(data.z)
    gram_x = empirical_gram(psi)
    a_mat = phi @ op.b  # (n, K): (T^ psi_k)(z_i)
    h = empirical_gram(a_mat) + lam * gram_x
    rhs = a_mat.T @ data.y / data.n
    coeffs = _solve_spd(h, rhs, "rdiv fit")
    resid = data.y - a_mat @ coeffs
    loss = float(resid @ resid / data.n)
    penalty = float(coeffs @ gram_x @ coeffs)
    return FitResult(coeffs, float(lam), loss, max(penalty, 0.0))


def rdiv_loss(data: Dataset, op: OperatorEstimate, coeffs: np.ndarray) -> float:
    """(1/n) sum_i (y_i - phi(z_i)' B c)^2."""
    phi = op.basis_z.evaluate(data.z)
    resid = data.y - op.conditional_mean(phi, np.asarray(coeffs, dtype=np.float64))
    return float(resid @ resid / data.n)


# -- TRAE ------------------------------------------------------------------------

def _default_inner_ridge(m: np.ndarray) -> float:
    return 1e-8 * float(np.trace(m)) / m.shape[0]


def _adversary_mats(
    data: Dataset,
    moment: MomentFunctional,
    hyp_basis: SieveBasis,
    adv_basis: SieveBasis,
    hyp_arg: str,
    adv_arg: str,
):
    hyp = hyp_basis.evaluate(_feature_block(data, hyp_arg))
    adv = adv_basis.evaluate(_feature_block(data, adv_arg))
    m = empirical_gram(adv)
    g = moment.matrix(data, adv_basis, adv_arg).mean(axis=0)
    b = adv.T @ hyp / data.n  # (J, K)
    gram_hyp = empirical_gram(hyp)
    return m, g, b, gram_hyp


def _inner_max(m, g, b, coeffs, ridge_inner):
    """Maximizer and value of the concave inner quadratic at fixed h-coeffs."""
    v = g - b @ coeffs
    mt = m + ridge_inner * np.eye(m.shape[0])
    f = _solve_spd(mt, v, "trae inner max")
    return f, float(v @ f)


def trae_inner_max(
    data: Dataset,
    moment: MomentFunctional,
    basis_h: SieveBasis,
    basis_f: SieveBasis,
    coeffs_h: np.ndarray,
    ridge_inner: float | None = None,
) -> tuple[np.ndarray, float]:
    """Closed-form inner maximization of the adversarial loss at fixed h.

    Returns (f_coeffs, value) with f = (M + ridge I)^{-1}(g - B c) and
    value = (g - B c)' f; with ridge 0 the value is the exact maximum of
    E_n[2 m(W; f) - 2 h(X) f(Z) - f(Z)^2] over the span of basis_f.
    """
    m, g, b, _ = _adversary_mats(data, moment, basis_h, basis_f, "x", "z")
    if ridge_inner is None:
        ridge_inner = _default_inner_ridge(m)
    if ridge_inner < 0.0:
        raise ValueError("ridge_inner must be nonnegative")
    if ridge_inner == 0.0 and not _invertible(m):
        raise NumericalError(
            "adversary Gram is singular with zero ridge "
            f"(condition estimate {np.linalg.cond(m):.3e})"
        )
    return _inner_max(m, g, b, np.asarray(coeffs_h, dtype=np.float64), ridge_inner)


def _adversarial_fit(m, g, b, gram_hyp, lam, ridge_inner) -> FitResult:
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    if ridge_inner is None:
        ridge_inner = _default_inner_ridge(m)
    mt = m + ridge_inner * np.eye(m.shape[0])
    minv_b = _solve_spd(mt, b, "trae reduced system")
    minv_g = _solve_spd(mt, g, "trae reduced system")
    quad = b.T @ minv_b + lam * gram_hyp
    quad = (quad + quad.T) / 2.0
    rhs = b.T @ minv_g
    coeffs = _solve_spd(quad, rhs, "trae fit")
    f_hat, loss = _inner_max(m, g, b, coeffs, ridge_inner)
    penalty = float(coeffs @ gram_hyp @ coeffs)
    return FitResult(coeffs, float(lam), loss, max(penalty, 0.0), f_hat)


def trae_fit(
    data: Dataset,
    moment: MomentFunctional,
    basis_h: SieveBasis,
    basis_f: SieveBasis,
    lam: float,
    ridge_inner: float | None = None,
) -> FitResult:
    """Adversarial Tikhonov fit of h over the X-sieve.

    Plugging the closed-form inner maximum into the outer problem gives
    the convex quadratic (g - B c)' M^{-1} (g - B c) + lam c' G_x c whose
    normal equations are solved directly; the stored empirical loss is
    the inner-max value at the fitted coefficients.
    """
    m, g, b, gram_hyp = _adversary_mats(data, moment, basis_h, basis_f, "x", "z")
    return _adversarial_fit(m, g, b, gram_hyp, lam, ridge_inner)


def trae_dual_fit(
    data: Dataset,
    moment: MomentFunctional,
    basis_q: SieveBasis,
    basis_s: SieveBasis,
    lam: float,
    ridge_inner: float | None = None,
) -> FitResult:
    """Adversarial Tikhonov fit of the dual representer q over the Z-sieve.

    Same structure as trae_fit with the roles of X and Z swapped and the
    target moment in place of the outcome moment.
    """
    m, g, b, gram_hyp = _adversary_mats(data, moment, basis_q, basis_s, "z", "x")
    return _adversarial_fit(m, g, b, gram_hyp, lam, ridge_inner)


# -- uniform estimator handles ------------------------------------------------

@dataclass(frozen=True)
class RdivEstimator:
    """fit(data, lam) handle for the DP loop; stage 1 is refit per call."""

    basis_x: SieveBasis
    basis_z: SieveBasis
    ridge_stage1: float | None = None

    def stage1(self, data: Dataset) -> OperatorEstimate:
        return rdiv_stage1(data, self.basis_x, self.basis_z, self.ridge_stage1)

    def fit(self, data: Dataset, lam: float) -> FitResult:
        return rdiv_fit(data, self.stage1(data), lam)

    def loss(self, data: Dataset, coeffs: np.ndarray) -> float:
        return rdiv_loss(data, self.stage1(data), coeffs)


@dataclass(frozen=True)
class TraeEstimator:
    moment: MomentFunctional
    basis_h: SieveBasis
    basis_f: SieveBasis
    ridge_inner: float | None = None

    def fit(self, data: Dataset, lam: float) -> FitResult:
        return trae_fit(data, self.moment, self.basis_h, self.basis_f, lam,
                        self.ridge_inner)

    def loss(self, data: Dataset, coeffs: np.ndarray) -> float:
        _, value = trae_inner_max(data, self.moment, self.basis_h, self.basis_f,
                                  coeffs, self.ridge_inner)
        return value


@dataclass(frozen=True)
class TraeDualEstimator:
    moment: MomentFunctional
    basis_q: SieveBasis
    basis_s: SieveBasis
    ridge_inner: float | None = None

    def fit(self, data: Dataset, lam: float) -> FitResult:
        return trae_dual_fit(data, self.moment, self.basis_q, self.basis_s, lam,
                             self.ridge_inner)

    def loss(self, data: Dataset, coeffs: np.ndarray) -> float:
        m, g, b, _ = _adversary_mats(data, self.moment, self.basis_q, self.basis_s,
                                     "z", "x")
        ridge = self.ridge_inner if self.ridge_inner is not None else _default_inner_ridge(m)
        _, value = _inner_max(m, g, b, np.asarray(coeffs, dtype=np.float64), ridge)
        return value


def loss_of(estimator, data: Dataset, coeffs: np.ndarray) -> float:
    """Uniform loss accessor so the DP loop stays estimator-agnostic.

    At the fitted coefficients this reproduces FitResult.empirical_loss.
    """
    if isinstance(estimator, (RdivEstimator, TraeEstimator, TraeDualEstimator)):
        return estimator.loss(data, coeffs)
    raise TypeError(f"unknown estimator kind: {type(estimator).__name__}")
