"""Exact oracle for diagonal (SVD-form) linear inverse problems.

A problem is specified directly in the singular basis of a compact
operator T: singular values sigma_i, true-solution coefficients a_i, and
a smoothness (source-condition) exponent beta with a_i = sigma_i**beta *
w0_i.  Everything downstream is closed form:

  * Tikhonov solution from a noisy right-hand side r:
        coeffs_i = sigma_i * r_i / (sigma_i**2 + lam)
  * strong metric  ||h - h0||            (coefficient 2-norm)
  * weak metric    ||T (h - h0)||        (sigma-weighted 2-norm)
  * classical residual-based discrepancy selection of lam on a
    geometric grid, with lam = inf as the "return the zero solution"
    sentinel when the data are pure noise.

The module also exposes the constants of the two regularization-path
inequalities used by the test suite (the quadratic lower bound on the
weak error and the Hoelder bound on lam -> h_lam), so they can be
asserted exactly rather than with fitted tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INFINITE_LAMBDA = math.inf

__all__ = [
    "INFINITE_LAMBDA",
    "SpectralProblem",
    "TikhonovSolution",
    "NoisyObservation",
    "GridExhaustedError",
    "make_source_problem",
    "exact_observation",
    "perturb_observation",
    "tikhonov_solve",
    "tikhonov_ideal",
    "weak_metric",
    "strong_metric",
    "classical_dp_select",
    "weak_lower_bound_constant",
    "holder_constant",
    "problem_to_json",
    "problem_from_json",
    "save_problem",
    "load_problem",
]


class GridExhaustedError(RuntimeError):
    """The geometric lambda grid ran out before the residual bound was met."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SpectralProblem:
    """Diagonal operator model with a built-in source condition.

    singular_values: nonincreasing, all positive, largest at most 1.
    h0_coeffs:       coefficients a_i of the true solution.
    beta:            source exponent, beta > 0.
    w0_coeffs:       source element, a_i == sigma_i**beta * w0_i exactly.
    """

    singular_values: np.ndarray
    h0_coeffs: np.ndarray
    beta: float
    w0_coeffs: np.ndarray

    def __post_init__(self):
        sig = _freeze(self.singular_values)
        a = _freeze(self.h0_coeffs)
        w0 = _freeze(self.w0_coeffs)
        object.__setattr__(self, "singular_values", sig)
        object.__setattr__(self, "h0_coeffs", a)
        object.__setattr__(self, "w0_coeffs", w0)
        if sig.ndim != 1 or sig.size < 1:
            raise ValueError("singular_values must be a nonempty 1-d vector")
        if a.shape != sig.shape or w0.shape != sig.shape:
            raise ValueError(
                f"dimension mismatch: sigma {sig.shape}, a {a.shape}, w0 {w0.shape}"
            )
        if not np.all(np.isfinite(sig)) or not np.all(np.isfinite(a)):
            raise ValueError("non-finite problem coefficients")
        if np.any(sig <= 0.0):
            raise ValueError("singular values must be strictly positive")
        if np.any(np.diff(sig) > 0.0):
            raise ValueError("singular values must be nonincreasing")
        if sig[0] > 1.0:
            raise ValueError(f"largest singular value {sig[0]} exceeds 1")
        if not (self.beta > 0.0):
            raise ValueError("beta must be positive")
        if not np.array_equal(a, sig**self.beta * w0):
            raise ValueError("h0_coeffs must equal sigma**beta * w0_coeffs exactly")

    @property
    def dim(self) -> int:
        return self.singular_values.size

    def rhs_coeffs(self) -> np.ndarray:
        """Noiseless right-hand side: (T h0)_i = sigma_i * a_i."""
        return self.singular_values * self.h0_coeffs


@dataclass(frozen=True)
class TikhonovSolution:
    """Solution coefficients at a given regularization weight."""

    lam: float
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _freeze(self.coeffs))
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class NoisyObservation:
    """Observed right-hand-side coefficients with a known noise bound."""

    r_coeffs: np.ndarray
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "r_coeffs", _freeze(self.r_coeffs))
        if self.r_coeffs.ndim != 1:
            raise ValueError("r_coeffs must be a 1-d vector")
        if not np.all(np.isfinite(self.r_coeffs)):
            raise ValueError("non-finite observation")
        if not (self.delta > 0.0):
            raise ValueError("delta must be positive")

    def check_bound(self, prob: SpectralProblem) -> None:
        """Verify ||r - T h0|| <= delta against the generating problem."""
        _check_dim(prob, self.r_coeffs)
        err = float(np.linalg.norm(self.r_coeffs - prob.rhs_coeffs()))
        if err > self.delta * (1.0 + 1e-9):
            raise ValueError(
                f"observation violates its noise bound: ||r - r0|| = {err} > {self.delta}"
            )


def _check_dim(prob: SpectralProblem, vec: np.ndarray) -> None:
    if vec.shape != prob.singular_values.shape:
        raise ValueError(
            f"dimension mismatch: problem has d={prob.dim}, vector has shape {vec.shape}"
        )


def make_source_problem(
    d: int,
    decay_p: float,
    beta: float,
    w0_coeffs: np.ndarray,
    scale: float = 1.0,
) -> SpectralProblem:
    """Build a polynomially ill-posed problem satisfying a beta-source condition.

    sigma_i = scale * i**(-decay_p) for i = 1..d (so sigma_1 = scale), and
    a_i = sigma_i**beta * w0_i by construction.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if not (decay_p > 0.0):
        raise ValueError("decay_p must be positive")
    if not (beta > 0.0):
        raise ValueError("beta must be positive")
    if not (0.0 < scale <= 1.0):
        raise ValueError("scale must lie in (0, 1]")
    w0 = np.asarray(w0_coeffs, dtype=np.float64)
    if w0.shape != (d,):
        raise ValueError(f"w0_coeffs must have length {d}, got shape {w0.shape}")
    idx = np.arange(1, d + 1, dtype=np.float64)
    sigma = scale * idx ** (-decay_p)
    a = sigma**beta * w0
    return SpectralProblem(sigma, a, float(beta), w0)


def exact_observation(prob: SpectralProblem, delta: float) -> NoisyObservation:
    """Noiseless right-hand side wrapped with a declared noise bound."""
    return NoisyObservation(prob.rhs_coeffs(), float(delta))


def perturb_observation(
    prob: SpectralProblem, delta: float, rng: np.random.Generator
) -> NoisyObservation:
    """Gaussian perturbation rescaled so that ||r - r0|| equals delta.

    The exact-norm rescaling makes the classical noise bound tight and the
    draw reproducible from the generator state alone.
    """
    if not (delta > 0.0):
        raise ValueError("delta must be positive")
    g = rng.standard_normal(prob.dim)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:  # pragma: no cover - probability zero
        g = np.ones(prob.dim)
        norm = float(np.linalg.norm(g))
    obs = NoisyObservation(prob.rhs_coeffs() + g * (delta / norm), float(delta))
    obs.check_bound(prob)
    return obs


def tikhonov_solve(
    prob: SpectralProblem, r: NoisyObservation, lam: float
) -> TikhonovSolution:
    """Minimizer of ||T h - r||^2 + lam ||h||^2 in the singular basis.

    coeffs_i = sigma_i * r_i / (sigma_i**2 + lam).  lam = 0 is allowed
    because all singular values are positive; lam = inf gives the zero
    solution.
    """
    _check_dim(prob, r.r_coeffs)
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    sig = prob.singular_values
    if math.isinf(lam):
        return TikhonovSolution(lam, np.zeros(prob.dim))
    coeffs = sig * r.r_coeffs / (sig**2 + lam)
    return TikhonovSolution(float(lam), coeffs)


def tikhonov_ideal(prob: SpectralProblem, lam: float) -> TikhonovSolution:
    """Population-regularized solution: coeffs_i = sigma_i^2/(sigma_i^2+lam) a_i."""
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    sig = prob.singular_values
    if math.isinf(lam):
        return TikhonovSolution(lam, np.zeros(prob.dim))
    coeffs = sig**2 / (sig**2 + lam) * prob.h0_coeffs
    return TikhonovSolution(float(lam), coeffs)


def strong_metric(prob: SpectralProblem, sol: TikhonovSolution) -> float:
    """||h - h0||: plain 2-norm of the coefficient error."""
    _check_dim(prob, sol.coeffs)
    return float(np.linalg.norm(sol.coeffs - prob.h0_coeffs))


def weak_metric(prob: SpectralProblem, sol: TikhonovSolution) -> float:
    """||T (h - h0)||: sigma-weighted 2-norm of the coefficient error."""
    _check_dim(prob, sol.coeffs)
    return float(
        np.linalg.norm(prob.singular_values * (sol.coeffs - prob.h0_coeffs))
    )


def residual_norm(
    prob: SpectralProblem, r: NoisyObservation, sol: TikhonovSolution
) -> float:
    """||T h - r|| for a candidate solution against the observed data."""
    _check_dim(prob, sol.coeffs)
    return float(np.linalg.norm(prob.singular_values * sol.coeffs - r.r_coeffs))


def classical_dp_select(
    prob: SpectralProblem,
    r: NoisyObservation,
    k: float = 1.5,
    l: float = 2.0,
    lambda0: float = 2.0,
    rho: float = 0.5,
    max_steps: int = 500,
) -> tuple[float, TikhonovSolution]:
    """Classical residual discrepancy selection on a geometric grid.

    If ||r|| <= k * delta the data are indistinguishable from noise and the
    zero solution is returned with lam = inf.  Otherwise the grid
    lambda0 * rho**j is walked downward and the first (largest) lam with
    ||T h_lam - r|| <= k * delta is returned; the preceding grid point then
    certifies the lower bracket k*delta <= ||T h_lam' - r|| with
    lam' = lam / rho <= l * lam whenever 1/rho <= l.
    """
    if not (k > 0.0):
        raise ValueError("k must be positive")
    if not (l > 1.0):
        raise ValueError("l must exceed 1")
    if not (lambda0 > 0.0):
        raise ValueError("lambda0 must be positive")
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    threshold = k * r.delta
    if float(np.linalg.norm(r.r_coeffs)) <= threshold:
        return INFINITE_LAMBDA, TikhonovSolution(INFINITE_LAMBDA, np.zeros(prob.dim))
    lam = float(lambda0)
    for _ in range(max_steps):
        sol = tikhonov_solve(prob, r, lam)
        if residual_norm(prob, r, sol) <= threshold:
            return lam, sol
        lam *= rho
    raise GridExhaustedError(
        f"no grid point below lambda0={lambda0} met the residual bound "
        f"{threshold} within {max_steps} steps; delta may be inconsistent "
        "with the problem"
    )


def weak_lower_bound_constant(prob: SpectralProblem) -> float:
    """Constant c0 in weak_metric(lam)^2 >= c0 * lam^2 for lam in (0, 2).

    c0 = sum_i a_i^2 sigma_i^2 / (sigma_i^2 + 2)^2, which is positive for
    any nonzero h0.
    """
    sig = prob.singular_values
    a = prob.h0_coeffs
    return float(np.sum(a**2 * sig**2 / (sig**2 + 2.0) ** 2))


def holder_constant(prob: SpectralProblem) -> tuple[float, float]:
    """(c_h, gamma) with ||h*_lam - h*_lam'|| <= c_h |lam - lam'|^gamma.

    gamma = min(beta/2, 1).  For beta <= 2 the constant is
    (2/beta) * sqrt(sum a_i^2 / sigma_i^(2 beta)) = (2/beta) * ||w0||;
    for beta > 2 it is sqrt(sum a_i^2 / sigma_i^4), evaluated stably as
    sqrt(sum w0_i^2 sigma_i^(2 beta - 4)).
    """
    beta = prob.beta
    w0 = prob.w0_coeffs
    if beta <= 2.0:
        gamma = beta / 2.0
        c_h = (2.0 / beta) * float(np.linalg.norm(w0))
    else:
        gamma = 1.0
        sig = prob.singular_values
        c_h = float(np.sqrt(np.sum(w0**2 * sig ** (2.0 * beta - 4.0))))
    return c_h, gamma


# -- serialization ------------------------------------------------------------
#
# Plain JSON with Python's shortest-repr float encoding, which round-trips
# every finite double bit-exactly.

def problem_to_json(prob: SpectralProblem) -> str:
    doc = {
        "singular_values": prob.singular_values.tolist(),
        "h0_coeffs": prob.h0_coeffs.tolist(),
        "beta": prob.beta,
        "w0_coeffs": prob.w0_coeffs.tolist(),
    }
    return json.dumps(doc, indent=2)


def problem_from_json(text: str) -> SpectralProblem:
    doc = json.loads(text)
    try:
        return SpectralProblem(
            np.asarray(doc["singular_values"], dtype=np.float64),
            np.asarray(doc["h0_coeffs"], dtype=np.float64),
            float(doc["beta"]),
            np.asarray(doc["w0_coeffs"], dtype=np.float64),
        )
    except KeyError as exc:
        raise ValueError(f"problem document is missing field {exc}") from exc


def save_problem(prob: SpectralProblem, path: str | Path) -> None:
    Path(path).write_text(problem_to_json(prob) + "\n")


def load_problem(path: str | Path) -> SpectralProblem:
    return problem_from_json(Path(path).read_text())
