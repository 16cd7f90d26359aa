"""Threshold level, the constant H and the tail approximations built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .kernel import (
    CovarianceModel,
    SpectralMoments,
    spectral_moments,
    standardize,
)

LOG_2PI = math.log(2.0 * math.pi)
OUT_OF_RANGE_PROBABILITY = 0.1


class InfeasibleThresholdError(ValueError):
    """``b`` is too small for the threshold equation to have a root in the uniqueness region."""

    def __init__(self, message: str, min_b: float):
        super().__init__(message)
        self.min_b = min_b


class InvalidMomentsError(ArithmeticError):
    """Moments do not form a positive-definite ``Gamma``."""


# -- threshold equation -------------------------------------------------------


def log_forward_b(u: float, sigma: float, d: int) -> float:
    """``log[(2 pi/sigma)^{d/2} u^{-d/2} e^{sigma u}]``."""
    return 0.5 * d * (LOG_2PI - math.log(sigma)) - 0.5 * d * math.log(u) + sigma * u


def forward_b(u: float, sigma: float, d: int) -> float:
    return math.exp(log_forward_b(u, sigma, d))


def min_feasible_log_b(sigma: float, d: int) -> float:
    if d == 0:
        return -math.inf
    return log_forward_b(d / (2.0 * sigma), sigma, d)


def solve_u_log(log_b: float, sigma: float, d: int) -> float:
    """Root of ``sigma u - (d/2) log u + (d/2) log(2 pi/sigma) = log b``.

    Safeguarded Newton on a shrinking bracket.  The left side is convex and
    increasing on ``u > d/(2 sigma)`` so the root there is unique.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    if not math.isfinite(log_b):
        raise InfeasibleThresholdError(f"log b must be finite, got {log_b}", math.inf)
    if d == 0:
        return log_b / sigma

    u0 = d / (2.0 * sigma)
    floor = min_feasible_log_b(sigma, d)
    if log_b <= floor:
        min_b = math.exp(floor)
        raise InfeasibleThresholdError(
            f"b = {math.exp(log_b):.6g} is infeasible: need b > {min_b:.6g} "
            f"(value of the threshold equation at u = d/(2 sigma) = {u0:g})",
            min_b,
        )

    def h(u):
        return log_forward_b(u, sigma, d) - log_b

    lo = u0
    hi = max(2.0 * u0, (log_b - 0.5 * d * (LOG_2PI - math.log(sigma))) / sigma + u0 + 1.0)
    while h(hi) <= 0.0:
        hi *= 2.0
    u = hi  # convexity: Newton from the right never overshoots the root
    for _ in range(200):
        val = h(u)
        if val == 0.0:
            return u
        if val > 0:
            hi = u
        else:
            lo = u
        slope = sigma - 0.5 * d / u
        step = u - val / slope if slope > 0 else 0.5 * (lo + hi)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - u) <= 4 * np.finfo(float).eps * u:
            return step
        u = step
    return u


def solve_u(b: float, sigma: float, d: int) -> float:
    if not b > 0:
        raise InfeasibleThresholdError(
            f"b must be positive, got {b}", math.exp(min_feasible_log_b(sigma, d))
        )
    return solve_u_log(math.log(b), sigma, d)


def u_closed_form(b: float, sigma: float, d: int) -> float:
    """Explicit approximation of the threshold ``u``, accurate to ``o(1/u)``."""
    log_bt = math.log(b) - 0.5 * d * (LOG_2PI - math.log(sigma))
    if not log_bt > 1.0:
        raise ValueError(
            f"closed form needs b (2 pi/sigma)^(-d/2) > e; got log of it = {log_bt:.6g}"
        )
    lead = log_bt / sigma
    if lead <= 0.0:
        raise ValueError("closed form needs log(b~)/sigma > 0")
    ll = math.log(lead)
    return lead + d / (2.0 * sigma) * ll + (d / 2.0) ** 2 * ll / (sigma * log_bt)


# -- the constant H -----------------------------------------------------------


@dataclass(frozen=True)
class _HIntegrand:
    """Pieces of the B-integrand ``exp{-1/2 [B^T B + (v.B + c)^2 / k]}``."""

    v: np.ndarray  # mu20 mu22^{-1/2}
    c: float  # mu20 . 1 / (2 sigma)
    k: float  # 1 - mu20 mu22^{-1} mu02

    @property
    def n(self) -> int:
        return self.v.size

    def __call__(self, B: np.ndarray) -> np.ndarray:
        B = np.atleast_2d(B)
        s = B @ self.v + self.c
        return np.exp(-0.5 * (np.sum(B * B, axis=-1) + s * s / self.k))


def _integrand(moments: SpectralMoments, sigma: float) -> _HIntegrand:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    evals, evecs = np.linalg.eigh(moments.mu22)
    if evals.min() <= 0:
        raise InvalidMomentsError("mu22 is not positive definite")
    inv_half = (evecs / np.sqrt(evals)) @ evecs.T
    v = moments.mu20 @ inv_half
    k = 1.0 - float(v @ v)
    if not k > 0:
        raise InvalidMomentsError(
            f"1 - mu20 mu22^-1 mu02 = {k:.3g} <= 0: Gamma is not positive definite"
        )
    c = float(moments.mu20 @ moments.one_vector) / (2.0 * sigma)
    return _HIntegrand(v, c, k)


def log_h_prefactor(moments: SpectralMoments, sigma: float) -> float:
    """Log of the factor multiplying the B-integral."""
    d = moments.d
    one = moments.one_vector
    sign_g, logdet_g = np.linalg.slogdet(moments.gamma)
    sign_m, logdet_m = np.linalg.slogdet(moments.mu22)
    if sign_g <= 0 or sign_m <= 0:
        raise InvalidMomentsError("Gamma or mu22 has non-positive determinant")
    quartic = (one @ moments.mu22 @ one + moments.quartic_diag.sum()) / (8.0 * sigma**2)
    return -0.5 * logdet_g + 0.5 * logdet_m + quartic - (d + 1) * (d + 2) / 4.0 * LOG_2PI


def log_h_integral(moments: SpectralMoments, sigma: float) -> float:
    """Closed form of the B-integral.

    Rotate B so its first axis is along ``v``; the orthogonal axes give
    ``(2 pi)^{(n-1)/2}`` and the remaining 1-D Gaussian integral in
    ``s = v.B/|v|`` is

        int exp{-1/2 [s^2 (1 + |v|^2/k) + 2 c |v| s / k + c^2/k]} ds
            = sqrt(2 pi k / (k + |v|^2)) exp{-c^2 / (2 (k + |v|^2))}.

    Since ``k = 1 - |v|^2`` the result is ``(2 pi)^{n/2} sqrt(k) e^{-c^2/2}``;
    the general form is kept so hand-built moments are handled too.
    """
    f = _integrand(moments, sigma)
    vv = float(f.v @ f.v)
    denom = f.k + vv
    return 0.5 * f.n * LOG_2PI + 0.5 * math.log(f.k / denom) - 0.5 * f.c**2 / denom


def h_integral_quadrature(
    moments: SpectralMoments, sigma: float, *, half_width: float = 40.0, rtol: float = 1e-11
) -> float:
    """Adaptive quadrature of the B-integral over ``[-half_width, half_width]^n``."""
    f = _integrand(moments, sigma)
    if f.n == 1:
        val, _ = integrate.quad(
            lambda x: float(f(np.array([x]))[0]),
            -half_width,
            half_width,
            points=[-f.c * f.v[0] / (f.k + f.v[0] ** 2)],
            epsabs=0.0,
            epsrel=rtol,
            limit=500,
        )
        return val
    res = integrate.cubature(
        lambda x: f(x),
        np.full(f.n, -half_width),
        np.full(f.n, half_width),
        rtol=rtol,
        atol=0.0,
        max_subdivisions=20000,
    )
    if res.status != "converged":
        raise ArithmeticError(f"cubature did not converge (estimate {res.estimate}, error {res.error})")
    return float(res.estimate)


def h_integral_gauss_hermite(moments: SpectralMoments, sigma: float, nodes: int = 60) -> float:
    """Tensor-product Gauss-Hermite rule against the ``exp(-B^T B/2)`` weight."""
    f = _integrand(moments, sigma)
    x, w = special.roots_hermitenorm(nodes)
    grids = np.meshgrid(*([x] * f.n), indexing="ij")
    B = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.prod(np.meshgrid(*([w] * f.n), indexing="ij"), axis=0).ravel()
    s = B @ f.v + f.c
    return float(W @ np.exp(-0.5 * s * s / f.k))


def h_integral_mc(
    moments: SpectralMoments, sigma: float, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Plain Monte Carlo of the B-integral with ``B ~ N(0, I)``; returns (estimate, std error)."""
    f = _integrand(moments, sigma)
    B = rng.standard_normal((n, f.n))
    s = B @ f.v + f.c
    g = np.exp(-0.5 * s * s / f.k)
    scale = (2.0 * math.pi) ** (f.n / 2.0)
    return scale * float(g.mean()), scale * float(g.std(ddof=1) / math.sqrt(n))


H_METHODS = ("closed", "quadrature", "gauss_hermite")


def constant_H(moments: SpectralMoments, sigma: float, d: int | None = None, method: str = "closed") -> float:
    if d is not None and d != moments.d:
        raise ValueError(f"d={d} does not match moments of dimension {moments.d}")
    if method == "closed":
        log_int = log_h_integral(moments, sigma)
    elif method == "quadrature":
        log_int = math.log(h_integral_quadrature(moments, sigma))
    elif method == "gauss_hermite":
        log_int = math.log(h_integral_gauss_hermite(moments, sigma))
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {H_METHODS}")
    return math.exp(log_h_prefactor(moments, sigma) + log_int)


def constant_H_standardized(moments: SpectralMoments, sigma: float) -> float:
    """``(2 pi)^{-(d+1)/2} exp{(1'mu22 1 + sum_i C_iiii(0) - d^2) / (8 sigma^2)}``.

    What ``constant_H`` reduces to once ``mu20 = -1'`` (unit Hessian); used as
    a cross-check only.
    """
    d = moments.d
    one = moments.one_vector
    expo = (one @ moments.mu22 @ one + moments.quartic_diag.sum() - d * d) / (8.0 * sigma**2)
    return math.exp(expo - 0.5 * (d + 1) * LOG_2PI)


# -- tail approximations --------------------------------------------------------


@dataclass(frozen=True)
class TailApproximation:
    b: float
    sigma: float
    d: int
    u: float
    u_tilde: float | None
    H: float
    domain_measure: float
    log_probability: float
    warnings: tuple[str, ...] = ()

    @property
    def probability(self) -> float:
        return math.exp(self.log_probability)

    @property
    def log10_probability(self) -> float:
        return self.log_probability / math.log(10.0)

    def as_dict(self) -> dict:
        return {
            "b": self.b,
            "sigma": self.sigma,
            "d": self.d,
            "u": self.u,
            "u_tilde": self.u_tilde,
            "H": self.H,
            "domain_measure": self.domain_measure,
            "probability": self.probability,
            "log10_probability": self.log10_probability,
            "warnings": list(self.warnings),
        }


def log_tail_formula(H: float, measure: float, u: float, d: int) -> float:
    """``log[H mes u^{d-1} e^{-u^2/2}]``."""
    return math.log(H) + math.log(measure) + (d - 1) * math.log(u) - 0.5 * u * u


def _range_warnings(log_p: float) -> tuple[str, ...]:
    if log_p > math.log(OUT_OF_RANGE_PROBABILITY):
        return (
            f"approximate probability {math.exp(log_p):.3g} exceeds {OUT_OF_RANGE_PROBABILITY}: "
            "b is outside the asymptotic range",
        )
    return ()


def tail_approx(model: CovarianceModel, domain_measure: float, sigma: float, b: float) -> TailApproximation:
    """Large-``b`` approximation of ``P(int_T e^{sigma f} > b)`` for a standardized model."""
    if not domain_measure > 0:
        raise ValueError(f"domain measure must be positive, got {domain_measure}")
    moments = spectral_moments(model)
    d = model.d
    u = solve_u(b, sigma, d)
    H = constant_H(moments, sigma)
    try:
        ut = u_closed_form(b, sigma, d)
    except ValueError:
        ut = None
    log_p = log_tail_formula(H, domain_measure, u, d)
    return TailApproximation(b, sigma, d, u, ut, H, domain_measure, log_p, _range_warnings(log_p))


def tail_approx_raw(raw: CovarianceModel, domain_measure: float, sigma: float, b: float) -> TailApproximation:
    """Same as ``tail_approx`` for a model not yet satisfying ``Hess C(0) = -I``.

    ``domain_measure`` and ``b`` refer to the raw coordinates; they are mapped
    through the affine standardization before evaluating the formula.
    """
    model, affine = standardize(raw)
    measure, b_std = affine.standardized_problem(domain_measure, b)
    approx = tail_approx(model, measure, sigma, b_std)
    return TailApproximation(
        b, sigma, approx.d, approx.u, approx.u_tilde, approx.H, measure, approx.log_probability, approx.warnings
    )


def b_for_probability(model: CovarianceModel, domain_measure: float, sigma: float, target: float) -> float:
    """Invert ``tail_approx`` in ``b``: the threshold whose approximation equals ``target``."""
    if not 0 < target < 1:
        raise ValueError(f"target probability must lie in (0, 1), got {target}")
    d = model.d
    H = constant_H(spectral_moments(model), sigma)
    goal = math.log(target)

    def g(u):
        return log_tail_formula(H, domain_measure, u, d) - goal

    # decreasing in u for u > sqrt(d - 1); u must also exceed d/(2 sigma)
    lo = max(math.sqrt(max(d - 1, 0)), d / (2.0 * sigma)) * (1 + 1e-12) + 1e-12
    if g(lo) < 0:
        raise InfeasibleThresholdError(
            f"target {target:g} is above the largest approximate probability {math.exp(g(lo) + goal):.6g}",
            forward_b(lo, sigma, d),
        )
    hi = lo + 1.0
    while g(hi) > 0:
        hi *= 2.0
    u = _brentq(g, lo, hi)
    return forward_b(u, sigma, d)


def _brentq(fn, lo, hi):
    return optimize.brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def panel_epsilon(u: float, kappa: float = 1.0, delta: float = 0.1) -> float:
    """Half-width ``kappa u^{delta - 1/2}`` of the base panel."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    return kappa * u ** (delta - 0.5)


def panel_tail_approx(kappa: float, delta: float, model: CovarianceModel, sigma: float, b: float) -> float:
    u = solve_u(b, sigma, model.d)
    eps = panel_epsilon(u, kappa, delta)
    return tail_approx(model, (2.0 * eps) ** model.d, sigma, b).probability


# -- auxiliary bounds -----------------------------------------------------------


def sup_rate_shape(u: float, d: int) -> float:
    """``u^d P(N(0,1) > u)``; multiply by a fitted constant and ``mes(T)``."""
    return float(u**d * stats.norm.sf(u))


def fit_sup_constant(estimate: float, domain_measure: float, u: float, d: int) -> float:
    return estimate / (domain_measure * sup_rate_shape(u, d))


def log_det_expansion_error(Z, u: float) -> float:
    """``|log det(I - Z/u) + tr(Z)/u + ||Z||_F^2 / (2 u^2)|`` for symmetric ``Z``.

    ``log det(I - Z/u) = sum_i log(1 - l_i/u) = -sum_i l_i/u - sum_i l_i^2/(2u^2) - ...``,
    so the remainder is ``O(u^-3)``.  The quadratic term enters with a minus
    sign; with a plus sign the remainder would only be ``O(u^-2)``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if not np.allclose(Z, Z.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Z).max())):
        raise ValueError("Z must be symmetric")
    sign, logdet = np.linalg.slogdet(np.eye(Z.shape[0]) - Z / u)
    if sign <= 0:
        raise np.linalg.LinAlgError("I - Z/u is singular or has a non-positive determinant")
    # for symmetric Z the sum of squared eigenvalues is the squared Frobenius norm
    return abs(logdet + np.trace(Z) / u + 0.5 * np.sum(Z * Z) / u**2)


def borel_tis_bound(sigma_sq_max: float, x: float) -> float:
    if not sigma_sq_max > 0:
        raise ValueError("sigma_sq_max must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    return math.exp(-x * x / (2.0 * sigma_sq_max))
