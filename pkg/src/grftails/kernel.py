"""Smooth homogeneous covariance models and their spectral moments.

Both built-in families are radial in the scaled lag ``L t``: writing
``q = |L t|^2 / 2`` and ``M = L^T L`` the covariance is ``C(t) = g(q)`` with
a scalar profile ``g``.  Every derivative needed downstream follows from
``g, g', g''`` and ``M``:

    dC/dt_i             = g'(q) (M t)_i
    d2C/dt_i dt_j       = g''(q) (M t)_i (M t)_j + g'(q) M_ij
    d4C/dt_i..dt_l (0)  = g''(0) (M_ij M_kl + M_ik M_jl + M_il M_jk)

Odd derivatives vanish at the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np

SQ_EXP = "sq_exp"
RAT_QUAD = "rat_quad"
FAMILIES = (SQ_EXP, RAT_QUAD)

STANDARDIZED_TOL = 1e-10


class KernelError(ValueError):
    """Invalid kernel specification."""


class NotStandardizedError(KernelError):
    """The model's Hessian at the origin is not ``-I``."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def rat_quad_min_alpha(d: int) -> float:
    """Smallest admissible (exclusive) rational-quadratic exponent in dimension ``d``."""
    return d / 2 + 3


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Unit-variance homogeneous covariance ``C(t) = g(|L t|^2 / 2)``.

    Parameters
    ----------
    family : {"sq_exp", "rat_quad"}
        ``sq_exp`` is ``exp(-|Lt|^2/2)``; ``rat_quad`` is
        ``(1 + |Lt|^2/(2 alpha))^(-alpha)``.
    scale : (d, d) array
        Invertible scale matrix ``L``.
    alpha : float, optional
        Rational-quadratic exponent, must exceed ``d/2 + 3``.
    """

    family: str
    scale: np.ndarray
    alpha: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        L = np.atleast_2d(np.asarray(self.scale, dtype=float))
        if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 1:
            raise KernelError(f"scale matrix must be square d x d, got shape {L.shape}")
        if not np.all(np.isfinite(L)):
            raise KernelError("scale matrix has non-finite entries")
        if abs(np.linalg.det(L)) < 1e-300 or np.linalg.cond(L) > 1e12:
            raise KernelError("scale matrix is singular")
        object.__setattr__(self, "scale", _frozen(L))
        d = L.shape[0]
        if self.family == RAT_QUAD:
            if self.alpha is None:
                raise KernelError("rat_quad requires alpha")
            bound = rat_quad_min_alpha(d)
            if not float(self.alpha) > bound:
                raise KernelError(
                    f"rat_quad alpha must exceed d/2 + 3 = {bound:g} for d={d}, got {self.alpha}"
                )
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise KernelError("alpha is only used by rat_quad")

    @property
    def d(self) -> int:
        return self.scale.shape[0]

    @cached_property
    def metric(self) -> np.ndarray:
        """``M = L^T L``; the Hessian of ``C`` at 0 is ``-M``."""
        return _frozen(self.scale.T @ self.scale)

    # profile g(q) and its first two derivatives
    def _profile(self, q: np.ndarray, order: int) -> np.ndarray:
        if self.family == SQ_EXP:
            e = np.exp(-q)
            return (e, -e, e)[order]
        a = self.alpha
        base = 1.0 + q / a
        if order == 0:
            return base ** (-a)
        if order == 1:
            return -(base ** (-a - 1.0))
        return (a + 1.0) / a * base ** (-a - 2.0)

    @property
    def profile_curvature(self) -> float:
        """``g''(0)``: 1 for ``sq_exp``, ``(alpha+1)/alpha`` for ``rat_quad``."""
        return float(self._profile(np.float64(0.0), 2))

    def _lags(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            t = t[None]
        if t.shape[-1] != self.d:
            raise KernelError(f"lag has trailing dimension {t.shape[-1]}, model has d={self.d}")
        if not np.all(np.isfinite(t)):
            raise KernelError("lag has non-finite entries")
        return t

    def _q(self, t: np.ndarray) -> np.ndarray:
        s = t @ self.scale.T
        return 0.5 * np.sum(s * s, axis=-1)

    def __call__(self, t) -> np.ndarray | float:
        t = self._lags(t)
        out = self._profile(self._q(t), 0)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, t) -> np.ndarray:
        """``dC/dt`` at each lag, shape ``(..., d)``."""
        t = self._lags(t)
        return self._profile(self._q(t), 1)[..., None] * (t @ self.metric)

    def hessian(self, t) -> np.ndarray:
        """``d2C/dt dt^T`` at each lag, shape ``(..., d, d)``."""
        t = self._lags(t)
        q = self._q(t)
        mt = t @ self.metric
        return (
            self._profile(q, 2)[..., None, None] * mt[..., :, None] * mt[..., None, :]
            + self._profile(q, 1)[..., None, None] * self.metric
        )

    def gram(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        diff = points[:, None, :] - points[None, :, :]
        return self._profile(self._q(self._lags(diff)), 0)

    def hessian_at_zero(self) -> np.ndarray:
        return self._profile(np.float64(0.0), 1) * np.array(self.metric)

    def fourth_at_zero(self) -> np.ndarray:
        """Full rank-4 tensor of fourth derivatives of ``C`` at the origin."""
        M = self.metric
        t = (
            np.einsum("ij,kl->ijkl", M, M)
            + np.einsum("ik,jl->ijkl", M, M)
            + np.einsum("il,jk->ijkl", M, M)
        )
        return self.profile_curvature * t

    def is_standardized(self, tol: float = STANDARDIZED_TOL) -> bool:
        return bool(np.max(np.abs(self.hessian_at_zero() + np.eye(self.d))) <= tol)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family, "d": self.d, "L": self.scale.tolist()}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_dict(cls, spec: Mapping[str, Any]) -> "CovarianceModel":
        if not isinstance(spec, Mapping):
            raise KernelError("kernel spec must be a JSON object")
        try:
            family = spec["family"]
            d = int(spec["d"])
        except (KeyError, TypeError, ValueError) as exc:
            raise KernelError(f"kernel spec needs 'family' and integer 'd': {exc}") from None
        if d < 1:
            raise KernelError(f"d must be a positive integer, got {d}")
        L = spec.get("L", np.eye(d).tolist())
        try:
            L = np.asarray(L, dtype=float)
        except (TypeError, ValueError):
            raise KernelError("L must be a numeric d x d array") from None
        if L.size != d * d:
            raise KernelError(f"L must have {d * d} entries for d={d}, got {L.size}")
        return cls(family, L.reshape(d, d), spec.get("alpha"))

    @classmethod
    def from_json(cls, text: str) -> "CovarianceModel":
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise KernelError(f"malformed kernel JSON: {exc}") from None
        return cls.from_dict(spec)


def sq_exp(d: int = 1, scale=None) -> CovarianceModel:
    return CovarianceModel(SQ_EXP, np.eye(d) if scale is None else scale)


def rat_quad(alpha: float, d: int = 1, scale=None) -> CovarianceModel:
    return CovarianceModel(RAT_QUAD, np.eye(d) if scale is None else scale, alpha)


def covariance_eval(model: CovarianceModel, t) -> float:
    t = np.asarray(t, dtype=float)
    if t.ndim > 1 or t.size != model.d:
        raise KernelError(f"expected a {model.d}-vector, got shape {t.shape}")
    return float(model(t.reshape(model.d)))


# -- second-derivative vectorization ---------------------------------------


def vech_pairs(d: int) -> list[tuple[int, int]]:
    """Index pairs in the frozen order: diagonals, then ``(i, j)`` for ``i < j``."""
    return [(i, i) for i in range(d)] + [(i, j) for i in range(d) for j in range(i + 1, d)]


def vech(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.array([S[i, j] for i, j in vech_pairs(S.shape[0])])


def unvech(v: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (d * (d + 1) // 2,):
        raise ValueError(f"expected length {d * (d + 1) // 2}, got {v.shape}")
    S = np.zeros((d, d))
    for value, (i, j) in zip(v, vech_pairs(d)):
        S[i, j] = S[j, i] = value
    return S


def one_vector(d: int) -> np.ndarray:
    """``d`` leading ones followed by ``d(d-1)/2`` zeros (NOT all ones)."""
    out = np.zeros(d * (d + 1) // 2)
    out[:d] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class SpectralMoments:
    mu20: np.ndarray
    mu22: np.ndarray
    quartic_diag: np.ndarray
    hessian_at_zero: np.ndarray
    gamma: np.ndarray = field(init=False)
    one_vector: np.ndarray = field(init=False)

    def __post_init__(self):
        mu20 = np.atleast_1d(np.asarray(self.mu20, dtype=float))
        mu22 = np.atleast_2d(np.asarray(self.mu22, dtype=float))
        n = mu20.size
        d = int(round((np.sqrt(8 * n + 1) - 1) / 2))
        if d * (d + 1) // 2 != n or mu22.shape != (n, n):
            raise ValueError(f"inconsistent moment shapes: mu20 {mu20.shape}, mu22 {mu22.shape}")
        g = np.empty((n + 1, n + 1))
        g[0, 0] = 1.0
        g[0, 1:] = g[1:, 0] = mu20
        g[1:, 1:] = mu22
        for name, value in (
            ("mu20", mu20),
            ("mu22", mu22),
            ("quartic_diag", np.asarray(self.quartic_diag, dtype=float).reshape(d)),
            ("hessian_at_zero", np.asarray(self.hessian_at_zero, dtype=float).reshape(d, d)),
            ("gamma", g),
            ("one_vector", one_vector(d)),
        ):
            object.__setattr__(self, name, _frozen(value))

    @property
    def d(self) -> int:
        return self.quartic_diag.size

    @property
    def mu02(self) -> np.ndarray:
        return self.mu20.reshape(-1, 1)

    @property
    def det_gamma(self) -> float:
        return float(np.linalg.det(self.gamma))


def spectral_moments(model: CovarianceModel, *, require_standardized: bool = True) -> SpectralMoments:
    """Second- and fourth-order spectral moments in the vectorized order.

    ``mu20[p] = Cov(f(0), d2f(0)_p)`` and ``mu22[p, q] = Cov(d2f(0)_p, d2f(0)_q)``,
    i.e. second and fourth derivatives of ``C`` at the origin.
    """
    if require_standardized and not model.is_standardized():
        err = np.max(np.abs(model.hessian_at_zero() + np.eye(model.d)))
        raise NotStandardizedError(
            f"Hessian of C at 0 differs from -I by {err:.3g} (> {STANDARDIZED_TOL:g}); call standardize() first"
        )
    hess = model.hessian_at_zero()
    T = model.fourth_at_zero()
    pairs = vech_pairs(model.d)
    mu20 = np.array([hess[i, j] for i, j in pairs])
    mu22 = np.array([[T[i, j, k, l] for k, l in pairs] for i, j in pairs])
    quartic = np.array([T[i, i, i, i] for i in range(model.d)])
    return SpectralMoments(mu20, mu22, quartic, hess)


# -- affine standardization --------------------------------------------------


@dataclass(frozen=True, eq=False)
class AffineStandardization:
    """Coordinate change ``s = Sigma^{1/2} t`` with ``Sigma = -Hess C~(0)``.

    Raw and standardized integrals are related by
    ``int_T e^{sigma f~(t)} dt = |Sigma|^{-1/2} int_{Sigma^{1/2} T} e^{sigma f(s)} ds``,
    so ``measure_factor = |Sigma|^{-1/2}`` is the Jacobian multiplying the
    standardized integral.
    """

    sigma_half: np.ndarray
    measure_factor: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_half", _frozen(self.sigma_half))

    def standardized_problem(self, domain_measure: float, b: float) -> tuple[float, float]:
        """Map ``(mes(T), b)`` of the raw problem to the standardized one."""
        return domain_measure / self.measure_factor, b / self.measure_factor

    def to_standard(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.sigma_half


def standardize(raw: CovarianceModel) -> tuple[CovarianceModel, AffineStandardization]:
    sigma = -raw.hessian_at_zero()
    sigma = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sigma)
    if not np.all(np.isfinite(evals)) or evals.min() <= 1e-12 * max(1.0, evals.max()):
        raise KernelError("Hessian of C at 0 is singular or not negative definite")
    half = (evecs * np.sqrt(evals)) @ evecs.T
    inv_half = (evecs / np.sqrt(evals)) @ evecs.T
    # C(s) = C~(Sigma^{-1/2} s) has scale L Sigma^{-1/2}, an orthogonal matrix
    model = CovarianceModel(raw.family, raw.scale @ inv_half, raw.alpha)
    factor = float(np.prod(evals) ** -0.5)
    return model, AffineStandardization(half, factor)


# -- joint law of (f(0), d2f(0), df(0), f(t_1..t_m)) -------------------------


def joint_covariance(model: CovarianceModel, points=()) -> np.ndarray:
    """Covariance of ``(f(0), d2f(0), df(0), f(t_1), ..., f(t_m))``.

    Blocks follow the order above; ``d2f`` uses the vectorized pair order.
    """
    d = model.d
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    m = pts.shape[0]
    pairs = vech_pairs(d)
    n2 = len(pairs)
    size = 1 + n2 + d + m
    out = np.zeros((size, size))
    hess0 = model.hessian_at_zero()
    T = model.fourth_at_zero()
    i2 = slice(1, 1 + n2)
    i1 = slice(1 + n2, 1 + n2 + d)
    it = slice(1 + n2 + d, size)

    out[0, 0] = 1.0
    out[0, i2] = [hess0[i, j] for i, j in pairs]
    out[i2, i2] = [[T[i, j, k, l] for k, l in pairs] for i, j in pairs]
    out[i1, i1] = -hess0
    if m:
        out[0, it] = model(pts)
        hess = model.hessian(pts)
        out[i2, it] = np.array([hess[:, i, j] for i, j in pairs])
        out[i1, it] = -model.gradient(pts).T
        out[it, it] = model.gram(pts)
    upper = np.triu(out, 1)
    return np.triu(out) + upper.T


def joint_covariance_indexes(d: int) -> dict[str, slice]:
    n2 = d * (d + 1) // 2
    return {"f0": slice(0, 1), "d2f0": slice(1, 1 + n2), "df0": slice(1 + n2, 1 + n2 + d)}


__all__ = [
    "AffineStandardization",
    "CovarianceModel",
    "KernelError",
    "NotStandardizedError",
    "RAT_QUAD",
    "SQ_EXP",
    "SpectralMoments",
    "covariance_eval",
    "joint_covariance",
    "one_vector",
    "rat_quad",
    "rat_quad_min_alpha",
    "spectral_moments",
    "sq_exp",
    "standardize",
    "unvech",
    "vech",
    "vech_pairs",
]

