"""Box domains and the inner/outer panel covers of a domain.

Panels are closed cubes of side ``2 eps`` on the lattice
``origin + 2 eps k + [0, 2 eps]^d``.  With the default ``anchor="corner"`` the
origin is the lower corner of the domain's bounding box, so a box whose sides
are multiples of ``2 eps`` is tiled exactly.  ``anchor="centered"`` puts panel
``k`` at ``2 eps k + (-eps, eps)^d``.  The field is homogeneous, so the choice
only moves the lattice relative to the boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .asymptotics import (
    constant_H,
    log_tail_formula,
    panel_epsilon,
    solve_u,
    solve_u_log,
)
from .kernel import CovarianceModel, spectral_moments

ANCHORS = ("corner", "centered")


def as_boxes(domain) -> np.ndarray:
    """Normalize a domain to an array of shape ``(n_boxes, d, 2)``.

    Accepts one box as ``[[lo, hi], ...]`` (one pair per axis) or a list of
    such boxes.
    """
    arr = np.asarray(domain, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("domain must be [[lo, hi], ...] per axis, or a list of such boxes")
    if not np.all(np.isfinite(arr)):
        raise ValueError("domain has non-finite bounds")
    if np.any(arr[..., 1] < arr[..., 0]):
        raise ValueError("box with hi < lo")
    return arr


def _cells(boxes: np.ndarray, within: np.ndarray | None = None):
    """Elementary cells of the arrangement of box edges (optionally clipped)."""
    d = boxes.shape[1]
    axes = []
    for a in range(d):
        cuts = np.unique(boxes[:, a, :])
        if within is not None:
            lo, hi = within[a]
            cuts = np.unique(np.concatenate([[lo, hi], cuts[(cuts > lo) & (cuts < hi)]]))
        axes.append(cuts)
    for idx in itertools.product(*(range(len(c) - 1) for c in axes)):
        lo = np.array([axes[a][i] for a, i in enumerate(idx)])
        hi = np.array([axes[a][i + 1] for a, i in enumerate(idx)])
        yield lo, hi


def _inside_some_box(point: np.ndarray, boxes: np.ndarray) -> bool:
    return bool(np.any(np.all((boxes[:, :, 0] <= point) & (point <= boxes[:, :, 1]), axis=1)))


def domain_measure(domain) -> float:
    """Lebesgue measure of a finite union of (possibly overlapping) boxes."""
    boxes = as_boxes(domain)
    total = 0.0
    for lo, hi in _cells(boxes):
        if _inside_some_box(0.5 * (lo + hi), boxes):
            total += float(np.prod(hi - lo))
    return total


def bounding_box(domain) -> np.ndarray:
    boxes = as_boxes(domain)
    return np.stack([boxes[:, :, 0].min(axis=0), boxes[:, :, 1].max(axis=0)], axis=-1)


@dataclass(frozen=True, eq=False)
class PanelCover:
    epsilon: float
    kappa: float
    delta: float
    u: float
    origin: np.ndarray
    inner_indices: np.ndarray
    outer_indices: np.ndarray
    domain: np.ndarray

    @property
    def d(self) -> int:
        return self.domain.shape[1]

    @property
    def panel_measure(self) -> float:
        return (2.0 * self.epsilon) ** self.d

    @property
    def inner_measure(self) -> float:
        return len(self.inner_indices) * self.panel_measure

    @property
    def outer_measure(self) -> float:
        return len(self.outer_indices) * self.panel_measure

    def panel_box(self, k) -> np.ndarray:
        lo = self.origin + 2.0 * self.epsilon * np.asarray(k, dtype=float)
        return np.stack([lo, lo + 2.0 * self.epsilon], axis=-1)

    def panels(self, which: str = "outer") -> list[np.ndarray]:
        idx = {"outer": self.outer_indices, "inner": self.inner_indices}[which]
        return [self.panel_box(k) for k in idx]


def build_cover(
    domain,
    u: float,
    kappa: float = 1.0,
    delta: float = 0.1,
    *,
    anchor: str = "corner",
    origin=None,
) -> PanelCover:
    """Inner cover (panels inside the closed domain) and outer cover (panels meeting it).

    A closed panel counts as inner when it lies in the closed domain; an
    open panel counts as outer when it meets the closed domain.
    """
    boxes = as_boxes(domain)
    if domain_measure(boxes) <= 0:
        raise ValueError("domain is empty (zero measure)")
    if not u > 1:
        raise ValueError(f"u must exceed 1, got {u}")
    eps = panel_epsilon(u, kappa, delta)
    side = 2.0 * eps
    bbox = bounding_box(boxes)
    d = boxes.shape[1]
    if origin is not None:
        origin = np.asarray(origin, dtype=float).reshape(d)
    elif anchor == "corner":
        origin = bbox[:, 0].copy()
    elif anchor == "centered":
        origin = np.full(d, -eps)
    else:
        raise ValueError(f"unknown anchor {anchor!r}; expected one of {ANCHORS}")

    tol = 1e-9 * side
    k_lo = np.floor((bbox[:, 0] - origin) / side).astype(int) - 1
    k_hi = np.ceil((bbox[:, 1] - origin) / side).astype(int) + 1
    inner, outer = [], []
    for k in itertools.product(*(range(a, b + 1) for a, b in zip(k_lo, k_hi))):
        lo = origin + side * np.array(k, dtype=float)
        hi = lo + side
        meets = np.any(np.all((lo < boxes[:, :, 1] - tol) & (boxes[:, :, 0] + tol < hi), axis=1))
        if not meets:
            continue
        outer.append(k)
        if _panel_inside(lo, hi, boxes, tol):
            inner.append(k)
    as_idx = lambda ks: np.array(ks, dtype=int).reshape(-1, d)  # noqa: E731
    return PanelCover(eps, kappa, delta, u, origin, as_idx(inner), as_idx(outer), boxes)


def _panel_inside(lo: np.ndarray, hi: np.ndarray, boxes: np.ndarray, tol: float) -> bool:
    # fast path: one box contains the panel
    if np.any(np.all((boxes[:, :, 0] <= lo + tol) & (hi - tol <= boxes[:, :, 1]), axis=1)):
        return True
    if len(boxes) == 1:
        return False
    # otherwise every elementary cell of the clipped arrangement must be covered
    clipped = np.stack([lo, hi], axis=-1)
    for clo, chi in _cells(boxes, within=clipped):
        if np.any(chi - clo <= tol):
            continue
        if not _inside_some_box(0.5 * (clo + chi), boxes):
            return False
    return True


def sum_panel_approx(cover: PanelCover, model: CovarianceModel, sigma: float, b: float) -> tuple[float, float]:
    """Per-panel approximation times the inner / outer panel counts."""
    u = solve_u(b, sigma, model.d)
    H = constant_H(spectral_moments(model), sigma)
    per_panel = np.exp(log_tail_formula(H, cover.panel_measure, u, model.d))
    return len(cover.inner_indices) * per_panel, len(cover.outer_indices) * per_panel


def sum_panel_log_approx(cover: PanelCover, model: CovarianceModel, sigma: float, log_b: float) -> tuple[float, float]:
    """Logs of ``sum_panel_approx``, for levels where the probabilities underflow."""
    u = solve_u_log(log_b, sigma, model.d)
    log_panel = log_tail_formula(constant_H(spectral_moments(model), sigma), cover.panel_measure, u, model.d)
    with np.errstate(divide="ignore"):
        return (
            float(np.log(len(cover.inner_indices)) + log_panel),
            float(np.log(len(cover.outer_indices)) + log_panel),
        )
