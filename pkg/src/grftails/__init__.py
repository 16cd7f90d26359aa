"""Tail asymptotics for exponential integrals of smooth Gaussian random fields."""

from .asymptotics import (
    InfeasibleThresholdError,
    InvalidMomentsError,
    TailApproximation,
    b_for_probability,
    constant_H,
    solve_u,
    tail_approx,
    tail_approx_raw,
    u_closed_form,
)
from .fieldsim import FieldGrid, FieldSampler, IllConditionedError, crude_mc, importance_sampling_mc, sup_mc
from .kernel import (
    CovarianceModel,
    KernelError,
    NotStandardizedError,
    SpectralMoments,
    rat_quad,
    spectral_moments,
    sq_exp,
    standardize,
)
from .lognormal import LogNormalPortfolio, one_big_jump_approx, sum_tail_mc
from .partition import PanelCover, build_cover, domain_measure, sum_panel_approx
from .streams import EstimateWithError, Stream

__all__ = [
    "CovarianceModel",
    "EstimateWithError",
    "FieldGrid",
    "FieldSampler",
    "IllConditionedError",
    "InfeasibleThresholdError",
    "InvalidMomentsError",
    "KernelError",
    "LogNormalPortfolio",
    "NotStandardizedError",
    "PanelCover",
    "SpectralMoments",
    "Stream",
    "TailApproximation",
    "b_for_probability",
    "build_cover",
    "constant_H",
    "crude_mc",
    "domain_measure",
    "importance_sampling_mc",
    "one_big_jump_approx",
    "rat_quad",
    "solve_u",
    "spectral_moments",
    "sq_exp",
    "standardize",
    "sum_panel_approx",
    "sum_tail_mc",
    "sup_mc",
    "tail_approx",
    "tail_approx_raw",
    "u_closed_form",
]
