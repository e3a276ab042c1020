"""SE(3) cumulative B-spline motion bases with adaptive control points."""

from ._se3spline import (
    BranchAmbiguity,
    CannotPrune,
    InvalidArgument,
    MotionBase,
    NumericalFailure,
    ParseError,
    deform_point,
    fit_scene,
    init_base,
    prune_errors,
    se3_exp,
    se3_log,
    soft_opacity,
    synthesize,
)

__all__ = [
    "BranchAmbiguity",
    "CannotPrune",
    "InvalidArgument",
    "MotionBase",
    "NumericalFailure",
    "ParseError",
    "deform_point",
    "fit_scene",
    "init_base",
    "prune_errors",
    "se3_exp",
    "se3_log",
    "soft_opacity",
    "synthesize",
]
