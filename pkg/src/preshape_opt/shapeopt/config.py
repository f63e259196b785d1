"""Optimization settings."""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace


class Metric(str, enum.Enum):
    LINEAR_ELASTICITY = "LinearElasticity"
    P_LAPLACIAN = "PLaplacian"


class Rhs(str, enum.Enum):
    VANILLA = "Vanilla"
    SHAPE = "Shape"
    SHAPE_VOLUME = "ShapeVolume"
    SHAPE_VOLUME_FREE = "ShapeVolumeFree"
    SMOOTH_ONLY = "SmoothOnly"

    @property
    def uses_shape_tracking(self):
        return self in (Rhs.SHAPE, Rhs.SHAPE_VOLUME, Rhs.SHAPE_VOLUME_FREE)

    @property
    def uses_volume_tracking(self):
        return self in (Rhs.SHAPE_VOLUME, Rhs.SHAPE_VOLUME_FREE, Rhs.SMOOTH_ONLY)

    @property
    def uses_objective(self):
        return self is not Rhs.SMOOTH_ONLY


@dataclass(frozen=True)
class OptConfig:
    """Scalars of the descent. Defaults reproduce the reference experiment."""

    metric: Metric = Metric.LINEAR_ELASTICITY
    rhs: Rhs = Rhs.VANILLA
    alpha_tau: float = 1000.0
    alpha_vol: float = 100.0
    alpha_bnd: float = 250.0
    nu: float = 1e-5
    r1: float = -1000.0
    r2: float = 1000.0
    mu_min: float = 0.05
    mu_max: float = 1.0
    p: float = 6.0
    epsilon: float = 8.0
    tol_rel: float = 1e-3
    tol_abs: float = 1e-5
    tol_obj: float = 5e-4
    max_iters: int = 300
    max_halvings: int = 40
    newton_max: int = 50
    newton_tol: float = 1e-8
    cg_tol: float = 1e-10
    q_shape: float = 1.0
    q_vol: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "rhs", Rhs(self.rhs))
        for name in ("alpha_tau", "alpha_vol", "alpha_bnd", "nu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("tol_rel", "tol_abs", "tol_obj", "newton_tol", "cg_tol", "epsilon",
                     "mu_min", "mu_max", "q_shape", "q_vol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if self.max_iters < 0 or self.max_halvings < 0 or self.newton_max < 1:
            raise ValueError("iteration limits must be non-negative")

    @property
    def weight_tau(self):
        """Effective curve tracking weight in both the load and the line search."""
        return self.alpha_tau if self.rhs.uses_shape_tracking else 0.0

    @property
    def weight_vol(self):
        return self.alpha_vol if self.rhs.uses_volume_tracking else 0.0

    def with_(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
