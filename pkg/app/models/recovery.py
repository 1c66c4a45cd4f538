"""
Recovery Models - Solver settings and Basis Pursuit results
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.image import GrayImage
from app.utils.config import Settings


class SolverConfig(BaseModel):
    """
    ADMM settings for equality-constrained Basis Pursuit.

    Attributes:
        tol_abs: Absolute tolerance on primal/dual residuals and feasibility
        tol_rel: Relative tolerance (scaled by iterate and measurement norms)
        max_iterations: Iteration cap; hitting it yields converged=False
        rho: Initial penalty parameter
        rho_min: Lower clamp for residual balancing
        rho_max: Upper clamp for residual balancing
        balance_ratio: Residual ratio that triggers a penalty change
        balance_factor: Multiplier applied to rho on a change
        polish: Refit on the recovered support by least squares
    """
    model_config = ConfigDict(frozen=True)

    tol_abs: float = Field(default=1e-6, gt=0)
    tol_rel: float = Field(default=1e-6, gt=0)
    max_iterations: int = Field(default=5000, ge=1)
    rho: float = Field(default=1.0, gt=0)
    rho_min: float = Field(default=1e-4, gt=0)
    rho_max: float = Field(default=1e4, gt=0)
    balance_ratio: float = Field(default=10.0, gt=1)
    balance_factor: float = Field(default=2.0, gt=1)
    polish: bool = True

    @model_validator(mode="after")
    def _check_bounds(self) -> "SolverConfig":
        if not self.rho_min <= self.rho <= self.rho_max:
            raise ValueError(f"rho {self.rho} outside [{self.rho_min}, {self.rho_max}]")
        return self

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None) -> "SolverConfig":
        settings = settings or Settings()
        return cls(
            tol_abs=settings.bp_tol_abs,
            tol_rel=settings.bp_tol_rel,
            max_iterations=settings.bp_max_iterations,
        )

    def feasibility_tolerance(self, y_norm: float) -> float:
        return self.tol_abs + self.tol_rel * y_norm


class BpSolution(BaseModel):
    """
    Result of one Basis Pursuit solve.

    objective_trace holds the best-so-far l1 norm of the feasible iterate,
    one entry per iteration, so it never increases.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coeffs: np.ndarray
    residual: float = Field(..., ge=0)
    l1_norm: float = Field(..., ge=0)
    iterations: int = Field(..., ge=0)
    converged: bool
    rho: float = Field(default=1.0, gt=0)
    polished: bool = False
    objective_trace: List[float] = Field(default_factory=list)

    @field_validator("coeffs", mode="before")
    @classmethod
    def _coerce(cls, value):
        array = np.array(value, dtype=np.float64).reshape(-1)
        array.setflags(write=False)
        return array

    @property
    def length(self) -> int:
        return int(self.coeffs.size)


class Reconstruction(BaseModel):
    """Recovered image together with the solve that produced it."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    image: GrayImage
    solution: BpSolution
    seconds: float = Field(default=0.0, ge=0)

    @property
    def converged(self) -> bool:
        return self.solution.converged
