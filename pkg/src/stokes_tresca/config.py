"""Solver parameters."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigurationError

LAMBDA_STEP_MODES = ("clamp", "normalised")
PRESSURE_UPDATES = ("uzawa", "ascent")


@dataclass(frozen=True)
class SolverConfig:
    """Every tolerance, penalty and iteration cap used by the solvers.

    ``xi`` is the friction bound, either one number or one value per
    friction-boundary frame. With ``epsilon_schedule`` on, ``epsilon``
    is the initial width and outer iteration ``n`` uses ``epsilon / n``.

    ``pressure_update`` picks the sign of the outer pressure step:
    ``uzawa`` (default) moves the pressure against the divergence,
    ``ascent`` adds it instead (kept for comparison; it does not settle).
    """

    nu: float = 1.0
    rho: float = 1.0
    epsilon: float = 1e-3
    epsilon_schedule: bool = False
    xi: float | np.ndarray = 0.1
    tau_p: float = 1.0
    pressure_update: str = "uzawa"
    inner_tol: float = 1e-8
    outer_tol: float = 1e-6
    div_tol: float = 1e-6
    max_inner: int = 5000
    max_outer: int = 200
    lambda_step_mode: str = "clamp"
    cg_tol: float = 1e-10
    cg_maxit: int | None = None
    warm_start: bool = True

    def __post_init__(self):
        for name in ("nu", "rho", "tau_p", "inner_tol", "outer_tol", "div_tol", "cg_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be > 0, got {value}")
        if not self.epsilon >= 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon_schedule and not self.epsilon > 0:
            raise ConfigurationError("epsilon_schedule requires epsilon > 0")
        xi = np.asarray(self.xi, dtype=float)
        if np.any(~np.isfinite(xi)) or np.any(xi < 0):
            raise ConfigurationError("xi must be >= 0")
        for name in ("max_inner", "max_outer"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.cg_tol >= 1:
            raise ConfigurationError(f"cg_tol must be < 1, got {self.cg_tol}")
        if self.lambda_step_mode not in LAMBDA_STEP_MODES:
            raise ConfigurationError(f"lambda_step_mode must be one of {LAMBDA_STEP_MODES}, got {self.lambda_step_mode!r}")
        if self.pressure_update not in PRESSURE_UPDATES:
            raise ConfigurationError(f"pressure_update must be one of {PRESSURE_UPDATES}, got {self.pressure_update!r}")

    def epsilon_at(self, n):
        """Divergence width for outer iteration ``n`` (1-based)."""
        return self.epsilon / n if self.epsilon_schedule else self.epsilon

    def xi_values(self, n_frames):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim == 0:
            return np.full(n_frames, float(xi))
        if xi.shape != (n_frames,):
            raise ConfigurationError(f"xi has {xi.size} values but the mesh has {n_frames} friction nodes")
        return xi

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}
