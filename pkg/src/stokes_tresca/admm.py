"""Inner ADMM solver for the velocity at frozen pressure.

For a fixed cell pressure ``p`` the velocity minimises

    J(v) + j(v),   J(v) = 1/2 a(v, v) - F(v) - (p, div v),
                   j(v) = sum_i w_i xi_i |v_tau,i|,

subject to ``div v`` in ``[-eps, eps]`` on every element. Two auxiliary
unknowns split the problem: a cell field ``div_aux`` tied to ``div v``
and a boundary trace ``slip_aux`` tied to the tangential velocity. Their
multipliers are ``div_mult`` (cells) and ``traction`` (friction nodes;
the negative of the tangential wall stress). One sweep solves a linear
SPD velocity system, clamps ``div_aux``, soft-thresholds ``slip_aux`` and
takes a dual ascent step on both multipliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ConvergenceError
from .linalg import cg_solve

log = logging.getLogger(__name__)


@dataclass
class AdmmState:
    u: np.ndarray
    div_aux: np.ndarray
    slip_aux: np.ndarray
    traction: np.ndarray
    div_mult: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, disc):
        return cls(
            u=np.zeros(disc.n_dofs),
            div_aux=np.zeros(disc.n_cells),
            slip_aux=np.zeros(disc.n_frames),
            traction=np.zeros(disc.n_frames),
            div_mult=np.zeros(disc.n_cells),
        )

    def copy(self):
        return replace(self, u=self.u.copy(), div_aux=self.div_aux.copy(), slip_aux=self.slip_aux.copy(),
                       traction=self.traction.copy(), div_mult=self.div_mult.copy())


@dataclass
class AdmmReport:
    slip_residual: list = field(default_factory=list)
    div_residual: list = field(default_factory=list)
    velocity_change: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    max_div_aux: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _cfg_eps(cfg, epsilon):
    return cfg.epsilon if epsilon is None else epsilon


def velocity_rhs(disc, state, pressure, rho):
    """Right-hand side of the velocity system, rotated and constrained."""
    b = disc.load_rotated + disc.cell_coupling(pressure + rho * state.div_aux - state.div_mult)
    if disc.n_frames:
        b += disc.boundary_coupling(rho * state.slip_aux - state.traction)
    b[disc.constrained] = 0.0
    return b


def velocity_step(disc, state, pressure, cfg):
    """Minimise the augmented Lagrangian over the velocity."""
    A = disc.velocity_system(cfg.rho)
    b = velocity_rhs(disc, state, pressure, cfg.rho)
    res = cg_solve(A, b, tol=cfg.cg_tol, maxit=cfg.cg_maxit, x0=state.u)
    u = res.x
    u[disc.constrained] = 0.0
    return u


def clamp_divergence(omega, rho, eps):
    """Minimiser of ``rho/2 phi^2 - omega phi`` over ``[-eps, eps]``, elementwise."""
    return np.clip(np.asarray(omega, dtype=float) / rho, -eps, eps)


def divergence_step(disc, state, cfg, epsilon=None):
    """Minimise over the divergence auxiliary given the new velocity.

    ``clamp`` mode returns the exact minimiser of
    ``rho/2 phi^2 - omega phi`` on ``[-eps, eps]`` per element, with
    ``omega = div_mult + rho div(u)``. ``normalised`` mode scales the
    whole field, ``omega / max(rho eps, ||omega||)``; it is kept for
    comparison and does not guarantee feasibility.
    """
    if not cfg.rho > 0:
        raise ConfigurationError(f"rho must be > 0, got {cfg.rho}")
    eps = _cfg_eps(cfg, epsilon)
    omega = state.div_mult + cfg.rho * disc.divergence(state.u)
    if cfg.lambda_step_mode == "normalised":
        return omega / max(cfg.rho * eps, disc.cell_norm(omega))
    return clamp_divergence(omega, cfg.rho, eps)


def shrink(z, xi, rho):
    """Minimiser of ``xi |psi| - z psi + rho/2 psi^2``, elementwise."""
    z = np.asarray(z, dtype=float)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), z.shape)
    theta = np.abs(z)
    out = np.zeros_like(z)
    slide = theta > xi
    out[slide] = (theta[slide] - xi[slide]) / (rho * theta[slide]) * z[slide]
    return out


def slip_step(disc, state, cfg, xi=None):
    """Nodewise soft-thresholding of the tangential velocity."""
    xi = cfg.xi_values(disc.n_frames) if xi is None else xi
    z = state.traction + cfg.rho * disc.tangential(state.u)
    return shrink(z, xi, cfg.rho)


def multiplier_update(disc, state, cfg):
    traction = state.traction + cfg.rho * (disc.tangential(state.u) - state.slip_aux)
    div_mult = state.div_mult + cfg.rho * (disc.divergence(state.u) - state.div_aux)
    return traction, div_mult


def energy(disc, u, pressure, xi, slip=None):
    """J(u) + j at frozen pressure; ``j`` uses ``slip`` when given."""
    smooth = 0.5 * u @ (disc.viscous_rotated @ u) - disc.load_rotated @ u - disc.areas @ (pressure * disc.divergence(u))
    trace = disc.tangential(u) if slip is None else slip
    return float(smooth + disc.weights @ (xi * np.abs(trace)))


def augmented_lagrangian(disc, state, pressure, cfg, epsilon=None):
    """Value of the augmented Lagrangian at ``state`` (inf if infeasible)."""
    eps = _cfg_eps(cfg, epsilon)
    xi = cfg.xi_values(disc.n_frames)
    if np.any(np.abs(state.div_aux) > eps * (1 + 1e-14)):
        return np.inf
    rho = cfg.rho
    ru = disc.tangential(state.u) - state.slip_aux
    rd = disc.divergence(state.u) - state.div_aux
    val = energy(disc, state.u, pressure, xi, slip=state.slip_aux)
    val += disc.weights @ (state.traction * ru) + 0.5 * rho * disc.weights @ (ru * ru)
    val += disc.areas @ (state.div_mult * rd) + 0.5 * rho * disc.areas @ (rd * rd)
    return float(val)


def admm_sweep(disc, state, pressure, cfg, epsilon=None, xi=None):
    """One full ADMM iteration; returns the new state."""
    new = state.copy()
    new.u = velocity_step(disc, state, pressure, cfg)
    new.div_aux = divergence_step(disc, new, cfg, epsilon)
    new.slip_aux = slip_step(disc, new, cfg, xi)
    new.traction, new.div_mult = multiplier_update(disc, new, cfg)
    new.k = state.k + 1
    return new


def run_nisv(disc, pressure, cfg, warm_start=None, epsilon=None):
    """Solve the frozen-pressure velocity problem by ADMM.

    Iterates until the H1 change of the velocity and both constraint
    residuals (tangential slip, divergence) drop below ``cfg.inner_tol``.
    Raises :class:`ConvergenceError` with the report and last state once
    ``cfg.max_inner`` sweeps are used up.
    """
    if not cfg.rho > 0:
        raise ConfigurationError(f"rho must be > 0, got {cfg.rho}")
    eps = _cfg_eps(cfg, epsilon)
    if not eps >= 0:
        raise ConfigurationError(f"epsilon must be >= 0, got {eps}")
    pressure = np.asarray(pressure, dtype=float)
    if pressure.shape != (disc.n_cells,):
        raise ValueError(f"pressure must have length {disc.n_cells}, got {pressure.shape}")
    xi = cfg.xi_values(disc.n_frames)
    state = AdmmState.zeros(disc) if warm_start is None else warm_start.copy()
    state.k = 0
    report = AdmmReport()
    tol = cfg.inner_tol
    for _ in range(cfg.max_inner):
        new = admm_sweep(disc, state, pressure, cfg, eps, xi)
        r1 = disc.boundary_norm(disc.tangential(new.u) - new.slip_aux)
        r2 = disc.cell_norm(disc.divergence(new.u) - new.div_aux)
        du = disc.h1_norm(new.u - state.u)
        report.slip_residual.append(r1)
        report.div_residual.append(r2)
        report.velocity_change.append(du)
        report.energy.append(energy(disc, new.u, pressure, xi))
        report.max_div_aux.append(float(np.abs(new.div_aux).max()) if disc.n_cells else 0.0)
        state = new
        if du < tol and r1 < tol and r2 < tol:
            report.converged = True
            break
    report.iterations = state.k
    if not report.converged:
        raise ConvergenceError(
            f"ADMM did not converge in {cfg.max_inner} iterations "
            f"(du={report.velocity_change[-1]:.2e}, r_slip={report.slip_residual[-1]:.2e}, "
            f"r_div={report.div_residual[-1]:.2e})",
            report=report,
            state=state,
        )
    log.debug("ADMM converged in %d iterations", state.k)
    return state, report
