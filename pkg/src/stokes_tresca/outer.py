"""Outer fixed-point pressure iteration around the ADMM velocity solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmState, run_nisv
from .assembly import Discretization, element_divergence, project_mean_zero
from .errors import ConvergenceError

log = logging.getLogger(__name__)


@dataclass
class OuterReport:
    du_h1: list = field(default_factory=list)
    dp_l2: list = field(default_factory=list)
    div_l2: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    converged: bool = False
    div_converged: bool = False

    @property
    def iterations(self):
        return len(self.du_h1)

    @property
    def total_inner_iterations(self):
        return int(sum(self.inner_iterations))


@dataclass
class NispResult:
    velocity: np.ndarray  # Cartesian, shape (n_vertices, 2)
    pressure: np.ndarray
    divergence: np.ndarray
    report: OuterReport
    state: AdmmState
    disc: Discretization


def pressure_update(mesh, pressure, u, tau_p=1.0, sign=-1.0):
    """``p + sign * tau_p * P0(div u)`` with ``P0`` the mean-zero projection.

    ``u`` is a Cartesian velocity. ``sign=-1`` is the Uzawa direction,
    ``sign=+1`` the literal fixed-point update.
    """
    return np.asarray(pressure, dtype=float) + sign * tau_p * project_mean_zero(mesh, element_divergence(mesh, u))


def _sign(cfg):
    return -1.0 if cfg.pressure_update == "uzawa" else 1.0


def run_nisp(mesh, force, cfg, pressure0=None, disc=None):
    """Alternate ADMM velocity solves with pressure updates.

    Stops when ``||u^{n+1} - u^n||_1 + ||p^{n+1} - p^n||_0`` falls below
    ``cfg.outer_tol``. ``report.div_converged`` records whether the
    divergence criterion ``||div u||_0 < div_tol`` also held. Raises
    :class:`ConvergenceError` with the report after ``cfg.max_outer``
    outer iterations.
    """
    disc = Discretization(mesh, force, cfg.nu) if disc is None else disc
    p = np.zeros(mesh.n_triangles) if pressure0 is None else np.asarray(pressure0, dtype=float).copy()
    sign = _sign(cfg)
    report = OuterReport()
    state = None
    u_prev = np.zeros(disc.n_dofs)
    for n in range(1, cfg.max_outer + 1):
        eps = cfg.epsilon_at(n)
        warm = state if cfg.warm_start else None
        try:
            state, inner = run_nisv(disc, p, cfg, warm_start=warm, epsilon=eps)
        except ConvergenceError as exc:
            last = exc.state
            partial = NispResult(disc.cartesian(last.u), p, disc.divergence(last.u), report, last, disc)
            raise ConvergenceError(f"outer iteration {n}: {exc}", report=report, state=partial) from exc
        div = disc.divergence(state.u)
        p_new = p + sign * cfg.tau_p * project_mean_zero(mesh, div)
        du = disc.h1_norm(state.u - u_prev)
        dp = disc.cell_norm(p_new - p)
        report.du_h1.append(du)
        report.dp_l2.append(dp)
        report.div_l2.append(disc.cell_norm(div))
        report.inner_iterations.append(inner.iterations)
        report.epsilon.append(eps)
        log.info("outer %d: du=%.3e dp=%.3e div=%.3e inner=%d", n, du, dp, report.div_l2[-1], inner.iterations)
        p, u_prev = p_new, state.u
        if du + dp < cfg.outer_tol:
            report.converged = True
            report.div_converged = report.div_l2[-1] < cfg.div_tol
            break
    result = NispResult(disc.cartesian(state.u), p, disc.divergence(state.u), report, state, disc)
    if not report.converged:
        err = ConvergenceError(
            f"outer iteration did not converge in {cfg.max_outer} iterations "
            f"(last du+dp={report.du_h1[-1] + report.dp_l2[-1]:.2e})",
            report=report,
            state=result,
        )
        raise err
    return result
