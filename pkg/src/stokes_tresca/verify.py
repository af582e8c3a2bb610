"""Cross-checks of the solvers against independent reference computations.

Each check returns a :class:`CheckResult` holding the measured error and
the tolerance it is held to. ``run_all`` backs the ``verify`` CLI command.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import oracle
from .admm import AdmmState, clamp_divergence, energy, run_nisv, shrink, velocity_step
from .assembly import Discretization, assemble_mass
from .config import SolverConfig
from .mesh import DIRICHLET, FRICTION, generate_rectangle
from .outer import run_nisp


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"[{status}] {self.name}: error={self.error:.3e} tol={self.tol:.1e} ({self.seconds:.2f}s){extra}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result.seconds = time.perf_counter() - t0
        return result

    wrapper.__name__, wrapper.__doc__ = fn.__name__, fn.__doc__
    return wrapper


def grid_argmin(objective, lo, hi, points=100_000):
    """Minimiser of a 1D function by a coarse scan refined once around the best point."""
    grid = np.linspace(lo, hi, points)
    k = int(np.argmin(objective(grid)))
    h = grid[1] - grid[0]
    fine = np.linspace(max(lo, grid[k] - h), min(hi, grid[k] + h), points)
    return float(fine[np.argmin(objective(fine))])


def random_subproblems(draws, seed=0):
    """Random (omega, lambda, u_tau, xi, rho, eps) tuples with eps <= 0.1."""
    rng = np.random.default_rng(seed)
    return [
        dict(
            omega=rng.normal(scale=0.2),
            traction=rng.normal(),
            slip=rng.normal(),
            xi=rng.uniform(0.0, 2.0),
            rho=10.0 ** rng.uniform(-1, 1),
            eps=10.0 ** rng.uniform(-3, -1),
        )
        for _ in range(draws)
    ]


@_timed
def check_subproblems(draws=100, points=100_000, seed=0, tol=1e-6):
    """Closed-form divergence clamp and slip shrinkage vs grid scans."""
    worst = 0.0
    for d in random_subproblems(draws, seed):
        rho, eps, xi = d["rho"], d["eps"], d["xi"]
        omega = d["omega"]
        closed = float(clamp_divergence(np.array([omega]), rho, eps)[0])
        scan = grid_argmin(lambda t: 0.5 * rho * t * t - omega * t, -eps, eps, points)
        worst = max(worst, abs(closed - scan))

        z = d["traction"] + rho * d["slip"]
        closed = float(shrink(np.array([z]), np.array([xi]), rho)[0])
        reach = (abs(z) + xi) / rho + 1.0
        scan = grid_argmin(lambda t: xi * np.abs(t) - z * t + 0.5 * rho * t * t, -reach, reach, points)
        worst = max(worst, abs(closed - scan))
    return CheckResult("subproblem minimisers vs grid scan", worst, tol, detail=f"{draws} draws")


def oracle_problem():
    """2x2 square, friction bottom, force (1, 0), eps=1e-2, xi=0.1."""
    mesh = generate_rectangle(2, 2, tag_rule={"bottom": FRICTION})
    return mesh, (1.0, 0.0), 1e-2, 0.1


@_timed
def check_oracle(steps=5000, energy_tol=1e-4, velocity_tol=1e-3):
    """ADMM energy and velocity vs projected subgradient descent."""
    mesh, force, eps, xi = oracle_problem()
    cfg = SolverConfig(epsilon=eps, xi=xi, inner_tol=1e-10)
    disc = Discretization(mesh, force, cfg.nu)
    p = np.zeros(mesh.n_triangles)
    state, _ = run_nisv(disc, p, cfg)
    e_admm = energy(disc, state.u, p, cfg.xi_values(disc.n_frames), slip=state.slip_aux)
    prob = oracle.build_dense_problem(mesh, force, cfg.nu, xi, eps)
    ref = oracle.oracle_solve(prob, steps=steps)
    rel = abs(e_admm - ref.energy) / max(abs(ref.energy), 1e-300)
    diff = (disc.cartesian(state.u) - prob.cartesian(ref.v)).reshape(-1)
    l2 = float(np.sqrt(diff @ (assemble_mass(mesh) @ diff)))
    err = max(rel / energy_tol, l2 / velocity_tol)
    return CheckResult("ADMM vs oracle energy/velocity", err, 1.0,
                       detail=f"rel_energy={rel:.2e} l2_velocity={l2:.2e} J={ref.energy:.6g}")


@_timed
def check_stick(velocity_tol=1e-6, slip_tol=1e-8):
    """Huge friction bound behaves like a no-slip wall."""
    mesh = generate_rectangle(4, 4, tag_rule={"bottom": FRICTION})
    cfg = SolverConfig(xi=1e6, inner_tol=1e-10)
    p = np.zeros(mesh.n_triangles)
    disc = Discretization(mesh, (1.0, 0.0), cfg.nu)
    state, _ = run_nisv(disc, p, cfg)
    closed = Discretization(mesh.retagged(DIRICHLET), (1.0, 0.0), cfg.nu)
    ref, _ = run_nisv(closed, p, cfg)
    slip = float(np.abs(state.slip_aux).max())
    diff = float(np.abs(disc.cartesian(state.u) - closed.cartesian(ref.u)).max())
    err = max(diff / velocity_tol, slip / slip_tol)
    return CheckResult("stick limit vs no-slip wall", err, 1.0,
                       detail=f"max|slip|={slip:.1e} max|du|={diff:.1e}")


def random_frozen_state(disc, seed=0):
    rng = np.random.default_rng(seed)
    state = AdmmState.zeros(disc)
    state.div_aux = rng.uniform(-1e-3, 1e-3, disc.n_cells)
    state.div_mult = rng.normal(size=disc.n_cells)
    state.slip_aux = rng.normal(size=disc.n_frames)
    state.traction = rng.normal(size=disc.n_frames)
    return state, rng.normal(size=disc.n_cells)


def elasticity_reference(mesh, force, state, pressure, nu, rho):
    """Dense linear-elasticity solve of one velocity step (Lame mu=nu/2, lambda=rho)."""
    K = oracle.elasticity_matrix(mesh, nu / 2.0, rho)
    D, areas = oracle.divergence_rows(mesh)
    b = oracle.load_vector(mesh, force) + D.T @ (areas * (pressure + rho * state.div_aux - state.div_mult))
    nodes, tangents, weights = oracle.friction_geometry(mesh)
    for i, v in enumerate(nodes):
        idx = slice(2 * v, 2 * v + 2)
        K[idx, idx] += rho * weights[i] * np.outer(tangents[i], tangents[i])
        b[idx] += weights[i] * (rho * state.slip_aux[i] - state.traction[i]) * tangents[i]
    T, _ = oracle.reduced_basis(mesh)
    v = np.linalg.solve(T.T @ K @ T, T.T @ b)
    return (T @ v).reshape(-1, 2)


@_timed
def check_elasticity(tol=1e-8, seed=0):
    """One velocity step vs an independently assembled elasticity system."""
    mesh = generate_rectangle(4, 3, 1.0, 0.75, tag_rule={"bottom": FRICTION, "right": FRICTION})
    force = (1.0, -0.5)
    cfg = SolverConfig(rho=2.0, cg_tol=1e-13)
    disc = Discretization(mesh, force, cfg.nu)
    state, p = random_frozen_state(disc, seed)
    u = disc.cartesian(velocity_step(disc, state, p, cfg))
    ref = elasticity_reference(mesh, force, state, p, cfg.nu, cfg.rho)
    err = float(np.abs(u - ref).max() / max(np.abs(ref).max(), 1.0))
    return CheckResult("velocity step vs dense elasticity", err, tol)


def cavity_force(points):
    """Swirling body force for the enclosed-cavity checks."""
    x, y = points[:, 0] - 0.5, points[:, 1] - 0.5
    return np.column_stack([-y + x * x, x + y * y])


@_timed
def check_cavity(n=5, tol=1e-4):
    """Enclosed cavity with shrinking divergence width vs the mixed oracle.

    Below 5x5 cells the P1-P0 pair on this mesh admits only the zero
    divergence-free velocity, so the default is the smallest mesh where
    the comparison is not trivially ``0 == 0``.
    """
    mesh = generate_rectangle(n, n)
    cfg = SolverConfig(epsilon=0.1, epsilon_schedule=True, inner_tol=1e-10, outer_tol=1e-8, max_outer=500)
    res = run_nisp(mesh, cavity_force, cfg)
    u_ref, _ = oracle.saddle_point_solve(mesh, cavity_force, cfg.nu)
    err = float(np.abs(res.velocity - u_ref).max())
    return CheckResult(f"enclosed {n}x{n} cavity vs mixed saddle point", err, tol,
                       detail=f"outer={res.report.iterations} div_l2={res.report.div_l2[-1]:.1e}")


CHECKS = (check_subproblems, check_oracle, check_stick, check_elasticity, check_cavity)


def run_all(checks=CHECKS):
    return [check() for check in checks]
