"""Dense reference solvers for desk-scale verification.

Nothing here reuses the sparse assembly or the rotated-frame machinery:
element matrices are rebuilt in plain loops, boundary conditions are
imposed through an explicit reduced basis, and the friction problem is
minimised by projected subgradient descent. The functions are meant
for meshes with at most a few hundred velocity unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MAX_DOFS = 200


def _element_geometry(points):
    """Area and basis gradients of one triangle from the 3x3 Vandermonde."""
    V = np.column_stack([np.ones(3), points])
    coeffs = np.linalg.inv(V)  # column i holds (a, b, c) of phi_i = a + b x + c y
    area = 0.5 * abs(np.linalg.det(V))
    return area, coeffs[1:, :].T  # (3, 2): gradient of phi_i in row i


def _strain_rows(grads):
    # rows: e11, e22, e12 acting on (ux0, uy0, ux1, uy1, ux2, uy2)
    B = np.zeros((3, 6))
    for i, (gx, gy) in enumerate(grads):
        B[0, 2 * i] = gx
        B[1, 2 * i + 1] = gy
        B[2, 2 * i] = 0.5 * gy
        B[2, 2 * i + 1] = 0.5 * gx
    return B


def elasticity_matrix(mesh, lame_mu, lame_lambda):
    """Dense Cartesian matrix of ``int sigma(u) : eps(v)``.

    ``sigma = 2 mu eps + lambda tr(eps) I``.
    """
    n = 2 * mesh.n_vertices
    K = np.zeros((n, n))
    for tri in mesh.triangles:
        area, grads = _element_geometry(mesh.vertices[tri])
        B = _strain_rows(grads)
        e11, e22, e12 = B
        trace = e11 + e22
        Ke = 2 * lame_mu * (np.outer(e11, e11) + np.outer(e22, e22) + 2 * np.outer(e12, e12))
        Ke += lame_lambda * np.outer(trace, trace)
        dofs = np.ravel([[2 * v, 2 * v + 1] for v in tri])
        K[np.ix_(dofs, dofs)] += area * Ke
    return K


def divergence_rows(mesh):
    """Dense (nt, 2 nv) divergence matrix and element areas."""
    D = np.zeros((mesh.n_triangles, 2 * mesh.n_vertices))
    areas = np.zeros(mesh.n_triangles)
    for k, tri in enumerate(mesh.triangles):
        area, grads = _element_geometry(mesh.vertices[tri])
        areas[k] = area
        for i, v in enumerate(tri):
            D[k, 2 * v] = grads[i, 0]
            D[k, 2 * v + 1] = grads[i, 1]
    return D, areas


def load_vector(mesh, force):
    """Dense Cartesian load with the force sampled once per element."""
    b = np.zeros(2 * mesh.n_vertices)
    for tri in mesh.triangles:
        pts = mesh.vertices[tri]
        area, _ = _element_geometry(pts)
        c = pts.mean(axis=0)
        if force is None:
            fval = np.zeros(2)
        elif callable(force):
            fval = np.asarray(force(c[None, :]), dtype=float).reshape(2)
        else:
            fval = np.asarray(force, dtype=float)
        for v in tri:
            b[2 * v:2 * v + 2] += area * fval / 3.0
    return b


def friction_geometry(mesh):
    """Nodes, unit tangents and lumped weights on the friction boundary.

    Recomputed from the facets: each facet's outward normal comes from the
    position of the opposite vertex of its triangle.
    """
    from .mesh import FRICTION

    facets = mesh.facets[mesh.facet_tags == FRICTION]
    acc = {}
    for a, b in facets:
        tri = next(t for t in mesh.triangles if a in t and b in t)
        c = next(v for v in tri if v != a and v != b)
        pa, pb, pc = mesh.vertices[[a, b, c]]
        t = pb - pa
        length = np.hypot(*t)
        nrm = np.array([t[1], -t[0]]) / length
        if nrm @ (pc - pa) > 0:
            nrm = -nrm
        for v in (a, b):
            s, w = acc.get(v, (np.zeros(2), 0.0))
            acc[v] = (s + nrm, w + 0.5 * length)
    nodes = np.array(sorted(acc), dtype=np.int64)
    tangents = np.zeros((len(nodes), 2))
    weights = np.zeros(len(nodes))
    for i, v in enumerate(nodes):
        s, w = acc[v]
        nrm = s / np.linalg.norm(s)
        tangents[i] = (-nrm[1], nrm[0])
        weights[i] = w
    return nodes, tangents, weights


def reduced_basis(mesh):
    """Columns spanning velocities that vanish on the Dirichlet part and are
    tangential on the friction part; also returns, per friction node, the
    reduced index of its tangential unknown (-1 when pinned)."""
    from .mesh import DIRICHLET

    pinned = set(np.unique(mesh.facets[mesh.facet_tags == DIRICHLET]).tolist())
    nodes, tangents, _ = friction_geometry(mesh)
    slip = {int(v): tangents[i] for i, v in enumerate(nodes) if int(v) not in pinned}
    cols = []
    for v in range(mesh.n_vertices):
        if v in pinned:
            continue
        if v in slip:
            col = np.zeros(2 * mesh.n_vertices)
            col[2 * v:2 * v + 2] = slip[v]
            cols.append(col)
        else:
            for c in range(2):
                col = np.zeros(2 * mesh.n_vertices)
                col[2 * v + c] = 1.0
                cols.append(col)
    T = np.array(cols).T if cols else np.zeros((2 * mesh.n_vertices, 0))
    trace_index = np.full(len(nodes), -1)
    for i, v in enumerate(nodes):
        if int(v) in slip:
            trace_index[i] = int(np.flatnonzero(np.abs(T[2 * v:2 * v + 2]).sum(axis=0) > 0)[0])
    return T, trace_index


@dataclass
class DenseProblem:
    """Reduced, dense form of the frozen-pressure friction problem."""

    stiffness: np.ndarray  # reduced matrix of the viscous form
    div: np.ndarray  # (nt, m) reduced divergence rows
    areas: np.ndarray
    load: np.ndarray  # reduced F_p
    trace_index: np.ndarray  # per friction node: reduced index or -1
    weights: np.ndarray
    xi: np.ndarray
    epsilon: float
    basis: np.ndarray  # (2 nv, m) Cartesian columns

    @property
    def n(self):
        return len(self.load)

    def cartesian(self, v):
        return (self.basis @ v).reshape(-1, 2)


def build_dense_problem(mesh, force=None, nu=1.0, xi=0.1, epsilon=np.inf, pressure=None):
    T, trace_index = reduced_basis(mesh)
    if T.shape[1] > MAX_DOFS:
        raise ConfigurationError(f"oracle is desk-scale only: {T.shape[1]} unknowns > {MAX_DOFS}")
    K = elasticity_matrix(mesh, nu / 2.0, 0.0)
    D, areas = divergence_rows(mesh)
    F = load_vector(mesh, force)
    if pressure is not None:
        F = F + D.T @ (areas * np.asarray(pressure, dtype=float))
    _, _, weights = friction_geometry(mesh)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), weights.shape).copy()
    A = T.T @ K @ T
    return DenseProblem(0.5 * (A + A.T), D @ T, areas, T.T @ F, trace_index, weights, xi, float(epsilon), T)


def _friction_terms(prob, v):
    active = prob.trace_index >= 0
    vt = np.zeros(len(prob.weights))
    vt[active] = v[prob.trace_index[active]]
    return vt, active


def objective(prob, v):
    """Discrete energy ``1/2 v^T A v - F^T v + sum w xi |v_tau|``."""
    v = np.asarray(v, dtype=float)
    vt, _ = _friction_terms(prob, v)
    return float(0.5 * v @ prob.stiffness @ v - prob.load @ v + prob.weights @ (prob.xi * np.abs(vt)))


def subgradient(prob, v):
    g = prob.stiffness @ v - prob.load
    vt, active = _friction_terms(prob, v)
    idx = prob.trace_index[active]
    np.add.at(g, idx, (prob.weights * prob.xi * np.sign(vt))[active])
    return g


class SlabProjector:
    """Euclidean projection onto ``{v : |d_K . v| <= eps for all K}``.

    Dykstra's method specialised to slabs, i.e. cyclic coordinate ascent
    on the dual. The dual variables are kept between calls so nearby
    inputs converge in a few sweeps.
    """

    def __init__(self, rows, epsilon, tol=1e-12, feas_tol=1e-12, max_sweeps=100000):
        self.rows = np.asarray(rows, dtype=float)
        self.norms2 = np.einsum("ij,ij->i", self.rows, self.rows)
        self.keep = self.norms2 > 0
        self.eps = epsilon
        self.tol = tol
        self.feas_tol = feas_tol
        self.max_sweeps = max_sweeps
        self.dual = np.zeros(len(self.rows))

    def __call__(self, y):
        if not np.isfinite(self.eps):
            return np.array(y, dtype=float)
        rows, n2, eps = self.rows, self.norms2, self.eps
        dual = self.dual
        v = y - rows.T @ dual
        for _ in range(self.max_sweeps):
            v_start = v.copy()
            for k in np.flatnonzero(self.keep):
                d = rows[k]
                # remove slab k's correction, project, store the new one
                w = v + dual[k] * d
                s = d @ w
                new = 0.0
                if s > eps:
                    new = (s - eps) / n2[k]
                elif s < -eps:
                    new = (s + eps) / n2[k]
                v = w - new * d
                dual[k] = new
            # v alone can stall while the duals still drift along the
            # null space of the rows, so stop only at a KKT point: v
            # feasible and every nonzero dual on an active slab
            if np.max(np.abs(v - v_start)) < self.tol and self._kkt_gap(v) <= self.feas_tol:
                break
        return v

    def _kkt_gap(self, v):
        s = self.rows @ v
        gap = np.maximum(np.abs(s) - self.eps, 0.0)
        on = self.dual != 0
        gap[on] = np.maximum(gap[on], np.abs(s[on] - np.sign(self.dual[on]) * self.eps))
        return float(gap.max()) if len(gap) else 0.0


@dataclass
class OracleResult:
    v: np.ndarray
    energy: float
    checkpoints: list = field(default_factory=list)  # (step, best energy)


def oracle_solve(prob, steps=5000, step0=None, plateau=None, checkpoint_every=500, callback=None):
    """Projected subgradient minimisation of :func:`objective`.

    Step ``k`` has length ``step0 / (1 + k / plateau)``: roughly constant
    for the first ``plateau`` iterations, then diminishing like ``1/k``.
    ``step0`` defaults to ``1 / lambda_max`` of the stiffness; ``plateau``
    to ten times its condition number. Every iterate is projected onto
    the divergence slabs; the best iterate seen is returned.
    ``callback(k, v)`` sees every projected iterate.
    """
    if prob.n == 0:
        return OracleResult(np.zeros(0), 0.0, [(0, 0.0)])
    evals = np.linalg.eigvalsh(prob.stiffness)
    if evals[0] <= 0:
        raise ConfigurationError("reduced stiffness is not positive definite")
    step0 = 1.0 / evals[-1] if step0 is None else step0
    plateau = 10.0 * evals[-1] / evals[0] if plateau is None else plateau
    project = SlabProjector(prob.div, prob.epsilon)
    v = project(np.zeros(prob.n))
    best_v, best_e = v.copy(), objective(prob, v)
    checkpoints = [(0, best_e)]
    for k in range(steps):
        v = project(v - step0 / (1.0 + k / plateau) * subgradient(prob, v))
        if callback is not None:
            callback(k + 1, v)
        e = objective(prob, v)
        if e < best_e:
            best_v, best_e = v.copy(), e
        if (k + 1) % checkpoint_every == 0:
            checkpoints.append((k + 1, best_e))
    return OracleResult(best_v, best_e, checkpoints)


def saddle_point_solve(mesh, force=None, nu=1.0):
    """Mixed P1-P0 Stokes solve with no-slip walls, pressure mean zero.

    Returns (Cartesian velocity (nv, 2), cell pressure). Spurious pressure
    modes make the block system singular, so it is solved in the least
    squares sense; the velocity is unique.
    """
    from .mesh import DIRICHLET

    closed = mesh.retagged(DIRICHLET)
    T, _ = reduced_basis(closed)
    K = T.T @ elasticity_matrix(closed, nu / 2.0, 0.0) @ T
    D, areas = divergence_rows(closed)
    G = areas[:, None] * (D @ T)  # (q, div v) = q^T G v
    F = T.T @ load_vector(closed, force)
    m, nt = K.shape[0], len(areas)
    S = np.block([[K, -G.T], [-G, np.zeros((nt, nt))]])
    rhs = np.concatenate([F, np.zeros(nt)])
    sol = np.linalg.lstsq(S, rhs, rcond=None)[0]
    u, p = sol[:m], sol[m:]
    p = p - areas @ p / areas.sum()
    return (T @ u).reshape(-1, 2), p
