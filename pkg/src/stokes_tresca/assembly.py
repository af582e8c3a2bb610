"""P1 velocity / P0 cell-field operators for the Stokes-Tresca problem.

Velocity vectors are flat arrays of length ``2 * n_vertices`` with the
x and y components of vertex ``i`` at positions ``2i`` and ``2i + 1``.
Cell fields (pressure, divergence, multipliers) hold one value per
triangle; tangential traces hold one value per friction-boundary frame.
All element integrals use one-point quadrature, which is exact for every
P1/P0 integrand below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .linalg import as_csr
from .mesh import boundary_frames


def p1_gradients(mesh):
    """Gradients of the three barycentric basis functions, shape (nt, 3, 2)."""
    v = mesh.vertices[mesh.triangles]
    x, y = v[..., 0], v[..., 1]
    two_area = 2.0 * mesh.element_areas
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / two_area
        grads[:, i, 1] = (x[:, k] - x[:, j]) / two_area
    return grads


def _element_dofs(mesh):
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(-1, 6)


def _scatter(mesh, local):
    """Sum per-element (nt, 6, 6) blocks into a global CSR matrix."""
    dofs = _element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_vertices
    return as_csr(sp.coo_array((local.ravel(), (rows, cols)), shape=(n, n)))


def as_flat(mesh, u):
    u = np.asarray(u, dtype=float)
    if u.shape == (mesh.n_vertices, 2):
        return u.reshape(-1)
    if u.shape == (2 * mesh.n_vertices,):
        return u
    raise ValueError(f"velocity must have shape ({mesh.n_vertices}, 2) or ({2 * mesh.n_vertices},), got {u.shape}")


def interpolate(mesh, field):
    """Nodal values of a vector field given as ``field(points) -> (n, 2)``."""
    return np.asarray(field(mesh.vertices), dtype=float).reshape(-1)


def divergence_operator(mesh):
    """Sparse (nt, 2 nv) map from velocity DOFs to element divergence."""
    g = p1_gradients(mesh)
    vals = g.reshape(mesh.n_triangles, 6)  # (dphi_i/dx, dphi_i/dy) pairs
    rows = np.repeat(np.arange(mesh.n_triangles), 6)
    return as_csr(sp.coo_array((vals.ravel(), (rows, _element_dofs(mesh).ravel())),
                               shape=(mesh.n_triangles, 2 * mesh.n_vertices)))


def assemble_viscous(mesh, nu):
    """Matrix of ``(u, v) -> int nu eps(u) : eps(v)``."""
    if not nu > 0:
        raise ConfigurationError(f"nu must be > 0, got {nu}")
    g = p1_gradients(mesh)
    nt = mesh.n_triangles
    # strain in (e11, e22, e12) components, one row per component
    B = np.zeros((nt, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = 0.5 * g[:, :, 1]
    B[:, 2, 1::2] = 0.5 * g[:, :, 0]
    w = np.array([1.0, 1.0, 2.0])
    local = nu * mesh.element_areas[:, None, None] * np.einsum("eki,k,ekj->eij", B, w, B)
    return _scatter(mesh, local)


def assemble_divdiv(mesh):
    """Matrix of ``(u, v) -> int div(u) div(v)``, i.e. D^T diag(area) D."""
    D = divergence_operator(mesh)
    return as_csr(D.T @ sp.diags_array(mesh.element_areas) @ D)


def assemble_boundary_tangential_mass(mesh, frames=None):
    """Lumped boundary mass on the friction nodes: diag(frame weights)."""
    frames = boundary_frames(mesh) if frames is None else frames
    return sp.diags_array(frames.weights, format="csr") if len(frames) else sp.csr_array((0, 0))


def assemble_load(mesh, f):
    """Load vector of ``v -> int f . v`` with ``f`` sampled at centroids.

    ``f`` is ``None`` (no force), a constant pair, or a callable mapping an
    (n, 2) array of points to an (n, 2) array of force vectors.
    """
    nt = mesh.n_triangles
    if f is None:
        values = np.zeros((nt, 2))
    elif callable(f):
        values = np.asarray(f(mesh.centroids), dtype=float).reshape(nt, 2)
    else:
        values = np.broadcast_to(np.asarray(f, dtype=float), (nt, 2))
    share = (mesh.element_areas / 3.0)[:, None] * values
    out = np.zeros((mesh.n_vertices, 2))
    for i in range(3):
        np.add.at(out, mesh.triangles[:, i], share)
    return out.reshape(-1)


def element_divergence(mesh, u):
    """Exact (elementwise constant) divergence of a P1 velocity."""
    return divergence_operator(mesh) @ as_flat(mesh, u)


def pressure_coupling(mesh, q):
    """Vector whose pairing with ``v`` is ``sum_K area_K q_K div(v)_K``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (mesh.n_triangles,):
        raise ValueError(f"cell field must have length {mesh.n_triangles}, got {q.shape}")
    return divergence_operator(mesh).T @ (mesh.element_areas * q)


def cell_mean(mesh, q):
    return float(mesh.element_areas @ q / mesh.area)


def project_mean_zero(mesh, q):
    """Area-weighted L2 projection onto fields with zero mean."""
    q = np.asarray(q, dtype=float)
    return q - cell_mean(mesh, q)


def tangential_trace_operator(mesh, frames=None):
    """Sparse (n_frames, 2 nv) map ``u -> u(node) . tangent`` at friction nodes."""
    frames = boundary_frames(mesh) if frames is None else frames
    m = len(frames)
    rows = np.repeat(np.arange(m), 2)
    cols = np.stack([2 * frames.nodes, 2 * frames.nodes + 1], axis=1).ravel()
    return as_csr(sp.coo_array((frames.tangents.ravel(), (rows, cols)), shape=(m, 2 * mesh.n_vertices)))


def slip_nodes(mesh, frames):
    """Boolean mask over frames: friction nodes not pinned by a Dirichlet facet."""
    return ~np.isin(frames.nodes, mesh.dirichlet_nodes)


def rotation_matrix(mesh, frames=None):
    """Orthogonal map from the rotated DOF frame to Cartesian DOFs.

    At free friction nodes the DOF pair becomes (normal, tangential)
    components; everywhere else the block is the identity.
    """
    frames = boundary_frames(mesh) if frames is None else frames
    n = 2 * mesh.n_vertices
    R = sp.lil_array((n, n))
    R.setdiag(1.0)
    free = slip_nodes(mesh, frames)
    for node, nrm, tng in zip(frames.nodes[free], frames.normals[free], frames.tangents[free]):
        i = 2 * node
        R[i, i], R[i + 1, i] = nrm
        R[i, i + 1], R[i + 1, i + 1] = tng
    return as_csr(R)


def constrained_dofs(mesh, frames=None):
    """Mask of rotated-frame DOFs fixed to zero (Dirichlet pairs, slip normals)."""
    frames = boundary_frames(mesh) if frames is None else frames
    mask = np.zeros(2 * mesh.n_vertices, dtype=bool)
    d = mesh.dirichlet_nodes
    mask[2 * d] = True
    mask[2 * d + 1] = True
    mask[2 * frames.nodes[slip_nodes(mesh, frames)]] = True
    return mask


@dataclass
class ConstrainedSystem:
    matrix: sp.csr_array
    rhs: np.ndarray
    rotation: sp.csr_array
    constrained: np.ndarray

    def to_cartesian(self, x):
        return self.rotation @ x


def _eliminate(A, mask):
    keep = sp.diags_array((~mask).astype(float))
    out = keep @ A @ keep + sp.diags_array(mask.astype(float))
    return as_csr(out)


def apply_constraints(matrix, rhs, mesh, frames=None):
    """Rotate friction-node DOFs and symmetrically eliminate fixed ones.

    Returns the system in the rotated frame: fixed rows and columns are
    zeroed with a unit diagonal and a zero right-hand side, so the
    solution carries exact zeros there.
    """
    frames = boundary_frames(mesh) if frames is None else frames
    R = rotation_matrix(mesh, frames)
    mask = constrained_dofs(mesh, frames)
    A = _eliminate(as_csr(R.T @ matrix @ R), mask)
    b = R.T @ np.asarray(rhs, dtype=float)
    b[mask] = 0.0
    diag = A.diagonal()
    if np.any(diag[~mask] <= 0):
        raise ConfigurationError("constrained system is singular: a free DOF has no stiffness")
    return ConstrainedSystem(A, b, R, mask)


def _vector_blocks(mesh, scalar):
    local = np.zeros((mesh.n_triangles, 6, 6))
    local[:, 0::2, 0::2] = scalar
    local[:, 1::2, 1::2] = scalar
    return _scatter(mesh, local)


def _scalar_mass(mesh):
    return mesh.element_areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh):
    """Consistent L2 mass matrix of vector P1 fields."""
    return _vector_blocks(mesh, _scalar_mass(mesh))


def assemble_h1_gram(mesh):
    """Gram matrix of the full H1 inner product on vector P1 fields."""
    g = p1_gradients(mesh)
    area = mesh.element_areas
    stiff = area[:, None, None] * np.einsum("eid,ejd->eij", g, g)
    scalar = stiff + _scalar_mass(mesh)
    return _vector_blocks(mesh, scalar)


class Discretization:
    """Operators assembled once per mesh and reused by the solvers.

    Velocities handled here live in the rotated frame produced by
    :func:`apply_constraints`; ``cartesian`` converts back.
    """

    def __init__(self, mesh, force=None, nu=1.0):
        self.mesh = mesh
        self.nu = float(nu)
        self.frames = boundary_frames(mesh)
        self.slip = slip_nodes(mesh, self.frames)
        self.viscous = assemble_viscous(mesh, nu)
        self.divdiv = assemble_divdiv(mesh)
        self.trace_cartesian = tangential_trace_operator(mesh, self.frames)
        self.weights = self.frames.weights
        self.boundary_mass = sp.diags_array(self.weights) if len(self.frames) else sp.csr_array((0, 0))
        self.rotation = rotation_matrix(mesh, self.frames)
        self.constrained = constrained_dofs(mesh, self.frames)
        R, RT = self.rotation, as_csr(self.rotation.T)
        self.div_rotated = as_csr(divergence_operator(mesh) @ R)
        self.div_rotated_T = as_csr(self.div_rotated.T)
        self.trace_rotated = as_csr(self.trace_cartesian @ R)
        self.trace_rotated_T = as_csr(self.trace_rotated.T)
        self.viscous_rotated = as_csr(RT @ self.viscous @ R)
        self.load = assemble_load(mesh, force)
        self.load_rotated = RT @ self.load
        self.h1_gram = assemble_h1_gram(mesh)
        self.h1_gram_rotated = as_csr(RT @ self.h1_gram @ R)
        self.areas = mesh.element_areas
        self._systems = {}

    @property
    def n_dofs(self):
        return 2 * self.mesh.n_vertices

    @property
    def n_cells(self):
        return self.mesh.n_triangles

    @property
    def n_frames(self):
        return len(self.frames)

    def velocity_system(self, rho):
        """Constrained matrix of A + rho divdiv + rho boundary mass (cached)."""
        rho = float(rho)
        if rho not in self._systems:
            T = self.trace_cartesian
            A = self.viscous + rho * self.divdiv
            if self.n_frames:
                A = A + rho * (T.T @ self.boundary_mass @ T)
            system = apply_constraints(A, np.zeros(self.n_dofs), self.mesh, self.frames)
            self._systems[rho] = system.matrix
        return self._systems[rho]

    def constrain_rhs(self, b):
        b = self.rotation.T @ b
        b[self.constrained] = 0.0
        return b

    def cartesian(self, u):
        return (self.rotation @ u).reshape(-1, 2)

    def rotated(self, u_cartesian):
        return self.rotation.T @ as_flat(self.mesh, u_cartesian)

    def divergence(self, u):
        return self.div_rotated @ u

    def tangential(self, u):
        return self.trace_rotated @ u

    def cell_coupling(self, q):
        """Rotated-frame vector pairing ``v -> sum area q div(v)``."""
        return self.div_rotated_T @ (self.areas * q)

    def boundary_coupling(self, t):
        """Rotated-frame vector pairing ``v -> sum weight t v_tau``."""
        return self.trace_rotated_T @ (self.weights * t)

    def cell_norm(self, q):
        return float(np.sqrt(self.areas @ (q * q)))

    def boundary_norm(self, t):
        return float(np.sqrt(self.weights @ (t * t))) if self.n_frames else 0.0

    def h1_norm(self, du):
        return float(np.sqrt(max(du @ (self.h1_gram_rotated @ du), 0.0)))

    def project_mean_zero(self, q):
        return project_mean_zero(self.mesh, q)
