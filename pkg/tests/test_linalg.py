import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_tresca.assembly import Discretization
from stokes_tresca.errors import ConvergenceError
from stokes_tresca.linalg import as_csr, cg_solve, dense_solve, spmv, symmetry_defect
from stokes_tresca.mesh import FRICTION, generate_rectangle


def random_spd(n, seed, density=0.3):
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=rng)
    return as_csr(B @ B.T + sp.identity(n))


def test_spmv_identity():
    x = np.arange(5.0)
    np.testing.assert_array_equal(spmv(sp.identity(5, format="csr"), x), x)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        spmv(sp.identity(3, format="csr"), np.ones(4))


def test_spmv_matches_dense_8x8():
    A = random_spd(8, 1)
    x = np.random.default_rng(2).normal(size=8)
    np.testing.assert_allclose(spmv(A, x), A.toarray() @ x, rtol=0, atol=1e-13)


def test_symmetric_bilinear_form():
    A = random_spd(12, 3)
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(2, 12))
    assert abs(x @ spmv(A, y) - y @ spmv(A, x)) <= 1e-12
    assert symmetry_defect(A) <= 1e-15


def test_cg_zero_rhs():
    res = cg_solve(random_spd(6, 0), np.zeros(6))
    assert res.iterations == 0 and np.all(res.x == 0)


def test_cg_identity_one_iteration():
    b = np.arange(1.0, 7.0)
    res = cg_solve(sp.identity(6, format="csr"), b)
    assert res.iterations == 1
    np.testing.assert_allclose(res.x, b, rtol=1e-15)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 200), seed=st.integers(0, 10_000))
def test_cg_matches_dense(n, seed):
    A = random_spd(n, seed, density=min(1.0, 5.0 / n))
    b = np.random.default_rng(seed).normal(size=n)
    res = cg_solve(A, b, tol=1e-12)
    ref = dense_solve(A, b)
    assert np.linalg.norm(res.x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_cg_on_constrained_stokes_matrix():
    mesh = generate_rectangle(2, 2, tag_rule={"bottom": FRICTION})
    disc = Discretization(mesh, (1.0, 0.0))
    A = disc.velocity_system(1.0)
    b = disc.constrain_rhs(disc.load)
    res = cg_solve(A, b)
    assert np.linalg.norm(res.x - dense_solve(A, b)) <= 1e-8


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_cg_error_energy_norm_nonincreasing(seed):
    # PCG minimises the A-norm of the error over growing Krylov spaces,
    # so that quantity can never increase from one iterate to the next.
    n = 60
    A = random_spd(n, seed, density=0.1)
    b = np.random.default_rng(seed + 1).normal(size=n)
    x_star = dense_solve(A, b)
    Ad = A.toarray()
    errors = []
    cg_solve(A, b, tol=1e-12, callback=lambda x: errors.append((x - x_star) @ Ad @ (x - x_star)))
    errors = np.array(errors)
    assert len(errors) > 1
    assert np.all(np.diff(errors) <= 1e-12 * (1 + errors[:-1]))


def test_cg_reports_non_convergence():
    A = random_spd(50, 7, density=0.2)
    with pytest.raises(ConvergenceError) as info:
        cg_solve(A, np.ones(50), tol=1e-14, maxit=2)
    assert info.value.residual > 0


def test_cg_rejects_bad_input():
    with pytest.raises(ValueError):
        cg_solve(sp.identity(3, format="csr"), np.ones(4))
    with pytest.raises(ValueError):
        cg_solve(sp.identity(3, format="csr"), np.ones(3), tol=0.0)
