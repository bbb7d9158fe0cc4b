import numpy as np
import pytest
import scipy.sparse as sp

from lwi.numerics import (BlockPreconditioner, DegenerateLeadingCoefficient, NonConvergence,
                          NumericalBlowup, RankDeficiencyAmbiguous, SparseOperator,
                          cubic_roots, eig_dense_complex, eig_residuals, integrate_to_steady,
                          iterative_nullvector, sparse_nullvector)


def test_scalar_decay():
    res = integrate_to_steady(lambda y: -y, [1.0], tol=1e-7)
    assert abs(res.state[0]) < 1e-6


def test_damped_rotation():
    res = integrate_to_steady(lambda y: 1j * y - y, [1.0], tol=1e-7)
    assert abs(res.state[0]) < 1e-6


def test_rotation_with_constant_modulus_converges():
    # a rotating but stationary modulus counts as steady
    res = integrate_to_steady(lambda y: 2j * y, [1.0], tol=1e-7, window=5.0)
    assert abs(abs(res.state[0]) - 1) < 1e-6


def test_stable_linear_system(rng):
    for _ in range(5):
        m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        shift = np.max(np.linalg.eigvals(m).real) + 0.5
        a = m - shift * np.eye(4)
        tol = 1e-7
        res = integrate_to_steady(lambda y: a @ y, rng.normal(size=4), tol=tol)
        assert np.linalg.norm(res.state) < 10 * tol


def test_blowup_and_nonconvergence():
    with pytest.raises(NumericalBlowup):
        integrate_to_steady(lambda y: y, [np.nan])
    with pytest.raises(NonConvergence) as info:
        integrate_to_steady(lambda y: np.ones_like(y), [0.0], max_time=200.0)
    assert info.value.state is not None


def test_eig_examples():
    ev = np.sort_complex(eig_dense_complex(np.diag([1, 2j, -3])))
    assert np.allclose(ev, np.sort_complex(np.array([1, 2j, -3])))
    ev = eig_dense_complex([[0, 1], [-1, 0]])
    assert np.allclose(ev[np.argsort(ev.imag)], [-1j, 1j])


def test_eig_residuals(rng):
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    w, v = eig_dense_complex(a, return_vectors=True)
    assert np.all(eig_residuals(a, w, v) < 1e-10 * np.linalg.norm(a))


def test_cubic_examples():
    r = cubic_roots(1, 0, 0, -1)
    expect = np.exp(2j * np.pi * np.arange(3) / 3)
    assert np.allclose(np.sort_complex(r), np.sort_complex(expect))
    r = cubic_roots(*np.poly([1, 2, 3]))
    assert np.allclose(np.sort(r.real), [1, 2, 3]) and np.allclose(r.imag, 0)
    with pytest.raises(DegenerateLeadingCoefficient):
        cubic_roots(0, 1, 2, 3)


def test_cubic_matches_companion_eig(rng):
    c = rng.normal(size=(10_000, 4)) + 1j * rng.normal(size=(10_000, 4))
    for c3, c2, c1, c0 in c:
        r = np.sort_complex(cubic_roots(c3, c2, c1, c0))
        comp = np.array([[-c2 / c3, -c1 / c3, -c0 / c3], [1, 0, 0], [0, 1, 0]])
        e = np.sort_complex(eig_dense_complex(comp))
        # compare as multisets via matching distance
        d = np.abs(r[:, None] - e[None, :]).min(axis=1)
        assert np.all(d < 1e-8 * max(1.0, np.abs(e).max()))
        scale = np.abs([c3, c2, c1, c0]).max() * max(1.0, np.abs(r).max()) ** 3
        assert np.all(np.abs(np.polyval([c3, c2, c1, c0], r)) < 1e-10 * scale)


def test_sparse_operator_sums_duplicates():
    op = SparseOperator(3)
    op.add([0, 0, 2], [1, 1, 2], [1.0, 2.0, 5.0])
    m = op.finalize().matrix.toarray()
    assert m[0, 1] == 3.0 and m[2, 2] == 5.0 and op.nnz == 2
    with pytest.raises(IndexError):
        SparseOperator(2).add([2], [0], [1.0])
    with pytest.raises(RuntimeError):
        op.add([0], [0], [1.0])


def test_nullvector_explicit_kernel():
    v = sparse_nullvector(sp.diags([0.0, 1.0, 2.0]), [1.0, 0.0, 0.0])
    assert np.allclose(v, [1, 0, 0])


def test_nullvector_two_zero_rows():
    with pytest.raises(RankDeficiencyAmbiguous):
        sparse_nullvector(sp.diags([0.0, 0.0, 2.0]), [1.0, 1.0, 0.0])


def _random_generator(rng, n):
    """Column-stochastic rate matrix: columns sum to zero, unique kernel."""
    m = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.3)
    m += np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    np.fill_diagonal(m, 0)
    m -= np.diag(m.sum(axis=0))
    return sp.csr_matrix(m)


def test_iterative_matches_direct(rng):
    n = 300
    m = _random_generator(rng, n)
    w = np.ones(n)
    direct = sparse_nullvector(m, w)
    labels = np.arange(n) // 40
    it, pre = iterative_nullvector(m, w, labels)
    assert np.allclose(it, direct, atol=1e-10)
    # the same preconditioner serves a perturbed operator
    m2 = m + 0.01 * _random_generator(rng, n)
    v2, _ = iterative_nullvector(m2, w, preconditioner=pre)
    assert np.linalg.norm(m2 @ v2) < 1e-9
    assert isinstance(pre, BlockPreconditioner)


def test_block_preconditioner_is_exact_for_lower_block_triangular(rng):
    n = 60
    a = sp.random(n, n, density=0.2, random_state=1) + 5 * sp.eye(n)
    labels = np.arange(n) // 15
    a = sp.tril(a).tocsr()  # lower triangular, hence lower block triangular
    pre = BlockPreconditioner(a, labels, exact_below=100)
    v = rng.normal(size=n)
    assert np.allclose(a @ pre.solve(v), v)
