import itertools

import numpy as np
import pytest

from lrlab.fock import (
    build_context,
    car_table_residual,
    conditional_expectation,
    ladder,
    number_operator,
    parity_class,
    support_of,
)
from lrlab.lattice import build_lattice
from lrlab.linalg import op_norm

TOL = 1e-12

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


def kron_ladder(n_modes, mode):
    """Reference ladder built by explicit tensor products.

    Mode m sits on bit m of the basis index, i.e. on the m-th factor from
    the right; the sign string covers all lower modes.
    """
    factors = [ID2] * (n_modes - 1 - mode) + [SIGMA_MINUS] + [SIGMA_Z] * mode
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def majorana_basis(n_modes, modes):
    """Self-adjoint generator pair per mode, from the reference ladders."""
    out = []
    for m in modes:
        a = kron_ladder(n_modes, m)
        out.append(a + a.conj().T)
        out.append(-1j * (a - a.conj().T))
    return out


def oracle_expectation(ctx, sites, matrix):
    """Projection onto the sites' subalgebra via the orthonormal basis of
    ordered products of Majorana generators (slow, definitionally direct)."""
    gens = majorana_basis(ctx.n_modes, ctx.modes_of_sites(sites))
    dim = ctx.dim
    out = np.zeros((dim, dim), dtype=complex)
    for picks in itertools.product([0, 1], repeat=len(gens)):
        c = np.eye(dim, dtype=complex)
        for g, take in zip(gens, picks):
            if take:
                c = c @ g
        coeff = np.trace(c.conj().T @ matrix) / dim
        out += coeff * c
    return out


def random_matrix(rng, dim):
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


@pytest.fixture
def ctx4():
    return build_context(build_lattice("path", 4))


def test_ladders_match_kron_reference():
    for spins, n_sites in [(1, 5), (2, 3)]:
        ctx = build_context(build_lattice("path", n_sites), spins=spins)
        for m in range(ctx.n_modes):
            got = ctx.ladder_sparse(m).toarray()
            want = kron_ladder(ctx.n_modes, m)
            assert np.array_equal(got, want)
            got_dag = ctx.ladder_sparse(m, dagger=True).toarray()
            assert np.array_equal(got_dag, want.conj().T)


def test_car_relations_hold_exactly(ctx4):
    assert car_table_residual(ctx4) <= TOL


def test_car_relations_with_spin():
    ctx = build_context(build_lattice("ring", 4), spins=2)
    assert car_table_residual(ctx) <= TOL


def test_context_enforces_dimension_cap(monkeypatch):
    g = build_lattice("path", 13)
    with pytest.raises(ValueError, match="cap"):
        build_context(g)
    monkeypatch.setenv("LRLAB_DIM_CAP", str(2**13))
    ctx = build_context(g)
    assert ctx.dim == 2**13


def test_parity_classification(ctx4):
    a0 = ladder(ctx4, 0)
    assert a0.parity == "odd"
    n0 = a0.adjoint() @ a0
    assert n0.parity == "even"
    assert parity_class(ctx4, a0.matrix + n0.matrix) == "mixed"


def test_number_operator_spectrum(ctx4):
    n = number_operator(ctx4)
    evals = np.linalg.eigvalsh(n.matrix)
    assert set(np.round(evals).astype(int)) == set(range(5))
    assert n.parity == "even"
    n1 = number_operator(ctx4, [1])
    assert n1.support == (1,)
    assert op_norm(n1.matrix) == pytest.approx(1.0)


def test_local_operator_arithmetic(ctx4):
    a0, a2 = ladder(ctx4, 0), ladder(ctx4, 2)
    hop = a0.adjoint() @ a2 + a2.adjoint() @ a0
    assert hop.parity == "even"
    assert hop.support == (0, 2)
    assert hop.is_self_adjoint()
    assert (2.0 * hop).norm() == pytest.approx(2 * hop.norm())
    # disjoint odd operators anticommute, so the product is parity-even
    prod = a0 @ a2
    assert prod.parity == "even"


def test_local_operator_shape_check(ctx4):
    from lrlab.fock import LocalOperator

    with pytest.raises(ValueError, match="shape"):
        LocalOperator(ctx4, np.eye(3), (0,))


def test_conditional_expectation_matches_oracle():
    rng = np.random.default_rng(7)
    for n_sites, sites in [(3, (0,)), (3, (1, 2)), (4, (0, 2)), (4, (1,))]:
        ctx = build_context(build_lattice("path", n_sites))
        a = random_matrix(rng, ctx.dim)
        got = conditional_expectation(ctx, sites, a)
        want = oracle_expectation(ctx, sites, a)
        assert np.abs(got - want).max() < 1e-10


def test_conditional_expectation_with_spin_matches_oracle():
    rng = np.random.default_rng(11)
    ctx = build_context(build_lattice("path", 2), spins=2)
    a = random_matrix(rng, ctx.dim)
    got = conditional_expectation(ctx, [1], a)
    want = oracle_expectation(ctx, [1], a)
    assert np.abs(got - want).max() < 1e-10


def test_conditional_expectation_is_projection(ctx4):
    rng = np.random.default_rng(3)
    a = random_matrix(rng, ctx4.dim)
    e1 = conditional_expectation(ctx4, [0, 1], a)
    e2 = conditional_expectation(ctx4, [0, 1], e1)
    assert np.abs(e1 - e2).max() < TOL
    # unital and trace compatible
    eye = np.eye(ctx4.dim)
    assert np.abs(conditional_expectation(ctx4, [0, 1], eye) - eye).max() < TOL
    assert np.trace(e1) == pytest.approx(np.trace(a))


def test_conditional_expectation_composition(ctx4):
    rng = np.random.default_rng(5)
    a = random_matrix(rng, ctx4.dim)
    via_both = conditional_expectation(
        ctx4, [0, 1], conditional_expectation(ctx4, [1, 2], a)
    )
    direct = conditional_expectation(ctx4, [1], a)
    assert np.abs(via_both - direct).max() < 1e-11


def test_conditional_expectation_empty_intersection(ctx4):
    rng = np.random.default_rng(9)
    a = random_matrix(rng, ctx4.dim)
    e = conditional_expectation(ctx4, [], a)
    assert np.abs(e - np.eye(ctx4.dim) * np.trace(a) / ctx4.dim).max() < TOL


def test_conditional_expectation_fixes_subalgebra(ctx4):
    a0, a1 = ladder(ctx4, 0), ladder(ctx4, 1)
    inside = (a0.adjoint() @ a1 + a1.adjoint() @ a0).matrix
    out = conditional_expectation(ctx4, [0, 1], inside)
    assert np.abs(out - inside).max() < TOL
    # odd element of the subalgebra is fixed too
    out_odd = conditional_expectation(ctx4, [0, 1], a0.matrix)
    assert np.abs(out_odd - a0.matrix).max() < TOL


def test_conditional_expectation_kills_outside_excitation(ctx4):
    a3 = ladder(ctx4, 3)
    out = conditional_expectation(ctx4, [0, 1], a3.matrix)
    assert np.abs(out).max() < TOL


def test_support_recovery(ctx4):
    assert support_of(ctx4, np.eye(ctx4.dim)) == ()
    a0, a2 = ladder(ctx4, 0), ladder(ctx4, 2)
    hop = a0.adjoint() @ a2 + a2.adjoint() @ a0
    assert support_of(ctx4, hop) == (0, 2)
    assert support_of(ctx4, number_operator(ctx4, [1])) == (1,)


def test_support_of_rejects_wrong_declaration(ctx4):
    from lrlab.fock import LocalOperator

    a3 = ladder(ctx4, 3)
    lying = LocalOperator(ctx4, a3.matrix, (0,), parity="odd")
    with pytest.raises(ValueError, match="not supported"):
        support_of(ctx4, lying)
