"""Local-response tests: perturbed families, window tracking, the truncated
flow generator and its Duhamel defect, and the measured decay exponent of
spectral-window expectation values away from the perturbation."""

import numpy as np
import pytest

from lrlab.dynamics import Propagator
from lrlab.flow import WeightFunction, gap_analysis, hastings_generator
from lrlab.fock import (
    LocalOperator,
    build_context,
    ladder,
    number_operator,
    parity_class,
    support_of,
)
from lrlab.lattice import build_lattice
from lrlab.linalg import op_norm
from lrlab.lppl import (
    localized_generator,
    lppl_measure,
    perturbed_atomic_chain,
    perturbed_family,
)

# --------------------------------------------------------------------------
# family construction


def test_perturbed_family_validation():
    g = build_lattice("path", 3)
    ctx = build_context(g)
    phi = perturbed_atomic_chain  # silence linters; real phi below
    from lrlab.interactions import Interaction

    phi = Interaction(ctx)
    n0 = number_operator(ctx, [0])
    fam = perturbed_family(phi, 0.3 * n0)
    assert fam.interaction.derivative(0.0).terms[(0,)].norm() == pytest.approx(0.3)
    with pytest.raises(ValueError, match="self-adjoint"):
        perturbed_family(phi, 1j * n0)
    with pytest.raises(ValueError, match="even"):
        a0 = ladder(ctx, 0)
        perturbed_family(phi, a0 + a0.adjoint())
    with pytest.raises(TypeError):
        perturbed_family(phi, n0.matrix)


def test_chain_window_tracks_one_orbital():
    family, window = perturbed_atomic_chain(n=6)
    for s in np.linspace(0.0, 1.0, 5):
        rep = gap_analysis(family.hamiltonian(float(s)), *window)
        assert rep.rank == 1
        assert rep.gap > 0.3
    p0 = gap_analysis(family.hamiltonian(0.0), *window).projector
    p1 = gap_analysis(family.hamiltonian(1.0), *window).projector
    assert op_norm(p1 - p0) > 1e-4  # the orbital genuinely moves
    with pytest.raises(ValueError, match="level crossing"):
        perturbed_atomic_chain(strength=0.9, field_step=1.0)


# --------------------------------------------------------------------------
# truncated generator


def chain_pieces(n=5):
    family, window = perturbed_atomic_chain(n=n)
    ctx = family.ctx
    w_op = family.interaction.derivative(0.0).terms[(0,)]
    gaps = [gap_analysis(family.hamiltonian(float(s)), *window).gap for s in np.linspace(0, 1, 5)]
    weight = WeightFunction(0.95 * min(gaps), 0.0)
    return family, window, ctx, w_op, weight


def test_localized_generator_structure():
    family, window, ctx, w_op, weight = chain_pieces()
    h = family.hamiltonian(0.3)
    g_full, defect0 = localized_generator(ctx, h, w_op, weight, ())
    assert defect0 == 0.0
    assert op_norm(g_full - hastings_generator(h, w_op, weight)) == 0.0

    g_loc, defect = localized_generator(ctx, h, w_op, weight, (4,))
    assert defect > 0.0
    assert parity_class(ctx, g_loc) == "even"
    assert 4 not in support_of(ctx, g_loc)
    # truncated flow acts like the identity on observables at the region
    a = number_operator(ctx, [4])
    assert op_norm(g_loc @ a.matrix - a.matrix @ g_loc) <= 1e-12


def test_truncation_defect_decays_with_distance():
    family, window, ctx, w_op, weight = chain_pieces()
    h = family.hamiltonian(0.5)
    defects = [localized_generator(ctx, h, w_op, weight, (y,))[1] for y in (2, 3, 4)]
    assert defects[0] > defects[1] > defects[2] > 0.0


def test_truncated_flow_duhamel_bound():
    family, window, ctx, w_op, weight = chain_pieces()
    y = (4,)

    def d_full(s):
        return hastings_generator(family.hamiltonian(s), w_op, weight)

    def d_loc(s):
        return localized_generator(ctx, family.hamiltonian(s), w_op, weight, y)[0]

    s_grid = np.linspace(0.0, 1.0, 17)
    sup_defect = max(
        localized_generator(ctx, family.hamiltonian(float(s)), w_op, weight, y)[1]
        for s in s_grid
    )
    u = Propagator(d_full).u(1.0, 0.0)
    v = Propagator(d_loc).u(1.0, 0.0)
    assert op_norm(u - v) <= sup_defect * (1.0 + 1e-3) + 1e-9

    # the truncated flow fixes observables on the region exactly
    a = number_operator(ctx, [4]).matrix
    assert op_norm(v.conj().T @ a @ v - a) <= 1e-10

    # the full flow transports the window projector
    p0 = gap_analysis(family.hamiltonian(0.0), *window).projector
    p1 = gap_analysis(family.hamiltonian(1.0), *window).projector
    assert op_norm(p1 - u @ p0 @ u.conj().T) <= 1e-5


# --------------------------------------------------------------------------
# measured decay


def test_lppl_decay_slope():
    family, window = perturbed_atomic_chain(n=8, alpha_tb=4.0)
    report = lppl_measure(family, window)
    assert report.rank == 1
    assert report.gaps.min() > 0.3
    assert len(report.fit_distances) >= 3
    assert report.slope is not None
    # threshold: alpha_effective - dim - 1 with alpha_effective = alpha_tb - dim
    assert report.slope <= -1.0
    assert report.tail_monotone
    assert np.all(report.differences <= 2.0 * report.rank + 1e-9)


def test_lppl_zero_perturbation_control():
    family, window = perturbed_atomic_chain(n=6)
    ctx = family.ctx
    zero = LocalOperator(ctx, np.zeros((ctx.dim, ctx.dim), dtype=np.complex128), (0,))
    control = perturbed_family(family.interaction.sample(0.0), zero, onsite=family.onsite)
    report = lppl_measure(control, window)
    assert report.slope is None
    assert np.all(report.differences == 0.0)
    assert any("floor" in f for f in report.findings)


def test_lppl_identity_probe_and_scalar_shift():
    family, window = perturbed_atomic_chain(n=6)
    ctx = family.ctx
    eye = LocalOperator(ctx, np.eye(ctx.dim, dtype=np.complex128), ())
    probes = [eye] + [number_operator(ctx, [z]) for z in (2, 3, 4, 5)]
    report = lppl_measure(family, window, probes=probes)
    ident_rows = [r for r in report.per_probe if r["support"] == ()]
    assert ident_rows and ident_rows[0]["difference"] <= 1e-12
    assert ident_rows[0]["distance"] is None

    # adding a multiple of the identity and shifting the window changes nothing
    c = 2.7
    w_op = family.interaction.derivative(0.0).terms[(0,)]
    onsite2 = dict(family.onsite)
    onsite2[0] = onsite2[0] + LocalOperator(ctx, c * np.eye(ctx.dim, dtype=np.complex128), ())
    shifted = perturbed_family(family.interaction.sample(0.0), w_op, onsite=onsite2)
    base = lppl_measure(family, window)
    moved = lppl_measure(shifted, (window[0] + c, window[1] + c))
    assert np.allclose(base.differences, moved.differences, atol=1e-10)
    assert base.rank == moved.rank


def test_lppl_too_few_usable_distances():
    family, window = perturbed_atomic_chain(n=6)
    ctx = family.ctx
    probes = [number_operator(ctx, [z]) for z in (0, 1, 2)]
    with pytest.raises(ValueError, match="usable distances"):
        lppl_measure(family, window, probes=probes)
