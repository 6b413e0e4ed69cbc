import numpy as np
import pytest

from lrlab.dynamics import Propagator, StepperSettings, heisenberg, lr_sweep, propagate
from lrlab.fock import build_context, ladder, number_operator
from lrlab.interactions import Interaction, model
from lrlab.lattice import build_lattice
from lrlab.linalg import expm_hermitian


def random_hermitian(rng, dim):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (m + m.conj().T) / 2


def hop_model(ctx, j=1.0, alpha_tb=2.0):
    return model("long_range_hopping", ctx, J=j, alpha_tb=alpha_tb)


def test_constant_generator_matches_closed_form():
    rng = np.random.default_rng(1)
    h = random_hermitian(rng, 12)
    u, info = propagate(lambda t: h, 0.0, 1.3)
    want = expm_hermitian(h, -1.3j)
    assert np.abs(u - want).max() < 1e-10
    assert info["unitarity"] <= 1e-10


def test_cocycle_and_inversion():
    rng = np.random.default_rng(2)
    ha, hb = random_hermitian(rng, 8), random_hermitian(rng, 8)

    def gen(t):
        return ha + np.sin(t) * hb

    prop = Propagator(gen)
    u20 = prop.u(2.0, 0.0)
    u21 = prop.u(2.0, 1.0)
    u10 = prop.u(1.0, 0.0)
    assert np.linalg.norm(u20 - u21 @ u10, 2) < 1e-8
    assert np.abs(prop.u(0.0, 1.0) - u10.conj().T).max() < 1e-12


def test_rejects_non_selfadjoint_generator():
    bad = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    with pytest.raises(ValueError, match="self-adjoint"):
        propagate(lambda t: bad, 0.0, 1.0)


def test_heisenberg_preserves_norm():
    rng = np.random.default_rng(3)
    h = random_hermitian(rng, 6)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    u, _ = propagate(lambda t: h, 0.0, 0.7)
    evolved = heisenberg(u, a)
    assert np.linalg.norm(evolved, 2) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)


def test_two_mode_hop_commutator_closed_form():
    # H = a*_0 a_1 + a*_1 a_0 on two sites: the occupation commutator
    # oscillates as |sin(2t)| / 2
    ctx = build_context(build_lattice("path", 2))
    phi = Interaction(ctx)
    a0, a1 = ladder(ctx, 0), ladder(ctx, 1)
    phi.add_term((0, 1), a0.adjoint() @ a1 + a1.adjoint() @ a0)
    m = model("interpolation", ctx, phi_a=phi, phi_b=phi)
    times = np.linspace(0.0, 2.0, 9)
    series = lr_sweep(m, number_operator(ctx, [0]), number_operator(ctx, [1]), times)
    want = np.abs(np.sin(2 * times)) / 2
    assert np.abs(series.values - want).max() < 1e-9
    assert series.distance == 1
    assert series.flags == ()


def test_sweep_flags_odd_pair_and_overlap():
    ctx = build_context(build_lattice("path", 3))
    m = hop_model(ctx)
    a0, a2 = ladder(ctx, 0), ladder(ctx, 2)
    series = lr_sweep(m, a0, a2, [0.0, 0.4])
    assert "no-parity-guarantee" in series.flags
    n0 = number_operator(ctx, [0])
    overlap = lr_sweep(m, n0, n0, [0.0])
    assert overlap.distance == 0


def test_sweep_truncation_freezes_distant_pairs():
    # with every term of diameter >= 2 removed, sites 0 and 2 only talk
    # through site 1, so the t^2 short-time response is suppressed
    ctx = build_context(build_lattice("path", 3))
    m = hop_model(ctx, j=0.5)
    n0, n2 = number_operator(ctx, [0]), number_operator(ctx, [2])
    t = [0.0, 0.05]
    full = lr_sweep(m, n0, n2, t)
    cut = lr_sweep(m, n0, n2, t, max_range=2)
    assert cut.values[1] < full.values[1]
    assert cut.values[1] < 1e-3


def test_stepper_is_higher_order():
    # halving the step should cut the error by far more than the factor 4
    # a second-order rule would give
    from lrlab.dynamics import _integrate

    rng = np.random.default_rng(5)
    ha, hb = random_hermitian(rng, 6), random_hermitian(rng, 6)
    gen = lambda t: ha + np.sin(3 * t) * hb
    st = StepperSettings()
    ref = _integrate(gen, 0.0, 1.5, 4096, st)
    errs = [
        np.linalg.norm(_integrate(gen, 0.0, 1.5, n, st) - ref, 2) for n in (16, 32, 64)
    ]
    assert errs[0] / errs[1] > 8.0
    assert errs[1] / errs[2] > 8.0


def test_settings_control_tolerance():
    rng = np.random.default_rng(4)
    h = random_hermitian(rng, 4)
    loose = StepperSettings(tol=1e-6)
    u, info = propagate(lambda t: h + t * np.eye(4), 0.0, 1.0, loose)
    assert info["defect"] <= 1e-6
