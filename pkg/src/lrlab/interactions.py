"""Interactions: term dictionaries, decay norms, and the model zoo.

An interaction maps finite site sets to even self-adjoint operators.  Its
strength is graded by the weighted norm

    sup_z  sum_{Z containing z}  |Z|^n  ||Phi(Z)||  (diam Z + 1)^alpha,

finite exactly when term norms decay at least like (diam+1)^(-alpha).
Locality estimates consume this norm together with the lattice decay-kernel
norm; the propagation speed they produce is

    v  = 2 e ||F_alpha|| ||Phi||_alpha
    nu = max(v, ||Phi||_{alpha,1}).

Time-dependent families carry a sampler, an optional derivative, and the
points where the time supremum of the norm is attained exactly (linear
families attain it at the interval endpoints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fock import FockContext, LocalOperator, ladder, number_operator
from .lattice import LatticeGraph, set_diameter, site_set

__all__ = [
    "Interaction",
    "TimeDependentInteraction",
    "Model",
    "interaction_norm",
    "time_sup_norm",
    "assemble",
    "lr_velocity",
    "model",
    "random_two_body",
]

SELF_ADJOINT_TOL = 1e-12


class Interaction:
    """Finite collection of even self-adjoint terms keyed by site sets."""

    def __init__(self, ctx: FockContext, terms: dict | None = None):
        self.ctx = ctx
        self.terms: dict[tuple, LocalOperator] = {}
        self._norms: dict[tuple, float] = {}
        if terms:
            for key, op in terms.items():
                self.add_term(key, op)

    def add_term(self, sites, op: LocalOperator):
        key = site_set(self.ctx.graph, sites)
        if not key:
            raise ValueError("interaction terms need a nonempty site set")
        if not set(op.support) <= set(key):
            raise ValueError(f"term support {op.support} escapes its key {key}")
        if op.parity != "even":
            raise ValueError("interaction terms must be parity even")
        if not op.is_self_adjoint(SELF_ADJOINT_TOL):
            raise ValueError("interaction terms must be self-adjoint")
        if key in self.terms:
            self.terms[key] = self.terms[key] + op
            self._norms.pop(key, None)
        else:
            self.terms[key] = op

    def term_norm(self, key) -> float:
        if key not in self._norms:
            self._norms[key] = self.terms[key].norm()
        return self._norms[key]

    def max_term_diameter(self) -> int:
        if not self.terms:
            return 0
        return max(set_diameter(self.ctx.graph, k) for k in self.terms)

    def __add__(self, other: "Interaction") -> "Interaction":
        out = Interaction(self.ctx)
        for key, op in self.terms.items():
            out.add_term(key, op)
        for key, op in other.terms.items():
            out.add_term(key, op)
        return out

    def scale(self, factor) -> "Interaction":
        factor = complex(factor)
        if factor.imag != 0:
            raise ValueError("scale factor must be real")
        out = Interaction(self.ctx)
        for key, op in self.terms.items():
            out.add_term(key, factor.real * op)
        return out

    def __len__(self):
        return len(self.terms)


@dataclass
class TimeDependentInteraction:
    """Interaction-valued path with optional derivative information."""

    sample: Callable[[float], Interaction]
    derivative: Callable[[float], Interaction] | None = None
    interval: tuple = (0.0, 1.0)
    # times where the norm supremum over the interval is attained exactly
    exact_sup_times: tuple = ()

    @classmethod
    def constant(cls, phi: Interaction, interval=(0.0, 1.0)):
        zero = Interaction(phi.ctx)
        return cls(
            sample=lambda t: phi,
            derivative=lambda t: zero,
            interval=tuple(interval),
            exact_sup_times=(interval[0],),
        )


@dataclass
class Model:
    """A named system: interaction path plus a static on-site part."""

    name: str
    ctx: FockContext
    interaction: TimeDependentInteraction
    onsite: dict = field(default_factory=dict)  # site -> LocalOperator
    params: dict = field(default_factory=dict)

    def onsite_matrix(self) -> np.ndarray:
        out = np.zeros((self.ctx.dim, self.ctx.dim), dtype=np.complex128)
        for op in self.onsite.values():
            out = out + op.matrix
        return out

    def hamiltonian(self, t: float, max_range=None) -> np.ndarray:
        h = assemble(self.interaction.sample(t), max_range=max_range)
        return h + self.onsite_matrix()


def interaction_norm(phi: Interaction, alpha: float, weight: int = 0) -> float:
    """sup_z sum_{Z ni z} |Z|^weight ||Phi(Z)|| (diam Z + 1)^alpha."""
    if weight < 0:
        raise ValueError("weight must be a nonnegative integer")
    g = phi.ctx.graph
    per_site = np.zeros(g.n_sites)
    for key in phi.terms:
        d = set_diameter(g, key)
        contrib = len(key) ** weight * phi.term_norm(key) * (d + 1.0) ** alpha
        for z in key:
            per_site[z] += contrib
    return float(per_site.max(initial=0.0))


def time_sup_norm(
    phi_t: TimeDependentInteraction,
    alpha: float,
    weight: int = 0,
    grid_points: int = 101,
) -> float:
    """Supremum of the interaction norm over the interval.

    Sampled on a uniform grid joined with the path's exact-supremum times,
    so linear-in-time families are evaluated exactly.
    """
    t0, t1 = phi_t.interval
    times = set(np.linspace(t0, t1, grid_points)) | set(phi_t.exact_sup_times)
    return max(interaction_norm(phi_t.sample(t), alpha, weight) for t in sorted(times))


def assemble(phi: Interaction, onsite: dict | None = None, max_range=None) -> np.ndarray:
    """Sum of all terms with diameter strictly below ``max_range``.

    ``max_range=None`` keeps everything.  On-site terms are always kept;
    they sit at diameter zero and do not count against the range cut.
    """
    ctx = phi.ctx
    out = np.zeros((ctx.dim, ctx.dim), dtype=np.complex128)
    for key, op in phi.terms.items():
        if max_range is not None and set_diameter(ctx.graph, key) >= max_range:
            continue
        out += op.matrix
    if onsite:
        for op in onsite.values():
            out += op.matrix
    return out


def lr_velocity(
    phi,
    alpha: float,
    f_norm: float | None = None,
    grid_points: int = 101,
) -> tuple[float, float]:
    """Propagation speed pair (v, nu) for an interaction or a path.

    ``f_norm`` overrides the decay-kernel norm (defaults to the exact one
    on the interaction's graph).
    """
    if isinstance(phi, TimeDependentInteraction):
        ctx = phi.sample(phi.interval[0]).ctx
        norm_a = time_sup_norm(phi, alpha, 0, grid_points)
        norm_a1 = time_sup_norm(phi, alpha, 1, grid_points)
    else:
        ctx = phi.ctx
        norm_a = interaction_norm(phi, alpha, 0)
        norm_a1 = interaction_norm(phi, alpha, 1)
    if f_norm is None:
        from .lattice import f_alpha_norm

        f_norm = f_alpha_norm(ctx.graph, alpha, "exact")
    v = 2.0 * math.e * f_norm * norm_a
    return v, max(v, norm_a1)


# ---------------------------------------------------------------------------
# model zoo


def _hop_term(ctx, x, y, coeff, spin=0):
    ax = ladder(ctx, x, spin)
    ay = ladder(ctx, y, spin)
    op = ax.adjoint() @ ay + ay.adjoint() @ ax
    return coeff * op


def _pair_sites(g: LatticeGraph):
    for x in range(g.n_sites):
        for y in range(x + 1, g.n_sites):
            yield x, y


def _site_fields(ctx, mu):
    if np.isscalar(mu):
        fields = [float(mu)] * ctx.graph.n_sites
    else:
        fields = [float(m) for m in mu]
        if len(fields) != ctx.graph.n_sites:
            raise ValueError("one field per site required")
    return {z: fields[z] * number_operator(ctx, [z]) for z in ctx.graph.vertices}


def model(name: str, ctx: FockContext, **params) -> Model:
    """Build a zoo member.

    long_range_hopping:        J, alpha_tb              hop amplitude J/(1+d)^alpha_tb
    long_range_density:        J, alpha_tb              n_x n_y couplings
    atomic_limit:              mu, J, alpha_tb          on-site fields + weak hopping
    interpolation:             phi_a, phi_b[, onsite]   linear path (1-t) a + t b
    local_perturbation:        phi, w[, onsite]         phi + t w, w a LocalOperator
    """
    g = ctx.graph
    if name == "long_range_hopping":
        j, alpha_tb = float(params["J"]), float(params["alpha_tb"])
        phi = Interaction(ctx)
        for x, y in _pair_sites(g):
            c = j / (1.0 + g.distance(x, y)) ** alpha_tb
            phi.add_term((x, y), _hop_term(ctx, x, y, c))
        return Model(name, ctx, TimeDependentInteraction.constant(phi), {}, params)

    if name == "long_range_density":
        j, alpha_tb = float(params["J"]), float(params["alpha_tb"])
        phi = Interaction(ctx)
        for x, y in _pair_sites(g):
            c = j / (1.0 + g.distance(x, y)) ** alpha_tb
            nx = number_operator(ctx, [x])
            ny = number_operator(ctx, [y])
            phi.add_term((x, y), c * (nx @ ny))
        return Model(name, ctx, TimeDependentInteraction.constant(phi), {}, params)

    if name == "atomic_limit":
        onsite = _site_fields(ctx, params["mu"])
        j = float(params.get("J", 0.0))
        alpha_tb = float(params.get("alpha_tb", 4.0))
        phi = Interaction(ctx)
        if j != 0.0:
            for x, y in _pair_sites(g):
                c = j / (1.0 + g.distance(x, y)) ** alpha_tb
                phi.add_term((x, y), _hop_term(ctx, x, y, c))
        return Model(name, ctx, TimeDependentInteraction.constant(phi), onsite, params)

    if name == "interpolation":
        phi_a: Interaction = params["phi_a"]
        phi_b: Interaction = params["phi_b"]
        diff = phi_b + phi_a.scale(-1.0)
        path = TimeDependentInteraction(
            sample=lambda t: phi_a.scale(1.0 - t) + phi_b.scale(t),
            derivative=lambda t: diff,
            interval=(0.0, 1.0),
            exact_sup_times=(0.0, 1.0),
        )
        return Model(name, ctx, path, params.get("onsite", {}), {})

    if name == "local_perturbation":
        phi: Interaction = params["phi"]
        w: LocalOperator = params["w"]
        w_phi = Interaction(ctx, {w.support: w})
        path = TimeDependentInteraction(
            sample=lambda t: phi + w_phi.scale(t),
            derivative=lambda t: w_phi,
            interval=(0.0, 1.0),
            exact_sup_times=(0.0, 1.0),
        )
        return Model(name, ctx, path, params.get("onsite", {}), {})

    raise ValueError(f"unknown model {name!r}")


def random_two_body(
    ctx: FockContext,
    rng: np.random.Generator,
    alpha_tb: float,
    strength: float = 1.0,
    pair_fraction: float = 1.0,
) -> Interaction:
    """Random even two-body interaction with (1+d)^(-alpha_tb) term norms.

    Each kept pair receives a random combination of the eight even
    self-adjoint generators of its two-mode algebra (densities, exchange,
    and pairing quadratures), rescaled to the target norm.
    """
    g = ctx.graph
    phi = Interaction(ctx)
    for x, y in _pair_sites(g):
        if pair_fraction < 1.0 and rng.random() > pair_fraction:
            continue
        ax, ay = ladder(ctx, x), ladder(ctx, y)
        nx, ny = ax.adjoint() @ ax, ay.adjoint() @ ay
        hop = ax.adjoint() @ ay
        pair = ax.adjoint() @ ay.adjoint()
        basis = [
            nx,
            ny,
            nx @ ny,
            hop + hop.adjoint(),
            1j * (hop - hop.adjoint()),
            pair + pair.adjoint(),
            1j * (pair - pair.adjoint()),
        ]
        coeffs = rng.standard_normal(len(basis))
        term = basis[0] * coeffs[0]
        for c, b in zip(coeffs[1:], basis[1:]):
            term = term + c * b
        norm = term.norm()
        if norm < 1e-12:
            continue
        target = strength / (1.0 + g.distance(x, y)) ** alpha_tb
        phi.add_term((x, y), (target / norm) * term)
    return phi
