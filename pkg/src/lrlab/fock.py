"""Canonical anticommutation algebra on a finite mode set.

Modes are ordered site-major (all spin species of site 0, then site 1, ...)
and mode m occupies bit m of the Fock basis index, so basis state k has
mode m filled iff (k >> m) & 1.  Ladder operators carry the sign string of
the ordered-product convention

    |n> = (a*_0)^{n_0} (a*_1)^{n_1} ... |vac>,

which makes them explicit signed-permutation matrices: no tensor-product
assembly is needed, and the matrices stay sparse.

The conditional expectation onto the subalgebra of a site subset X is the
orthogonal projection in the normalized Hilbert-Schmidt inner product.  It
is computed by rotating the X modes to the front with the fermionic
mode-reordering unitary (a signed permutation of basis states), taking the
normalized partial trace over the remaining factor, and rotating back.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .lattice import LatticeGraph, site_set
from .linalg import op_norm

__all__ = [
    "FockContext",
    "LocalOperator",
    "build_context",
    "ladder",
    "number_operator",
    "parity_class",
    "conditional_expectation",
    "support_of",
    "car_table_residual",
]

DEFAULT_DIM_CAP = 4096
PARITY_TOL = 1e-10


def _dim_cap() -> int:
    return int(os.environ.get("LRLAB_DIM_CAP", DEFAULT_DIM_CAP))


@dataclass(frozen=True)
class FockContext:
    """Fock-space bookkeeping for a lattice with ``spins`` species per site."""

    graph: LatticeGraph
    spins: int
    n_modes: int
    dim: int
    _ladder_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def mode_index(self, site: int, spin: int = 0) -> int:
        if not 0 <= spin < self.spins:
            raise ValueError(f"spin {spin} out of range")
        if not 0 <= site < self.graph.n_sites:
            raise ValueError(f"site {site} out of range")
        return site * self.spins + spin

    def modes_of_sites(self, sites) -> tuple:
        out = []
        for s in site_set(self.graph, sites):
            out.extend(s * self.spins + i for i in range(self.spins))
        return tuple(out)

    def occupations(self) -> np.ndarray:
        """(dim, n_modes) array of basis-state occupation bits."""
        k = np.arange(self.dim, dtype=np.int64)
        return ((k[:, None] >> np.arange(self.n_modes)) & 1).astype(np.int8)

    def parity_diagonal(self) -> np.ndarray:
        """Diagonal of the total particle-number parity operator."""
        k = np.arange(self.dim, dtype=np.int64)
        return 1 - 2 * (np.bitwise_count(k).astype(np.int64) & 1)

    def ladder_sparse(self, mode: int, dagger: bool = False):
        """Sparse ladder matrix for one mode, cached."""
        if not 0 <= mode < self.n_modes:
            raise ValueError(f"mode {mode} out of range")
        key = (mode, bool(dagger))
        if key not in self._ladder_cache:
            self._ladder_cache[key] = self._build_ladder(mode, dagger)
        return self._ladder_cache[key]

    def _build_ladder(self, mode: int, dagger: bool):
        bit = 1 << mode
        k = np.arange(self.dim, dtype=np.int64)
        occupied = (k & bit) != 0
        cols = k[~occupied] if dagger else k[occupied]
        rows = cols ^ bit
        # sign string of the modes below ``mode`` in the ordered product
        below = np.bitwise_count(cols & (bit - 1)).astype(np.int64)
        vals = (1.0 - 2.0 * (below & 1)).astype(np.complex128)
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.dim, self.dim)
        )


def build_context(graph: LatticeGraph, spins: int = 1) -> FockContext:
    if spins < 1:
        raise ValueError("need at least one spin species per site")
    n_modes = spins * graph.n_sites
    cap = _dim_cap()
    dim = 2**n_modes
    if dim > cap:
        raise ValueError(
            f"Fock dimension 2^{n_modes} = {dim} exceeds the cap {cap}; "
            "raise LRLAB_DIM_CAP to override"
        )
    return FockContext(graph, spins, n_modes, dim)


def parity_class(ctx: FockContext, matrix: np.ndarray, tol: float = PARITY_TOL) -> str:
    """'even', 'odd', or 'mixed' under conjugation by total parity."""
    matrix = np.asarray(matrix)
    p = ctx.parity_diagonal()
    twisted = (p[:, None] * matrix) * p[None, :]
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if np.abs(twisted - matrix).max(initial=0.0) <= tol * scale:
        return "even"
    if np.abs(twisted + matrix).max(initial=0.0) <= tol * scale:
        return "odd"
    return "mixed"


class LocalOperator:
    """Dense operator on the full Fock space with a declared support.

    The support is the set of sites whose modes the operator may involve;
    arithmetic unions supports and refreshes the parity tag from the
    resulting matrix.
    """

    def __init__(self, ctx: FockContext, matrix, support, parity: str | None = None):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.shape != (ctx.dim, ctx.dim):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match Fock dimension {ctx.dim}"
            )
        self.ctx = ctx
        self.matrix = matrix
        self.support = site_set(ctx.graph, support)
        self.parity = parity if parity is not None else parity_class(ctx, matrix)

    def norm(self) -> float:
        return op_norm(self.matrix)

    def adjoint(self) -> "LocalOperator":
        return LocalOperator(self.ctx, self.matrix.conj().T, self.support, self.parity)

    def is_self_adjoint(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.matrix).max(initial=0.0)))
        return bool(
            np.abs(self.matrix - self.matrix.conj().T).max(initial=0.0) <= tol * scale
        )

    def _join(self, other, matrix):
        support = sorted(set(self.support) | set(other.support))
        return LocalOperator(self.ctx, matrix, support)

    def __add__(self, other):
        return self._join(other, self.matrix + other.matrix)

    def __sub__(self, other):
        return self._join(other, self.matrix - other.matrix)

    def __matmul__(self, other):
        return self._join(other, self.matrix @ other.matrix)

    def __mul__(self, scalar):
        return LocalOperator(self.ctx, scalar * self.matrix, self.support, self.parity)

    __rmul__ = __mul__

    def __repr__(self):
        return (
            f"LocalOperator(support={self.support}, parity={self.parity}, "
            f"dim={self.ctx.dim})"
        )


def ladder(ctx: FockContext, site: int, spin: int = 0, dagger: bool = False) -> LocalOperator:
    """Annihilation (or creation) operator as a dense LocalOperator.

    For large contexts prefer ``ctx.ladder_sparse``; this densifies.
    """
    mode = ctx.mode_index(site, spin)
    mat = ctx.ladder_sparse(mode, dagger).toarray()
    return LocalOperator(ctx, mat, (site,), parity="odd")


def number_operator(ctx: FockContext, sites=None) -> LocalOperator:
    """Total occupation of all modes attached to ``sites`` (default: all)."""
    if sites is None:
        sites = ctx.graph.vertices
    sites = site_set(ctx.graph, sites)
    modes = ctx.modes_of_sites(sites)
    k = np.arange(ctx.dim, dtype=np.int64)
    diag = np.zeros(ctx.dim)
    for m in modes:
        diag += ((k >> m) & 1).astype(np.float64)
    return LocalOperator(ctx, np.diag(diag.astype(np.complex128)), sites, parity="even")


# ---------------------------------------------------------------------------
# mode reordering and the conditional expectation


def _mode_permutation(ctx: FockContext, front_modes) -> tuple[np.ndarray, np.ndarray]:
    """Basis relabeling that moves ``front_modes`` to the low bit positions.

    Returns (index, sign): the reordered-product basis vector m equals
    sign[m] times the standard basis vector index[m].  The sign counts the
    transpositions needed to sort the occupied creation operators back into
    ascending mode order.
    """
    front = list(front_modes)
    rest = [m for m in range(ctx.n_modes) if m not in front]
    order = np.array(front + rest, dtype=np.int64)

    occ = ctx.occupations()  # occupations in the *new* labeling, bit i of m
    index = occ.astype(np.int64) @ (1 << order)

    inversions = np.zeros(ctx.dim, dtype=np.int64)
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if order[i] > order[j]:
                inversions += occ[:, i].astype(np.int64) * occ[:, j]
    sign = 1.0 - 2.0 * (inversions & 1)
    return index, sign


def conditional_expectation(ctx: FockContext, sites, matrix) -> np.ndarray:
    """Hilbert-Schmidt projection onto the subalgebra of the given sites.

    This is the unique conditional expectation compatible with the
    normalized trace: unital, completely positive, norm-nonincreasing, and
    multiplicative over the subalgebra's own factors.
    """
    if isinstance(matrix, LocalOperator):
        matrix = matrix.matrix
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.shape != (ctx.dim, ctx.dim):
        raise ValueError("matrix does not live on this context's Fock space")
    sites = site_set(ctx.graph, sites)
    front = ctx.modes_of_sites(sites)
    if len(front) == ctx.n_modes:
        return matrix.copy()
    if not front:
        return np.eye(ctx.dim, dtype=np.complex128) * (np.trace(matrix) / ctx.dim)

    index, sign = _mode_permutation(ctx, front)
    lo = 2 ** len(front)
    hi = ctx.dim // lo

    # rotate: entry (m, m') of the reordered matrix
    rot = (sign[:, None] * sign[None, :]) * matrix[np.ix_(index, index)]
    rot4 = rot.reshape(hi, lo, hi, lo)
    block = np.einsum("alam->lm", rot4) / hi
    emb = np.kron(np.eye(hi), block)

    out = np.empty_like(matrix)
    out[np.ix_(index, index)] = (sign[:, None] * sign[None, :]) * emb
    return out


def support_of(ctx: FockContext, matrix, tol: float = 1e-10) -> tuple:
    """Smallest site set whose subalgebra contains the operator (within tol).

    Greedily drops sites whose removal leaves the operator fixed by the
    conditional expectation; distances are normalized Hilbert-Schmidt.
    """
    start = None
    if isinstance(matrix, LocalOperator):
        start = matrix.support
        matrix = matrix.matrix
    matrix = np.asarray(matrix, dtype=np.complex128)
    if start is None:
        start = ctx.graph.vertices
    scale = max(1.0, float(np.linalg.norm(matrix)) / np.sqrt(ctx.dim))

    def fixed_by(candidate):
        proj = conditional_expectation(ctx, candidate, matrix)
        return np.linalg.norm(proj - matrix) / np.sqrt(ctx.dim) <= tol * scale

    keep = list(start)
    if not fixed_by(keep):
        raise ValueError("operator is not supported on its declared site set")
    for s in sorted(start):
        trial = [x for x in keep if x != s]
        if fixed_by(trial):
            keep = trial
    return tuple(keep)


def car_table_residual(ctx: FockContext) -> float:
    """Worst Frobenius deviation over the full anticommutation table.

    Checks {a_i, a_j} = 0, {a*_i, a*_j} = 0 and {a_i, a*_j} = delta_ij
    for every mode pair, using the sparse ladder cache.  The Frobenius
    norm dominates the spectral norm, so a small return value certifies
    the relations in operator norm too.
    """

    def fro(m):
        return float(np.sqrt((np.abs(m.data) ** 2).sum())) if m.nnz else 0.0

    eye = scipy.sparse.identity(ctx.dim, dtype=np.complex128, format="csr")
    worst = 0.0
    for i in range(ctx.n_modes):
        ai = ctx.ladder_sparse(i)
        ai_dag = ctx.ladder_sparse(i, dagger=True)
        for j in range(i, ctx.n_modes):
            aj = ctx.ladder_sparse(j)
            aj_dag = ctx.ladder_sparse(j, dagger=True)
            worst = max(worst, fro(ai @ aj + aj @ ai))
            worst = max(worst, fro(ai_dag @ aj_dag + aj_dag @ ai_dag))
            mixed = ai @ aj_dag + aj_dag @ ai
            if i == j:
                mixed = mixed - eye
            worst = max(worst, fro(mixed))
    return worst
