"""Two independent evaluators of diagram values on the discrete torus.

Position engine: grid sum over the internal vertices of
    sign(pi) prod_j gamma(x_j - x_pi(j)) prod_{e} g(x_a - x_b),
weighted by h^{pd}.

Momentum engine: every gamma- and g-factor is Fourier expanded; summing each
internal vertex position produces a momentum-conservation constraint.  The
constraint system is reduced by integer elimination and the remaining free
momenta are summed by tensor contraction.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import opt_einsum as oe

from ..errors import DomainError, InternalError, SizeGuardError
from ..freegas import DiscreteTorusModel
from .graphs import Diagram

MAX_FREE_MOMENTA = 9
MAX_TENSOR_ELEMENTS = 2**27


@functools.lru_cache(maxsize=4096)
def _expression(subscripts: str, shapes: tuple):
    return oe.contract_expression(subscripts, *shapes, optimize="dp")


def _contract(subscripts: str, ops: list):
    # contraction paths are cached: many diagrams share one index structure
    return _expression(subscripts, tuple(o.shape for o in ops))(*ops)


@dataclass(eq=False)
class TorusData:
    """Everything both engines need about a model and a sampled g."""

    model: DiscreteTorusModel
    g: np.ndarray
    gamma: np.ndarray = field(init=False)
    gamma_hat: np.ndarray = field(init=False)
    g_hat: np.ndarray = field(init=False)
    _tables: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        m = self.model
        g = np.asarray(self.g, dtype=float)
        if g.shape != m.shape and g.size != m.n_sites:
            raise DomainError(f"g has shape {g.shape}, expected {m.shape}")
        self.g = g.reshape(m.shape)
        self.gamma = m.gamma_kernel.ravel()
        self.gamma_hat = m.gamma_hat.ravel().astype(complex)
        self.g_hat = m.transform(self.g).ravel()

    @property
    def N(self) -> int:
        return self.model.n_sites

    @property
    def flat_g(self) -> np.ndarray:
        return self.g.ravel()

    def _index_vectors(self) -> np.ndarray:
        if "idx" not in self._tables:
            M, d = self.model.M, self.model.d
            self._tables["idx"] = np.array(list(itertools.product(range(M), repeat=d)), dtype=np.int64).reshape(-1, d)
        return self._tables["idx"]

    def flatten(self, vecs: np.ndarray) -> np.ndarray:
        M, d = self.model.M, self.model.d
        v = np.mod(np.asarray(vecs), M)
        return np.ravel_multi_index(tuple(v[..., a] for a in range(d)), (M,) * d)

    @property
    def sub(self) -> np.ndarray:
        """sub[x, y] = flat index of x - y."""
        if "sub" not in self._tables:
            idx = self._index_vectors()
            self._tables["sub"] = self.flatten(idx[:, None, :] - idx[None, :, :])
        return self._tables["sub"]

    @property
    def add(self) -> np.ndarray:
        if "add" not in self._tables:
            idx = self._index_vectors()
            self._tables["add"] = self.flatten(idx[:, None, :] + idx[None, :, :])
        return self._tables["add"]

    def scaled(self, c: int) -> np.ndarray:
        """Flat index of c * n for every n."""
        key = ("scaled", c)
        if key not in self._tables:
            self._tables[key] = self.flatten(c * self._index_vectors())
        return self._tables[key]

    def difference_matrix(self, which: str) -> np.ndarray:
        key = ("diffmat", which)
        if key not in self._tables:
            vec = self.gamma if which == "gamma" else self.flat_g
            self._tables[key] = vec[self.sub]
        return self._tables[key]


def _external_flat(data: TorusData, external, q: int) -> np.ndarray:
    if q == 0:
        return np.zeros(0, dtype=np.int64)
    if external is None:
        raise DomainError(f"diagram has {q} external vertices but no external points were given")
    pts = np.asarray(external)
    if not np.issubdtype(pts.dtype, np.integer):
        raise DomainError("external points must be integer grid indices")
    pts = pts.reshape(q, data.model.d)
    return data.flatten(pts)


# ---------------------------------------------------------------- position

def value_position(diag: Diagram, data: TorusData, external=None) -> complex:
    """Grid-sum value of a diagram with external points fixed on the grid."""
    q, n = diag.q, diag.graph.n
    ext = _external_flat(data, external, q)
    model = data.model
    if data.N ** min(diag.p, 4) > MAX_TENSOR_ELEMENTS * 16:
        raise SizeGuardError("position sum exceeds the size guard")

    ops, subs = [], []
    scalar = float(diag.sign)
    sym = oe.get_symbol

    def factor(u, w, which):
        nonlocal scalar
        vec = data.gamma if which == "gamma" else data.flat_g
        u_ext, w_ext = u < q, w < q
        if u_ext and w_ext:
            scalar *= vec[data.sub[ext[u], ext[w]]]
        elif u == w:
            scalar *= vec[0]
        elif u_ext:
            ops.append(vec[data.sub[ext[u], :]]); subs.append(sym(w))
        elif w_ext:
            ops.append(vec[data.sub[:, ext[w]]]); subs.append(sym(u))
        else:
            ops.append(data.difference_matrix(which)); subs.append(sym(u) + sym(w))

    for j in range(n):
        factor(j, diag.perm[j], "gamma")
    for a, b in diag.edges:
        factor(a, b, "g")
    total = scalar
    if ops and scalar != 0.0:
        total = scalar * _contract(",".join(subs) + "->", ops)
    return complex(total * model.h ** (model.d * diag.p))


# ---------------------------------------------------------------- momentum

def constraint_matrix(diag: Diagram) -> np.ndarray:
    """Rows: vertices; columns: k_0..k_{n-1} then one q_e per edge.

    Row v holds the coefficients of  k_v - k_{pi^{-1}(v)} + sum_{e=(v,.)} q_e - sum_{e=(.,v)} q_e.
    """
    n = diag.graph.n
    E = len(diag.edges)
    inv = [0] * n
    for j, pj in enumerate(diag.perm):
        inv[pj] = j
    A = np.zeros((n, n + E), dtype=np.int64)
    for v in range(n):
        A[v, v] += 1
        A[v, inv[v]] -= 1
    for e, (a, b) in enumerate(diag.edges):
        A[a, n + e] += 1
        A[b, n + e] -= 1
    return A


def eliminate(A: np.ndarray, M: int) -> tuple[np.ndarray, list[int]]:
    """Integer row reduction modulo M using only unit pivots.

    Returns the reduced rows and pivot columns; raises InternalError when a
    nonzero row cannot be reduced (the constraint system would then not be
    unimodular, which cannot happen for a valid diagram).
    """
    R = np.mod(A.copy(), M)
    R[R > M // 2] -= M
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = next((i for i in range(r, rows) if abs(R[i, c]) == 1), None)
        if piv is None:
            continue
        R[[r, piv]] = R[[piv, r]]
        R[r] *= R[r, c]
        for i in range(rows):
            if i != r and R[i, c] != 0:
                R[i] -= R[i, c] * R[r]
        R = np.mod(R, M)
        R[R > M // 2] -= M
        pivots.append(c)
        r += 1
    if R[r:].any():
        raise InternalError("momentum constraints could not be reduced with unit pivots")
    return R[:r], pivots


@dataclass(frozen=True)
class MomentumPlan:
    free: tuple                 # free column indices
    expressions: dict           # column -> {free column: integer coefficient}
    external_phases: tuple      # per external vertex: {free column: coefficient}


def plan_momentum(diag: Diagram, M: int) -> MomentumPlan:
    A = constraint_matrix(diag)
    q = diag.q
    internal = A[q:]
    if internal.shape[0]:
        R, piv = eliminate(internal, M)
    else:
        R, piv = np.zeros((0, A.shape[1]), dtype=np.int64), []
    free = [c for c in range(A.shape[1]) if c not in piv]
    expr = {c: {c: 1} for c in free}
    for i, c in enumerate(piv):
        expr[c] = {f: int(-R[i, f]) for f in free if R[i, f] != 0}
    phases = []
    for v in range(q):
        comb: dict[int, int] = {}
        for c in range(A.shape[1]):
            if A[v, c]:
                for f, coef in expr[c].items():
                    comb[f] = comb.get(f, 0) + int(A[v, c]) * coef
        phases.append({f: c for f, c in comb.items() if c % M})
    return MomentumPlan(tuple(free), expr, tuple(phases))


def value_momentum(diag: Diagram, data: TorusData, external=None) -> complex:
    """Momentum-space value of a diagram; equals value_position on the same grid."""
    model = data.model
    M, d, N, L = model.M, model.d, data.N, model.L
    q, n = diag.q, diag.graph.n
    E = len(diag.edges)
    ext_pts = None
    if q:
        if external is None:
            raise DomainError(f"diagram has {q} external vertices but no external points were given")
        ext_pts = np.asarray(external).reshape(q, d)
    plan = plan_momentum(diag, M)
    if len(plan.free) > MAX_FREE_MOMENTA:
        raise SizeGuardError(f"{len(plan.free)} free momenta exceed the guard {MAX_FREE_MOMENTA}")
    fidx = {f: i for i, f in enumerate(plan.free)}
    sym = oe.get_symbol
    next_sym = [len(plan.free)]
    ops, subs = [], []
    scalar = complex(diag.sign)
    arangeN = np.arange(N)

    def lift(vec, comb):
        nonlocal scalar
        items = sorted(comb.items())
        if not items:
            scalar *= vec[0]
            return
        if len(items) == 1:
            f, c = items[0]
            ops.append(vec[data.scaled(c)]); subs.append(sym(fidx[f]))
            return
        f0, c0 = items[0]
        cur_sym, cur_map = sym(fidx[f0]), data.scaled(c0)
        for f, c in items[1:-1]:
            if N**3 > MAX_TENSOR_ELEMENTS:
                raise SizeGuardError("adder tensor exceeds the size guard")
            w = sym(next_sym[0]); next_sym[0] += 1
            D = np.zeros((N, N, N))
            ii, jj = np.meshgrid(arangeN, arangeN, indexing="ij")
            D[ii, jj, data.add[cur_map[ii], data.scaled(c)[jj]]] = 1.0
            ops.append(D); subs.append(cur_sym + sym(fidx[f]) + w)
            cur_sym, cur_map = w, arangeN
        f, c = items[-1]
        ii, jj = np.meshgrid(arangeN, arangeN, indexing="ij")
        ops.append(vec[data.add[cur_map[ii], data.scaled(c)[jj]]]); subs.append(cur_sym + sym(fidx[f]))

    for j in range(n):
        lift(data.gamma_hat, plan.expressions[j])
    for e in range(E):
        lift(data.g_hat, plan.expressions[n + e])

    # external phase exp(-i K_v . x_v), rank one in each free momentum
    if q:
        idx = data._index_vectors()
        for f in plan.free:
            phase = np.zeros(N)
            for v in range(q):
                c = plan.external_phases[v].get(f, 0)
                if c:
                    phase = phase + c * (idx @ ext_pts[v])
            if phase.any():
                ops.append(np.exp(-2j * math.pi * phase / M)); subs.append(sym(fidx[f]))

    total = scalar
    if ops and scalar != 0:
        total = scalar * _contract(",".join(subs) + "->", ops)
    return complex(total * L ** (-(E + n - diag.p) * d))


def free_momentum_count(diag: Diagram, M: int) -> int:
    return len(plan_momentum(diag, M).free)
