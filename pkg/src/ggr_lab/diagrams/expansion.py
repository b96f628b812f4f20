"""Truncated GGR series, the convergence criterion and the tail bound."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, SizeGuardError
from ..registry import ConstantRegistry, default_registry
from .engines import TorusData, value_position
from .graphs import (Diagram, allowed_edges, cluster_stats, enumerate_graphs, enumerate_trees,
                     iter_diagrams, make_diagram, permutation_sign)

MAX_CONFIGURATIONS = 2**25


# ---------------------------------------------------------------- W_p^q

def _configurations(data: TorusData, p: int):
    """All internal grid configurations as flat-index arrays, shape (N^p, p)."""
    N = data.N
    if N**p > MAX_CONFIGURATIONS:
        raise SizeGuardError(f"{N}^{p} configurations exceed the guard {MAX_CONFIGURATIONS}")
    if p == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*([np.arange(N)] * p), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _pair_values(vec: np.ndarray, data: TorusData, points: np.ndarray, a: int, b: int) -> np.ndarray:
    return vec[data.sub[points[:, a], points[:, b]]]


def graph_weight(data: TorusData, points: np.ndarray, q: int) -> np.ndarray:
    """W_p^q = sum over G in the graph family of prod_e g_e, by inclusion-exclusion.

    Summing prod(1 + g_e) over the allowed edges among the vertices that are
    not removed, with sign (-1)^{#removed internal vertices}, cancels exactly
    the graphs with an isolated internal vertex.
    """
    n = points.shape[1]
    p = n - q
    edges = allowed_edges(q, p)
    g = data.flat_g
    one_plus = {e: 1.0 + _pair_values(g, data, points, *e) for e in edges}
    total = np.zeros(len(points))
    for r in range(p + 1):
        for removed in itertools.combinations(range(q, n), r):
            rem = set(removed)
            term = np.ones(len(points))
            for e in edges:
                if e[0] not in rem and e[1] not in rem:
                    term = term * one_plus[e]
            total += (-1) ** r * term
    return total


def graph_weight_direct(data: TorusData, points: np.ndarray, q: int) -> np.ndarray:
    """W_p^q by explicit summation over the enumerated graphs (for testing)."""
    from .graphs import enumerate_graphs
    n = points.shape[1]
    g = data.flat_g
    out = np.zeros(len(points))
    for G in enumerate_graphs(q, n - q):
        term = np.ones(len(points))
        for a, b in G.edges:
            term = term * _pair_values(g, data, points, a, b)
        out += term
    return out


def wick_batch(data: TorusData, points: np.ndarray) -> np.ndarray:
    """rho^(n) at a batch of configurations of flat grid indices."""
    if points.shape[1] == 0:
        return np.ones(len(points))
    mat = data.gamma[data.sub[points[:, :, None], points[:, None, :]]]
    return np.linalg.det(mat)


def tree_partition_bound(data: TorusData, points: np.ndarray) -> np.ndarray:
    """Sum over set partitions into blocks of size >= 2 of prod_blocks sum_trees prod |g_e|."""
    n = points.shape[1]
    absg = np.abs(data.flat_g)
    cache: dict = {}

    def block_value(block: tuple) -> np.ndarray:
        if block not in cache:
            acc = np.zeros(len(points))
            for tree in enumerate_trees(len(block), vertices=block):
                term = np.ones(len(points))
                for a, b in tree:
                    term = term * _pair_values(absg, data, points, a, b)
                acc += term
            cache[block] = acc
        return cache[block]

    def partitions(rest: tuple):
        if not rest:
            yield []
            return
        first, others = rest[0], rest[1:]
        for size in range(1, len(others) + 1):
            for mates in itertools.combinations(others, size):
                block = (first,) + mates
                remaining = tuple(v for v in others if v not in mates)
                for tail in partitions(remaining):
                    yield [block] + tail

    total = np.zeros(len(points))
    for part in partitions(tuple(range(n))):
        term = np.ones(len(points))
        for block in part:
            term = term * block_value(block)
        total += term
    return total


def all_diagram_sum(data: TorusData, q: int, p: int, external=None) -> float:
    """Sum of Gamma^q over every diagram in D_p^q, as sum_X W_p^q rho^(p+q)."""
    model = data.model
    ext = np.zeros((0,), dtype=np.int64) if q == 0 else data.flatten(np.asarray(external).reshape(q, model.d))
    inner = _configurations(data, p)
    pts = np.concatenate([np.broadcast_to(ext, (len(inner), q)), inner], axis=1)
    vals = graph_weight(data, pts, q) * wick_batch(data, pts)
    return float(vals.sum()) * model.h ** (model.d * p)


def convergence_lhs(data: TorusData, q: int, p_max: int, external=None) -> list[float]:
    """Terms (1/p!) h^{pd} sum_X |W_p^q| rho^(p+q), p = 0..p_max."""
    model = data.model
    ext = np.zeros((0,), dtype=np.int64) if q == 0 else data.flatten(np.asarray(external).reshape(q, model.d))
    terms = []
    for p in range(p_max + 1):
        if q + p == 0:
            terms.append(1.0)
            continue
        inner = _configurations(data, p)
        pts = np.concatenate([np.broadcast_to(ext, (len(inner), q)), inner], axis=1)
        vals = np.abs(graph_weight(data, pts, q)) * wick_batch(data, pts)
        terms.append(float(vals.sum()) * model.h ** (model.d * p) / math.factorial(p))
    return terms


# ---------------------------------------------------------------- series algebra

def _log_series(a: list[float]) -> list[float]:
    """Coefficients l_p of log(sum_p a_p t^p / p!) = sum_p l_p t^p / p!, with a_0 = 1."""
    n = len(a)
    ell = [0.0] * n
    for m in range(1, n):
        acc = a[m]
        for j in range(1, m):
            acc -= math.comb(m - 1, j - 1) * ell[j] * a[m - j]
        ell[m] = acc
    return ell


def _divide_series(num: list[float], den: list[float]) -> list[float]:
    """Exponential-generating-function quotient num / den, den_0 = 1."""
    n = len(num)
    out = [0.0] * n
    for m in range(n):
        acc = num[m]
        for j in range(1, m + 1):
            acc -= math.comb(m, j) * den[j] * out[m - j]
        out[m] = acc
    return out


def linked_sums_by_cumulants(data: TorusData, p_max: int) -> list[float]:
    """Sum over L_p of Gamma for p = 0..p_max, from the all-diagram sums."""
    a = [1.0] + [all_diagram_sum(data, 0, p) for p in range(1, p_max + 1)]
    return _log_series(a)


def tilde_linked_sums_by_division(data: TorusData, q: int, external, p_max: int) -> list[float]:
    """Sum over tilde-L_p^q of Gamma^q for p = 0..p_max, as a series quotient."""
    num = [all_diagram_sum(data, q, p, external) for p in range(p_max + 1)]
    den = [1.0] + [all_diagram_sum(data, 0, p) for p in range(1, p_max + 1)]
    return _divide_series(num, den)


# ---------------------------------------------------------------- enumerated sums

@dataclass
class ClassSums:
    """Diagram sums split by (p, k, n_g + n_g*) for m external vertices."""
    m: int
    sums: dict = field(default_factory=dict)  # (p, k0, n_g0) -> complex

    def total(self, p: int) -> complex:
        return sum((v for (pp, _, _), v in self.sums.items() if pp == p), 0j)


def _batched_class_sums(data: TorusData, q: int, p: int, external, keep) -> dict:
    """Class sums over all configurations at once.

    For a fixed configuration X the value of (pi, G) factorizes into
    sign(pi) prod_j gamma(x_j - x_pi(j)) times prod_e g_e, so the sum over
    the kept pairs (G, pi) is a masked entry sum of W P^T, where W holds the
    graph products and P the permutation products per configuration.
    """
    model = data.model
    n = q + p
    ext = np.zeros((0,), dtype=np.int64) if q == 0 else data.flatten(np.asarray(external).reshape(q, model.d))
    inner = _configurations(data, p)
    pts = np.concatenate([np.broadcast_to(ext, (len(inner), q)), inner], axis=1)
    gam = data.gamma[data.sub[pts[:, :, None], pts[:, None, :]]]        # (X, n, n)
    perms = list(itertools.permutations(range(n)))
    P = np.empty((len(perms), len(pts)))
    rows = np.arange(n)
    for i, perm in enumerate(perms):
        P[i] = permutation_sign(perm) * np.prod(gam[:, rows, list(perm)], axis=1)
    g = data.flat_g
    pair = {e: g[data.sub[pts[:, e[0]], pts[:, e[1]]]] for e in allowed_edges(q, p)}
    acc: dict = defaultdict(float)
    graphs = enumerate_graphs(q, p)
    chunk = max(1, 2**24 // max(len(pts), 1))
    for start in range(0, len(graphs), chunk):
        block = graphs[start:start + chunk]
        W = np.empty((len(block), len(pts)))
        for i, G in enumerate(block):
            w = np.ones(len(pts))
            for e in G.edges:
                w = w * pair[e]
            W[i] = w
        S = W @ P.T
        for i, G in enumerate(block):
            stats = cluster_stats(G)
            for j, perm in enumerate(perms):
                dg = make_diagram(G, perm, stats)
                if keep(dg):
                    acc[(p, stats.k, stats.n_g + stats.n_g_star)] += S[i, j]
    scale = model.h ** (model.d * p)
    return {key: complex(val * scale) for key, val in acc.items()}


def _filter_predicate(filter):
    if callable(filter):
        return filter
    if filter == "all":
        return lambda dg: True
    if filter == "linked":
        return lambda dg: dg.linked
    if filter in ("tilde_linked", "tilde"):
        return lambda dg: dg.tilde_linked
    raise DomainError(f"unknown diagram filter {filter!r}")


def class_sums(data: TorusData, m: int, p_values, external=None, filter="auto",
               engine: str = "batched") -> ClassSums:
    """Diagram sums per (p, k, n_g + n_g*) class.

    ``engine="batched"`` sums all diagrams of a given p together over the grid
    configurations; ``engine="position"`` evaluates every diagram separately
    with the position engine (slower, used as a cross-check).
    """
    if filter == "auto":
        filter = "linked" if m == 0 else "tilde_linked"
    keep = _filter_predicate(filter)
    out = ClassSums(m)
    for p in p_values:
        if engine == "batched":
            out.sums.update(_batched_class_sums(data, m, p, external, keep))
        elif engine == "position":
            acc: dict = defaultdict(complex)
            for dg in iter_diagrams(m, p, keep):
                s = dg.stats
                acc[(p, s.k, s.n_g + s.n_g_star)] += value_position(dg, data, external)
            out.sums.update(acc)
        else:
            raise DomainError(f"unknown engine {engine!r}")
    return out


def linked_sum(data: TorusData, p: int, engine: str = "batched") -> complex:
    """Sum of Gamma over L_p (no external vertices)."""
    return class_sums(data, 0, [p], engine=engine).total(p)


# ---------------------------------------------------------------- tail bound

def tail_bound(m: int, k0: int, n_g0: int, rho0: float, I_g: float, I_gamma: float,
               L: float, d: int, registry: ConstantRegistry | None = None) -> float:
    """Upper bound on (1/p!) |class sum| for the class (k0, n_g0), p = 2 k0 + n_g0.

    m = 0:  C L^d rho0 (C' rho0 I_g)^{n_g0 + k0} I_gamma^{k0 - 1}
    m > 0:  C_m rho0^m (C' rho0 I_g)^{n_g0 + k0} I_gamma^{k0}
    """
    reg = registry or default_registry()
    if k0 < 0 or n_g0 < 0:
        raise DomainError("k0 and n_g0 must be non-negative")
    if m == 0 and k0 < 1:
        raise DomainError("vacuum diagrams have at least one internal cluster (k0 >= 1)")
    outer = reg[f"tail.outer.{m}"]
    inner = reg[f"tail.inner.{m}"]
    small = inner * rho0 * I_g
    power = n_g0 + k0
    base = small**power if power else 1.0
    if m == 0:
        return outer * L**d * rho0 * base * I_gamma ** (k0 - 1)
    return outer * rho0**m * base * I_gamma**k0


def tail_estimate(m: int, p_min: int, rho0: float, I_g: float, I_gamma: float, L: float, d: int,
                  registry: ConstantRegistry | None = None, with_factorial: bool = True,
                  max_terms: int = 4000) -> float:
    """Sum of tail_bound over every class with p = 2 k0 + n_g0 >= p_min."""
    reg = registry or default_registry()
    x = reg[f"tail.inner.{m}"] * rho0 * I_g
    y = I_gamma
    if x >= 1.0 or x * y >= 1.0:
        return math.inf
    k_start = 1 if m == 0 else 0
    total = 0.0
    for k0 in range(k_start, max_terms):
        n0 = max(0, p_min - 2 * k0)
        if m == 0 and k0 + n0 == 0:
            n0 = 1
        head = tail_bound(m, k0, n0, rho0, I_g, I_gamma, L, d, reg)
        term = head / (1.0 - x)
        total += term
        if k0 > p_min and term < 1e-18 * total:
            break
    return total


def fit_tail_constants(samples, m: int, registry: ConstantRegistry) -> ConstantRegistry:
    """Fit (outer, inner) for the m-external tail bound from measured class sums.

    ``samples`` holds tuples (k0, n_g0, |class sum|/p!, rho0, I_g, I_gamma, L, d).
    The inner constant is the least-squares slope of log(measured/structure)
    against the cluster size n_g0 + k0; the outer constant is then the
    smallest value dominating every sample.
    """
    reg = registry.copy()
    rows = []
    for k0, n0, val, rho0, I_g, I_gamma, L, d in samples:
        if val <= 0:
            continue
        base = L**d * rho0 * (rho0 * I_g) ** (n0 + k0) * I_gamma ** (k0 - 1) if m == 0 else \
            rho0**m * (rho0 * I_g) ** (n0 + k0) * I_gamma**k0
        rows.append((n0 + k0, math.log(val / base)))
    if not rows:
        return reg
    s = np.array([r[0] for r in rows], dtype=float)
    r = np.array([r[1] for r in rows])
    if np.ptp(s) > 0:
        slope = float(np.polyfit(s, r, 1)[0])
        log_inner = max(slope, 0.0)
    else:
        log_inner = 0.0
    log_outer = float(np.max(r - s * log_inner))
    reg.set(f"tail.inner.{m}", math.exp(log_inner), fitted=True)
    reg.set(f"tail.outer.{m}", math.exp(log_outer), fitted=True)
    return reg


# ---------------------------------------------------------------- truncated series

@dataclass(frozen=True)
class SeriesResult:
    terms: tuple          # (1/p!) * sum over the diagram family, p = 0..p_max
    value: float          # truncated series (including any prefactor)
    tail: float           # tail estimate for p > p_max


def zj_expansion(data: TorusData, p_max: int, rho0: float | None = None,
                 registry: ConstantRegistry | None = None, method: str = "diagrams") -> SeriesResult:
    """log(Z_J/Z) truncated at p_max: sum_{p=2}^{p_max} (1/p!) sum_{L_p} Gamma."""
    if method == "diagrams":
        linked = [0.0, 0.0] + [linked_sum(data, p).real for p in range(2, p_max + 1)]
    elif method == "cumulants":
        linked = linked_sums_by_cumulants(data, p_max)
    else:
        raise DomainError(f"unknown method {method!r}")
    terms = tuple(linked[p] / math.factorial(p) if p >= 2 else 0.0 for p in range(p_max + 1))
    model = data.model
    rho0 = model.density if rho0 is None else rho0
    I_g = model.h**model.d * float(np.abs(data.flat_g).sum())
    I_gamma = model.h**model.d * float(np.abs(data.gamma).sum())
    tail = tail_estimate(0, p_max + 1, rho0, I_g, I_gamma, model.L, model.d, registry)
    return SeriesResult(terms, float(sum(terms)), tail)


def rhoJ_expansion(data: TorusData, q: int, external, p_max: int,
                   registry: ConstantRegistry | None = None, method: str = "diagrams") -> SeriesResult:
    """rho_J^(q)(X) = prod f_ij^2 * sum_{p <= p_max} (1/p!) sum_{tilde-L_p^q} Gamma^q."""
    if q < 1 or q > 3:
        raise DomainError("q must be 1, 2 or 3")
    model = data.model
    pts = np.asarray(external).reshape(q, model.d)
    if method == "diagrams":
        cs = class_sums(data, q, range(p_max + 1), pts)
        sums = [cs.total(p).real for p in range(p_max + 1)]
    elif method == "division":
        sums = tilde_linked_sums_by_division(data, q, pts, p_max)
    else:
        raise DomainError(f"unknown method {method!r}")
    terms = tuple(s / math.factorial(p) for p, s in enumerate(sums))
    flat = data.flatten(pts)
    prefactor = 1.0
    for i, j in itertools.combinations(range(q), 2):
        prefactor *= 1.0 + data.flat_g[data.sub[flat[i], flat[j]]]
    rho0 = model.density
    I_g = model.h**model.d * float(np.abs(data.flat_g).sum())
    I_gamma = model.h**model.d * float(np.abs(data.gamma).sum())
    tail = prefactor * tail_estimate(q, p_max + 1, rho0, I_g, I_gamma, model.L, model.d, registry)
    return SeriesResult(terms, prefactor * float(sum(terms)), tail)
