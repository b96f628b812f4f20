"""Enumeration of g-graphs, spanning trees and diagrams (pi, G).

Vertices are labelled 0..q+p-1; the first q are external.  A diagram pairs
a permutation pi of all vertices (the gamma-edges j -> pi(j)) with a
g-graph G.  Labels are 0-based internally; the dump format is 1-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from ..errors import DomainError, SizeGuardError

DEFAULT_MAX_VERTICES = 7


@dataclass(frozen=True)
class DiagramGraph:
    q: int
    p: int
    edges: tuple  # sorted (i, j) pairs with i < j

    @property
    def n(self) -> int:
        return self.q + self.p

    def degree(self, v: int) -> int:
        return sum(v in e for e in self.edges)


@dataclass(frozen=True)
class ClusterStats:
    k: int          # clusters of G made of internal vertices only
    kappa: int      # clusters of G containing an external vertex
    n_g: int        # sum of internal-only cluster sizes minus 2k
    n_g_star: int   # internal vertices in clusters with an external vertex

    @property
    def size(self) -> int:
        return self.k + self.n_g + self.n_g_star


@dataclass(frozen=True)
class Diagram:
    graph: DiagramGraph
    perm: tuple
    sign: int
    linked: bool
    tilde_linked: bool
    stats: ClusterStats

    @property
    def q(self) -> int:
        return self.graph.q

    @property
    def p(self) -> int:
        return self.graph.p

    @property
    def edges(self) -> tuple:
        return self.graph.edges


def _check_size(q: int, p: int, max_vertices: int) -> None:
    if q < 0 or p < 0 or q + p < 1:
        raise DomainError(f"need q, p >= 0 and q + p >= 1, got q={q}, p={p}")
    if q + p > max_vertices:
        raise SizeGuardError(f"q + p = {q + p} exceeds the enumeration guard {max_vertices}")


def allowed_edges(q: int, p: int) -> list[tuple[int, int]]:
    """All vertex pairs not joining two external vertices."""
    n = q + p
    return [(i, j) for i in range(n) for j in range(i + 1, n) if j >= q]


def _valid_masks(q: int, p: int, edges: list) -> np.ndarray:
    n_edges = len(edges)
    masks = np.arange(1 << n_edges, dtype=np.int64)
    ok = np.ones(len(masks), dtype=bool)
    for v in range(q, q + p):
        inc = 0
        for bit, e in enumerate(edges):
            if v in e:
                inc |= 1 << bit
        ok &= (masks & inc) != 0
    return masks[ok]


def enumerate_graphs(q: int, p: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> list[DiagramGraph]:
    """Every g-graph on q external and p internal vertices.

    No edge joins two external vertices and every internal vertex has
    degree at least one.
    """
    _check_size(q, p, max_vertices)
    edges = allowed_edges(q, p)
    out = []
    for m in _valid_masks(q, p, edges):
        m = int(m)
        out.append(DiagramGraph(q, p, tuple(e for bit, e in enumerate(edges) if m >> bit & 1)))
    return out


def count_graphs(q: int, p: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> int:
    _check_size(q, p, max_vertices)
    return len(_valid_masks(q, p, allowed_edges(q, p)))


def _components(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return [find(v) for v in range(n)]


def is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    return n <= 1 or len(set(_components(n, edges))) == 1


def enumerate_trees(n: int, vertices: Iterable[int] | None = None,
                    max_vertices: int = DEFAULT_MAX_VERTICES) -> list[tuple]:
    """All spanning trees of the complete graph on ``vertices`` (default 0..n-1).

    Found by testing every (n-1)-edge subset for connectivity, so the count
    is an independent check of Cayley's formula.
    """
    verts = list(range(n)) if vertices is None else list(vertices)
    n = len(verts)
    if n > max_vertices:
        raise SizeGuardError(f"{n} vertices exceeds the enumeration guard {max_vertices}")
    if n <= 1:
        return [()]
    pairs = list(itertools.combinations(verts, 2))
    local = {v: i for i, v in enumerate(verts)}
    trees = []
    for sub in itertools.combinations(pairs, n - 1):
        if is_connected(n, [(local[a], local[b]) for a, b in sub]):
            trees.append(sub)
    return trees


def enumerate_connected_graphs(q: int, p: int,
                               max_vertices: int = DEFAULT_MAX_VERTICES) -> list[DiagramGraph]:
    return [g for g in enumerate_graphs(q, p, max_vertices) if is_connected(g.n, g.edges)]


def permutation_sign(perm: tuple) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def cluster_stats(graph: DiagramGraph) -> ClusterStats:
    comp = _components(graph.n, graph.edges)
    groups: dict[int, list[int]] = {}
    for v, c in enumerate(comp):
        groups.setdefault(c, []).append(v)
    k = kappa = internal_only = star = 0
    for members in groups.values():
        n_ext = sum(v < graph.q for v in members)
        if n_ext:
            kappa += 1
            star += len(members) - n_ext
        else:
            k += 1
            internal_only += len(members)
    return ClusterStats(k, kappa, internal_only - 2 * k, star)


def linked_components(graph: DiagramGraph, perm: tuple) -> list[int]:
    union = list(graph.edges) + [(j, perm[j]) for j in range(graph.n)]
    return _components(graph.n, union)


def make_diagram(graph: DiagramGraph, perm: tuple, stats: ClusterStats | None = None) -> Diagram:
    comp = linked_components(graph, perm)
    roots = set(comp)
    ext_roots = {comp[v] for v in range(graph.q)}
    return Diagram(
        graph=graph,
        perm=tuple(perm),
        sign=permutation_sign(perm),
        linked=len(roots) == 1,
        tilde_linked=roots <= ext_roots,
        stats=stats if stats is not None else cluster_stats(graph),
    )


def enumerate_diagrams(q: int, p: int, filter: str | Callable[[Diagram], bool] = "all",
                       max_vertices: int = DEFAULT_MAX_VERTICES) -> list[Diagram]:
    """All diagrams (pi, G) with G in the graph family for (q, p).

    ``filter`` is ``"all"``, ``"linked"``, ``"tilde_linked"`` or a predicate
    applied to each Diagram (its ``stats`` field carries k, kappa, n_g, n_g*).
    """
    return list(iter_diagrams(q, p, filter, max_vertices))


def iter_diagrams(q: int, p: int, filter: str | Callable[[Diagram], bool] = "all",
                  max_vertices: int = DEFAULT_MAX_VERTICES) -> Iterator[Diagram]:
    if isinstance(filter, str):
        if filter == "all":
            keep = lambda dg: True
        elif filter == "linked":
            keep = lambda dg: dg.linked
        elif filter in ("tilde_linked", "tilde"):
            keep = lambda dg: dg.tilde_linked
        else:
            raise DomainError(f"unknown diagram filter {filter!r}")
    else:
        keep = filter
    graphs = enumerate_graphs(q, p, max_vertices)
    perms = list(itertools.permutations(range(q + p)))
    for g in graphs:
        stats = cluster_stats(g)
        for perm in perms:
            dg = make_diagram(g, perm, stats)
            if keep(dg):
                yield dg


def relabel(diag: Diagram, mapping: dict[int, int]) -> Diagram:
    """Apply a vertex relabelling sigma: vertex v becomes sigma(v).

    pi becomes sigma pi sigma^{-1} and each edge {a, b} becomes {sigma a, sigma b}.
    """
    n = diag.graph.n
    sigma = [mapping.get(v, v) for v in range(n)]
    inv = [0] * n
    for v, s in enumerate(sigma):
        inv[s] = v
    perm = tuple(sigma[diag.perm[inv[v]]] for v in range(n))
    edges = tuple(sorted(tuple(sorted((sigma[a], sigma[b]))) for a, b in diag.edges))
    return make_diagram(DiagramGraph(diag.q, diag.p, edges), perm)


def dump_line(diag: Diagram, value: complex) -> str:
    """``q p | perm | edges | sign k kappa n_g n_g* | re im`` with 1-based labels."""
    perm = " ".join(str(v + 1) for v in diag.perm)
    edges = " ".join(f"{a + 1}-{b + 1}" for a, b in diag.edges) or "-"
    s = diag.stats
    return (f"{diag.q} {diag.p} | {perm} | {edges} | {diag.sign:+d} {s.k} {s.kappa} {s.n_g} {s.n_g_star} | "
            f"{value.real:.12e} {value.imag:.12e}")


def parse_dump_line(line: str) -> tuple[Diagram, complex]:
    head, perm, edges, stats, val = (part.strip() for part in line.split("|"))
    q, p = (int(t) for t in head.split())
    perm_t = tuple(int(t) - 1 for t in perm.split())
    edge_t = () if edges == "-" else tuple(
        tuple(int(x) - 1 for x in e.split("-")) for e in edges.split())
    re, im = (float(t) for t in val.split())
    return make_diagram(DiagramGraph(q, p, edge_t), perm_t), complex(re, im)
