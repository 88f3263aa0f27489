"""Undirected graphs, synthetic topology generators and SNAP edge-list I/O."""

from __future__ import annotations

import io
from collections.abc import Iterable
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    pass


class EdgeListParseError(GraphError):
    def __init__(self, lineno: int, line: str):
        super().__init__(f"line {lineno}: expected two integer node ids, got {line.strip()!r}")
        self.lineno = lineno


class Graph:
    """Immutable simple undirected graph on dense ids ``0..n-1``.

    Adjacency is kept in CSR form (``indptr``, ``indices``) with each
    neighbor list sorted ascending. ``labels[i]`` is the original id of
    node ``i`` when the graph was loaded from a file.
    """

    def __init__(self, n: int, edges: Iterable[tuple[int, int]], labels=None, info=None):
        if n < 0:
            raise GraphError("node count must be non-negative")
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                continue
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for {n} nodes")
            pairs.add((u, v) if u < v else (v, u))
        if pairs:
            arr = np.array(sorted(pairs), dtype=np.int64)
        else:
            arr = np.empty((0, 2), dtype=np.int64)
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        deg = np.bincount(src, minlength=n).astype(np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])

        self._n = n
        self._edges = arr
        self.indptr = indptr
        self.indices = dst.astype(np.int64)
        self.degree = deg
        for a in (self._edges, self.indptr, self.indices, self.degree):
            a.setflags(write=False)
        self.labels = list(labels) if labels is not None else list(range(n))
        self.info = dict(info or {})

    @property
    def node_count(self) -> int:
        return self._n

    @property
    def edge_count_undirected(self) -> int:
        return len(self._edges)

    @property
    def edge_count_ordered(self) -> int:
        return 2 * len(self._edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        return {v: tuple(int(w) for w in self.neighbors(v)) for v in range(self._n)}

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(small, large)`` pairs in sorted order."""
        return [(int(u), int(v)) for u, v in self._edges]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        return f"Graph(n={self._n}, m={self.edge_count_undirected})"


def influence_weight(g: Graph, v: int, w: int) -> float:
    """Weight ``1/|N(v)|`` that neighbor ``w`` exerts on ``v``; zero for non-neighbors."""
    d = int(g.degree[v])
    if d == 0:
        raise GraphError(f"node {v} is isolated; influence weight undefined")
    return 1.0 / d if g.has_edge(v, w) else 0.0


# -- edge lists ---------------------------------------------------------------

def load_edge_list(stream) -> Graph:
    """Parse a SNAP-style edge list.

    ``stream`` is a text file object, any iterable of lines, or a string
    holding the whole file. Both orientations of a pair and repeated pairs
    collapse to a single undirected edge; self-loops are dropped but their
    node is kept. Node ids are relabeled densely in order of first
    appearance; ``info["ordered_pairs"]`` holds the number of distinct
    ordered pairs present in the input.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    index: dict[int, int] = {}
    labels: list[int] = []
    raw_pairs: set[tuple[int, int]] = set()
    edges = []
    for lineno, line in enumerate(stream, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tokens = s.split()
        if len(tokens) != 2:
            raise EdgeListParseError(lineno, line)
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise EdgeListParseError(lineno, line) from None
        raw_pairs.add((a, b))
        for x in (a, b):
            if x not in index:
                index[x] = len(labels)
                labels.append(x)
        edges.append((index[a], index[b]))
    if not labels:
        raise GraphError("edge list contains no edges")
    return Graph(len(labels), edges, labels=labels,
                 info={"source": "edge-list", "ordered_pairs": len(raw_pairs)})


def read_edge_list(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        g = load_edge_list(fh)
    g.info["path"] = str(path)
    return g


def format_edge_list(g: Graph, use_labels: bool = False) -> str:
    lab = g.labels if use_labels else None
    lines = []
    for u, v in g.edges():
        if lab is not None:
            u, v = sorted((lab[u], lab[v]))
        lines.append(f"{u} {v}\n")
    if use_labels:
        lines.sort(key=lambda s: tuple(int(t) for t in s.split()))
    return "".join(lines)


def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text(format_edge_list(g), encoding="utf-8")


# -- generators ---------------------------------------------------------------

def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def gen_preferential_attachment(n: int, rng=None) -> Graph:
    """Preferential-attachment tree: every arriving node adds one link.

    Node 1 links to node 0; each later node picks its endpoint with
    probability proportional to current degree.
    """
    if n < 2:
        raise GraphError("preferential attachment needs n >= 2")
    rng = _as_rng(rng)
    # every edge contributes both endpoints, so a uniform pick from this
    # list is a degree-proportional pick
    ends = np.empty(2 * (n - 1), dtype=np.int64)
    ends[0], ends[1] = 0, 1
    edges = [(0, 1)]
    for t in range(2, n):
        m = 2 * (t - 1)
        target = int(ends[rng.integers(m)])
        edges.append((target, t))
        ends[m], ends[m + 1] = target, t
    return Graph(n, edges, info={"generator": "pa"})


def gen_small_world(n: int, ring_neighbors: int = 2, p_rewire: float = 0.2, rng=None) -> Graph:
    """Watts-Strogatz small world.

    Starts from a ring lattice where every node links to ``ring_neighbors/2``
    nodes on each side, then rewires the far endpoint of each lattice edge
    with probability ``p_rewire``. A rewired endpoint that would create a
    self-loop or a duplicate edge is redrawn. ``info["rewired"]`` counts
    the edges that moved.
    """
    if not 0.0 <= p_rewire <= 1.0:
        raise GraphError(f"rewiring probability {p_rewire} outside [0, 1]")
    if ring_neighbors < 2 or ring_neighbors % 2:
        raise GraphError("ring_neighbors must be a positive even number")
    if n <= 2 * ring_neighbors:
        raise GraphError("small world needs n > 2 * ring_neighbors")
    rng = _as_rng(rng)
    half = ring_neighbors // 2
    adj = [set() for _ in range(n)]
    lattice = []
    for j in range(1, half + 1):
        for u in range(n):
            v = (u + j) % n
            if v in adj[u]:
                continue
            adj[u].add(v)
            adj[v].add(u)
            lattice.append((u, v))
    rewired = 0
    for u, v in lattice:
        if rng.random() >= p_rewire:
            continue
        if len(adj[u]) >= n - 1:
            continue
        while True:
            w = int(rng.integers(n))
            if w != u and w not in adj[u]:
                break
        adj[u].discard(v)
        adj[v].discard(u)
        adj[u].add(w)
        adj[w].add(u)
        rewired += 1
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Graph(n, edges, info={"generator": "sw", "rewired": rewired,
                                 "lattice_edges": len(lattice)})


def gen_spatially_clustered(n: int, avg_degree: float = 10.0, rng=None) -> Graph:
    """Spatially clustered network on the unit square.

    Repeatedly links a uniformly chosen node to its nearest not-yet-linked
    node until the mean degree reaches ``avg_degree``.
    """
    if n <= avg_degree:
        raise GraphError("spatially clustered network needs n > avg_degree")
    rng = _as_rng(rng)
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, : n - 1]
    cursor = np.zeros(n, dtype=np.int64)
    adj = [set() for _ in range(n)]
    target_edges = int(np.ceil(avg_degree * n / 2.0 - 1e-9))
    m = 0
    while m < target_edges:
        u = int(rng.integers(n))
        row = order[u]
        c = cursor[u]
        while c < n - 1 and int(row[c]) in adj[u]:
            c += 1
        cursor[u] = c
        if c == n - 1:
            continue
        v = int(row[c])
        adj[u].add(v)
        adj[v].add(u)
        m += 1
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Graph(n, edges, info={"generator": "sc", "positions": pos})


def gen_random_regular(n: int, degree: int = 3, rng=None, max_tries: int = 1000) -> Graph:
    """Uniform-ish random ``degree``-regular simple graph (configuration model with restarts)."""
    if degree < 1 or degree >= n or (n * degree) % 2:
        raise GraphError(f"no simple {degree}-regular graph on {n} nodes")
    rng = _as_rng(rng)
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        rng.shuffle(stubs)
        a, b = stubs[0::2], stubs[1::2]
        if np.any(a == b):
            continue
        pairs = {(min(x, y), max(x, y)) for x, y in zip(a.tolist(), b.tolist())}
        if len(pairs) == len(a):
            return Graph(n, sorted(pairs), info={"degree": degree})
    raise GraphError(f"failed to draw a simple {degree}-regular graph in {max_tries} tries")


GENERATORS = {
    "pa": gen_preferential_attachment,
    "sw": gen_small_world,
    "sc": gen_spatially_clustered,
    "regular": gen_random_regular,
}


def generate(name: str, n: int, rng=None, **params) -> Graph:
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise GraphError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return fn(n, rng=rng, **params)


def clustering_coefficient(g: Graph) -> float:
    """Average local clustering coefficient (nodes of degree < 2 count as 0)."""
    total = 0.0
    nbsets = [set(g.neighbors(v).tolist()) for v in range(g.node_count)]
    for v in range(g.node_count):
        d = len(nbsets[v])
        if d < 2:
            continue
        links = sum(len(nbsets[u] & nbsets[v]) for u in nbsets[v]) / 2
        total += 2.0 * links / (d * (d - 1))
    return total / g.node_count if g.node_count else 0.0
