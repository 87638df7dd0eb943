"""Line, cycle and sparse random graphs with a designated initial and target node.

Every graph uses the same labeling convention: node 0 is where the walker
starts and node 1 is the target. Enumerations relabel path/cycle positions
so that convention holds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

__all__ = [
    "Graph",
    "GraphError",
    "INITIAL",
    "TARGET",
    "enumerate_line_graphs",
    "enumerate_cycle_graphs",
    "random_graph",
    "relabel",
    "shuffle_labels",
    "pad_adjacency",
]

INITIAL = 0
TARGET = 1
FAMILIES = ("line", "cycle", "random")

MAX_DRAWS = 2_000_000
_DRAW_BATCH = 4096


class GraphError(ValueError):
    """Invalid graph size, structure or generation failure."""


def _norm_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset[tuple[int, int]]
    family: str = "random"
    initial: int = field(default=INITIAL)
    target: int = field(default=TARGET)

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"graph needs at least 2 nodes, got {self.n}")
        if self.family not in FAMILIES:
            raise GraphError(f"unknown graph family {self.family!r}")
        if self.initial == self.target:
            raise GraphError("initial and target node must differ")
        edges = frozenset(_norm_edge(int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
        object.__setattr__(self, "edges", edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=0)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def is_valid(self) -> bool:
        """True if no node is isolated and the target is reachable from the start."""
        return bool((self.degrees() > 0).all()) and _reachable(self.adjacency(), self.initial, self.target)

    @classmethod
    def from_adjacency(cls, a, family: str = "random") -> Graph:
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency must be symmetric")
        i, j = np.nonzero(np.triu(a, 1))
        return cls(a.shape[0], frozenset(zip(i.tolist(), j.tolist())), family)

    # -- serialization ------------------------------------------------------

    def to_record(self) -> str:
        """One-line text form: ``family n initial target i-j i-j ...``."""
        edges = " ".join(f"{i}-{j}" for i, j in self.sorted_edges())
        return f"{self.family} {self.n} {self.initial} {self.target} {edges}".rstrip()

    @classmethod
    def from_record(cls, line: str) -> Graph:
        parts = line.split()
        if len(parts) < 4:
            raise GraphError(f"malformed graph record: {line!r}")
        family, n, initial, target = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
        edges = []
        for tok in parts[4:]:
            i, j = tok.split("-")
            edges.append((int(i), int(j)))
        return cls(n, frozenset(edges), family, initial, target)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "initial": self.initial,
            "target": self.target,
            "adjacency": self.adjacency().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Graph:
        g = cls.from_adjacency(d["adjacency"], d.get("family", "random"))
        return cls(g.n, g.edges, g.family, d.get("initial", INITIAL), d.get("target", TARGET))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> Graph:
        return cls.from_dict(json.loads(text))


def _reachable(a: np.ndarray, src: int, dst: int) -> bool:
    order = breadth_first_order(csr_matrix(a), src, directed=False, return_predecessors=False)
    return dst in set(order.tolist())


def _placements(order: list[int], n: int, closed: bool, family: str) -> list[Graph]:
    """One graph per unordered pair of positions along ``order``.

    The lower position becomes the initial node (0), the higher one the
    target (1); the remaining positions get labels 2.. in ascending order.
    """
    graphs = []
    pos_edges = [(k, k + 1) for k in range(n - 1)]
    if closed:
        pos_edges.append((n - 1, 0))
    for p, q in combinations(range(n), 2):
        rest = [k for k in range(n) if k not in (p, q)]
        label = {p: INITIAL, q: TARGET}
        label.update({k: idx + 2 for idx, k in enumerate(rest)})
        edges = frozenset(_norm_edge(label[u], label[v]) for u, v in pos_edges)
        graphs.append(Graph(n, edges, family))
    return graphs


def enumerate_line_graphs(n: int) -> list[Graph]:
    """All n(n-1)/2 placements of initial and target node on a path of n nodes."""
    if n < 3:
        raise GraphError(f"line graphs need n >= 3, got {n}")
    return _placements(list(range(n)), n, closed=False, family="line")


def enumerate_cycle_graphs(n: int) -> list[Graph]:
    """All n(n-1)/2 placements on an n-cycle (rotations are not merged)."""
    if n < 3:
        raise GraphError(f"cycle graphs need n >= 3, got {n}")
    return _placements(list(range(n)), n, closed=True, family="cycle")


def random_graph(n: int, p_edge: float, rng_seed: int, max_draws: int = MAX_DRAWS) -> Graph:
    """Erdos-Renyi draw conditioned on no isolated node and a 0 -> 1 path.

    Candidates are drawn in fixed-size batches from ``numpy.random.default_rng(rng_seed)``
    and the first acceptable one in draw order is returned, so the result
    depends only on the arguments.
    """
    if n < 3:
        raise GraphError(f"random graphs need n >= 3, got {n}")
    if not 0.0 < p_edge < 1.0:
        raise GraphError(f"p_edge must lie in (0, 1), got {p_edge}")
    rng = np.random.default_rng(rng_seed)
    iu, ju = np.triu_indices(n, 1)
    # node-by-edge incidence for vectorized degree counts
    incidence = np.zeros((len(iu), n), dtype=np.int32)
    incidence[np.arange(len(iu)), iu] = 1
    incidence[np.arange(len(iu)), ju] = 1
    drawn = 0
    while drawn < max_draws:
        batch = min(_DRAW_BATCH, max_draws - drawn)
        present = rng.random((batch, len(iu))) < p_edge
        drawn += batch
        deg = present.astype(np.int32) @ incidence
        for row in np.flatnonzero((deg > 0).all(axis=1)):
            mask = present[row]
            g = Graph(n, frozenset(zip(iu[mask].tolist(), ju[mask].tolist())), "random")
            if _reachable(g.adjacency(), INITIAL, TARGET):
                return g
    raise GraphError(f"no acceptable graph after {max_draws} draws (n={n}, p_edge={p_edge})")


def relabel(g: Graph, perm) -> Graph:
    """Apply ``old node k -> perm[k]``."""
    perm = list(perm)
    if sorted(perm) != list(range(g.n)):
        raise GraphError("perm must be a permutation of 0..n-1")
    edges = frozenset(_norm_edge(perm[i], perm[j]) for i, j in g.edges)
    return Graph(g.n, edges, g.family, perm[g.initial], perm[g.target])


def shuffle_labels(g: Graph, rng_seed: int) -> Graph:
    """Randomly permute the labels of nodes 2..n-1, keeping 0 and 1 fixed."""
    rng = np.random.default_rng(rng_seed)
    tail = rng.permutation(np.arange(2, g.n)).tolist()
    return relabel(g, [0, 1, *tail])


def pad_adjacency(a, big_n: int) -> np.ndarray:
    """Embed ``a`` in the top-left block of a ``big_n`` x ``big_n`` zero matrix."""
    a = np.asarray(a)
    if big_n < a.shape[0]:
        raise GraphError(f"cannot pad a {a.shape[0]}-node matrix down to {big_n}")
    out = np.zeros((big_n, big_n), dtype=a.dtype)
    out[: a.shape[0], : a.shape[1]] = a
    return out
