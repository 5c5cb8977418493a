"""Ground-truth routes: A* search, path costs and the route corpus."""
from __future__ import annotations

import csv
import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .graph import Graph
from .ndmath import XorShiftRandom


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RoutePath:
    nodes: tuple[int, ...]
    cost: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    def __len__(self) -> int:
        return len(self.nodes)


def path_cost(g: Graph, nodes: Sequence[int]) -> float | None:
    """Total weight of a node sequence, or None if it is empty or uses a non-edge."""
    if len(nodes) == 0:
        return None
    if not 0 <= nodes[0] < g.n_nodes:
        return None
    total = 0.0
    for u, v in zip(nodes[:-1], nodes[1:]):
        if not g.has_edge(u, v):
            return None
        total += g.weight(u, v)
    return total


def astar_search(g: Graph, src: int, dst: int, heuristic_scale: float = 1.0) -> RoutePath | None:
    """Minimum-cost route from ``src`` to ``dst``, or None if unreachable.

    The heuristic is ``heuristic_scale`` times the Euclidean distance to
    ``dst``; a scale of 0 gives Dijkstra. Frontier entries are ordered by
    (f, node id), and a node's parent only changes on a strictly shorter
    tentative distance, so ties resolve towards smaller ids.
    """
    src, dst = g.check_node(src), g.check_node(dst)
    if src == dst:
        return RoutePath((src,), 0.0)

    def h(n):
        return heuristic_scale * g.euclid(n, dst) if heuristic_scale else 0.0

    dist = {src: 0.0}
    parent = {src: -1}
    closed = set()
    frontier = [(h(src), src)]
    while frontier:
        _, u = heapq.heappop(frontier)
        if u in closed:
            continue
        if u == dst:
            break
        closed.add(u)
        du = dist[u]
        for v, w in g.neighbors(u):
            if v in closed:
                continue
            nd = du + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = u
                heapq.heappush(frontier, (nd + h(v), v))
    else:
        return None
    if dst not in parent:
        return None
    nodes = [dst]
    while nodes[-1] != src:
        nodes.append(parent[nodes[-1]])
    nodes.reverse()
    return RoutePath(tuple(nodes), path_cost(g, nodes))


def dijkstra_search(g: Graph, src: int, dst: int) -> RoutePath | None:
    return astar_search(g, src, dst, heuristic_scale=0.0)


@dataclass
class RouteDataset:
    """Route corpus in generation order plus the train/test index split."""

    routes: list[RoutePath]
    train_idx: list[int]
    test_idx: list[int]
    seed: int
    split_fraction: float
    graph: Graph | None = field(default=None, repr=False, compare=False)

    @property
    def train(self) -> list[RoutePath]:
        return [self.routes[i] for i in self.train_idx]

    @property
    def test(self) -> list[RoutePath]:
        return [self.routes[i] for i in self.test_idx]

    def __len__(self) -> int:
        return len(self.routes)


def split_count(n: int, split_fraction: float) -> int:
    # guards against 0.67 * 3000 landing a hair above an integer
    return min(n, math.ceil(split_fraction * n - 1e-9))


def generate_dataset(g: Graph, n_routes: int, split_fraction: float = 0.67, seed: int = 0,
                     min_hops: int = 2) -> RouteDataset:
    """Sample ``n_routes`` A* routes between uniformly drawn distinct nodes.

    Unreachable pairs and routes shorter than ``min_hops`` are rejected and
    redrawn; after ``100 * n_routes`` draws generation gives up. Pairs come
    from the stream seeded with ``seed``, the split shuffle from ``seed + 1``.
    """
    if g.n_nodes < 2:
        raise GenerationError("graph needs at least 2 nodes")
    if n_routes < 1:
        raise ValueError("n_routes must be >= 1")
    if not 0.0 <= split_fraction <= 1.0:
        raise ValueError("split_fraction must lie in [0, 1]")
    rng = XorShiftRandom(seed)
    routes: list[RoutePath] = []
    budget = 100 * n_routes
    draws = 0
    while len(routes) < n_routes:
        if draws >= budget:
            raise GenerationError(
                f"accepted only {len(routes)} of {n_routes} routes in {budget} draws; graph too fragmented")
        draws += 1
        src = rng.integers(g.n_nodes)
        dst = rng.integers(g.n_nodes - 1)
        if dst >= src:
            dst += 1
        path = astar_search(g, src, dst)
        if path is None or path.hops < min_hops:
            continue
        routes.append(path)
    perm = XorShiftRandom(seed + 1).permutation(n_routes)
    k = split_count(n_routes, split_fraction)
    return RouteDataset(routes, sorted(perm[:k]), sorted(perm[k:]), seed, split_fraction, graph=g)


def hop_histogram(ds: RouteDataset) -> dict[int, int]:
    return dict(sorted(Counter(r.hops for r in ds.routes).items()))


def write_histogram(hist: dict[int, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["hops", "count"])
        for hops, count in sorted(hist.items()):
            w.writerow([hops, count])


def save_dataset(ds: RouteDataset, path) -> None:
    test = set(ds.test_idx)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# seed={ds.seed} split={ds.split_fraction!r} n={len(ds.routes)}\n")
        for i, r in enumerate(ds.routes):
            tag = "TEST" if i in test else "TRAIN"
            f.write(f"{tag} {r.cost:.17g} {' '.join(map(str, r.nodes))}\n")


def load_dataset(path, graph: Graph | None = None) -> RouteDataset:
    """Read a dataset file; with ``graph`` every route is revalidated."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}:1: missing '# seed=... split=... n=...' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        seed, split, n = int(meta["seed"]), float(meta["split"]), int(meta["n"])
    except (KeyError, ValueError):
        raise ValueError(f"{path}:1: malformed header {lines[0]!r}") from None
    routes, train_idx, test_idx = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] not in ("TRAIN", "TEST") or len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected 'TRAIN|TEST cost id...'")
        try:
            cost = float(parts[1])
            nodes = tuple(int(p) for p in parts[2:])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
        if graph is not None:
            check = path_cost(graph, nodes)
            if check is None or abs(check - cost) > 1e-12 * max(1.0, abs(cost)):
                raise ValueError(f"{path}:{lineno}: route is not valid on the given graph")
        (test_idx if parts[0] == "TEST" else train_idx).append(len(routes))
        routes.append(RoutePath(nodes, cost))
    if len(routes) != n:
        raise ValueError(f"{path}: header declares {n} routes, found {len(routes)}")
    return RouteDataset(routes, train_idx, test_idx, seed, split, graph=graph)
