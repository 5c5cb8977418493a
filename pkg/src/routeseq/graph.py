"""Road graph loading, bounding-box filtering and adjacency queries.

Nodes are road intersections carrying (lon, lat) coordinates in degrees;
edges are undirected road segments weighted by the Euclidean distance
between their endpoints in raw degree space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class GraphParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, source: str, lineno: int, message: str):
        super().__init__(f"{source}:{lineno}: {message}")
        self.source = source
        self.lineno = lineno


class GraphStructureError(ValueError):
    pass


class EmptyGraphError(GraphStructureError):
    pass


@dataclass(frozen=True)
class GeoNode:
    id: int
    lon: float
    lat: float


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with Euclidean edge weights.

    ``edges`` holds canonical pairs ``(u, v)`` with ``u < v``, sorted.
    ``id_map`` maps node ids of the graph this one was derived from (if any)
    to ids in this graph.
    """

    lon: np.ndarray
    lat: np.ndarray
    edges: tuple[tuple[int, int], ...]
    id_map: dict[int, int] | None = None
    self_loops_dropped: int = 0
    zero_length_dropped: int = 0
    _adj: tuple[tuple[tuple[int, float], ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        lon = np.ascontiguousarray(self.lon, dtype=np.float64)
        lat = np.ascontiguousarray(self.lat, dtype=np.float64)
        if lon.shape != lat.shape or lon.ndim != 1:
            raise GraphStructureError("lon and lat must be 1-D arrays of equal length")
        if not (np.isfinite(lon).all() and np.isfinite(lat).all()):
            raise GraphStructureError("node coordinates must be finite")
        lon.flags.writeable = False
        lat.flags.writeable = False
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)

        n = lon.shape[0]
        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        prev = None
        for u, v in self.edges:
            if not (0 <= u < v < n):
                raise GraphStructureError(f"edge ({u}, {v}) is not canonical or out of range for {n} nodes")
            if prev is not None and (u, v) <= prev:
                raise GraphStructureError("edges must be sorted and unique")
            prev = (u, v)
            w = math.hypot(lon[u] - lon[v], lat[u] - lat[v])
            if not w > 0:
                raise GraphStructureError(f"edge ({u}, {v}) joins coincident nodes")
            adj[u].append((v, w))
            adj[v].append((u, w))
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @property
    def n_nodes(self) -> int:
        return self.lon.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def nodes(self) -> list[GeoNode]:
        return [GeoNode(i, float(x), float(y)) for i, (x, y) in enumerate(zip(self.lon, self.lat))]

    def __len__(self) -> int:
        return self.n_nodes

    def check_node(self, u) -> int:
        if isinstance(u, (bool, np.bool_)) or not isinstance(u, (int, np.integer)):
            raise TypeError(f"node id must be an integer, got {type(u).__name__}")
        if not 0 <= u < self.n_nodes:
            raise IndexError(f"node id {u} out of range for graph with {self.n_nodes} nodes")
        return int(u)

    def neighbors(self, u: int) -> list[tuple[int, float]]:
        return list(self._adj[self.check_node(u)])

    def has_edge(self, u: int, v: int) -> bool:
        if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
            return False
        return any(w == v for w, _ in self._adj[u])

    def weight(self, u: int, v: int) -> float:
        for w, d in self._adj[self.check_node(u)]:
            if w == v:
                return d
        raise KeyError(f"({u}, {v}) is not an edge")

    def euclid(self, u: int, v: int) -> float:
        return math.hypot(self.lon[u] - self.lon[v], self.lat[u] - self.lat[v])


def neighbors(g: Graph, u: int) -> list[tuple[int, float]]:
    """Adjacent nodes of ``u`` with edge weights, in ascending id order."""
    return g.neighbors(u)


def _canonical_edges(pairs: Iterable[tuple[int, int]]) -> tuple[tuple[tuple[int, int], ...], int]:
    seen = set()
    loops = 0
    for u, v in pairs:
        if u == v:
            loops += 1
            continue
        seen.add((u, v) if u < v else (v, u))
    return tuple(sorted(seen)), loops


def from_edges(lon: Sequence[float], lat: Sequence[float], pairs: Iterable[tuple[int, int]]) -> Graph:
    """Build a graph from 0-based endpoint pairs in any order or duplication.

    Self-loops and edges between nodes at identical coordinates (which would
    have zero weight) are dropped and counted on the result.
    """
    n = len(lon)
    pairs = list(pairs)
    for u, v in pairs:
        if not (0 <= u < n and 0 <= v < n):
            raise GraphStructureError(f"edge ({u}, {v}) references a node id >= node count {n}")
    edges, loops = _canonical_edges(pairs)
    kept = tuple((u, v) for u, v in edges if lon[u] != lon[v] or lat[u] != lat[v])
    if loops or len(kept) < len(edges):
        log.info("dropped %d self-loops and %d zero-length edges", loops, len(edges) - len(kept))
    return Graph(np.asarray(lon, float), np.asarray(lat, float), kept, self_loops_dropped=loops,
                 zero_length_dropped=len(edges) - len(kept))


def read_matrix_market(path, source: str | None = None) -> tuple[int, list[tuple[int, int]]]:
    """Parse a MatrixMarket coordinate file into (size, 0-based pairs).

    Values after the two indices (real/integer fields) are ignored; only the
    sparsity pattern matters. ``symmetric`` files are mirrored.
    """
    source = source or str(path)
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise GraphParseError(source, 1, "missing %%MatrixMarket header")
    banner = lines[0].lower().split()
    if len(banner) < 5 or banner[1] != "matrix" or banner[2] != "coordinate":
        raise GraphParseError(source, 1, "only 'matrix coordinate' files are supported")
    symmetric = banner[4] in ("symmetric", "skew-symmetric", "hermitian")

    size = None
    nnz = 0
    pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if size is None:
            try:
                rows, cols, nnz = (int(p) for p in parts)
            except ValueError:
                raise GraphParseError(source, lineno, f"bad size line {s!r}") from None
            if rows != cols:
                raise GraphStructureError(f"{source}: adjacency matrix must be square, got {rows}x{cols}")
            size = rows
            continue
        try:
            i, j = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise GraphParseError(source, lineno, f"bad entry {s!r}") from None
        if not (1 <= i <= size and 1 <= j <= size):
            raise GraphStructureError(f"{source}:{lineno}: entry ({i}, {j}) outside a {size}x{size} matrix")
        pairs.append((i - 1, j - 1))
        if symmetric and i != j:
            pairs.append((j - 1, i - 1))
    if size is None:
        raise GraphParseError(source, len(lines), "missing size line")
    n_entries = len(pairs) if not symmetric else sum(1 for u, v in pairs if u >= v)
    if n_entries != nnz:
        raise GraphStructureError(f"{source}: size line declares {nnz} entries, found {n_entries}")
    return size, pairs


def read_coords(path, source: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read one ``lon lat`` pair per non-blank line."""
    source = source or str(path)
    lon, lat = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphParseError(source, lineno, f"expected 'lon lat', got {line.strip()!r}")
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                raise GraphParseError(source, lineno, f"non-numeric coordinate {line.strip()!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GraphParseError(source, lineno, "non-finite coordinate")
            lon.append(x)
            lat.append(y)
    return np.array(lon), np.array(lat)


def load_graph(edge_source, coord_source) -> Graph:
    size, pairs = read_matrix_market(edge_source)
    lon, lat = read_coords(coord_source)
    if size != len(lon):
        raise GraphStructureError(f"adjacency has {size} nodes but coordinate file has {len(lon)} rows")
    return from_edges(lon, lat, pairs)


def minnesota_paths() -> tuple[Path, Path]:
    """Paths of the bundled Minnesota road network files."""
    base = resources.files("routeseq") / "data"
    return Path(str(base / "minnesota.mtx")), Path(str(base / "minnesota.xy"))


def load_minnesota() -> Graph:
    return load_graph(*minnesota_paths())


MINNESOTA_BBOX = (-97.0, -94.0, 46.0, 49.0)


def filter_bbox(g: Graph, lon_min: float, lon_max: float, lat_min: float, lat_max: float,
                inclusive: bool = False) -> Graph:
    """Keep nodes inside a lon/lat box and the edges between them.

    The box is open by default (strict inequalities); ``inclusive=True``
    closes it. Surviving nodes keep their relative order and are renumbered
    0..M-1; ``result.id_map`` maps old ids to new ones.
    """
    if not (lon_min < lon_max and lat_min < lat_max):
        raise ValueError("bounding box needs lon_min < lon_max and lat_min < lat_max")
    if inclusive:
        keep = (g.lon >= lon_min) & (g.lon <= lon_max) & (g.lat >= lat_min) & (g.lat <= lat_max)
    else:
        keep = (g.lon > lon_min) & (g.lon < lon_max) & (g.lat > lat_min) & (g.lat < lat_max)
    old_ids = np.flatnonzero(keep)
    if old_ids.size == 0:
        raise EmptyGraphError("bounding box excludes every node")
    id_map = {int(old): new for new, old in enumerate(old_ids)}
    edges = tuple(sorted((id_map[u], id_map[v]) for u, v in g.edges if u in id_map and v in id_map))
    return Graph(g.lon[old_ids].copy(), g.lat[old_ids].copy(), edges, id_map=id_map)


def write_graph(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{g.n_nodes} {g.n_edges}\n")
        for i in range(g.n_nodes):
            f.write(f"{i} {float(g.lon[i])!r} {float(g.lat[i])!r}\n")
        for u, v in g.edges:
            f.write(f"{u} {v} {g.weight(u, v):.17g}\n")


def read_graph(path) -> Graph:
    """Inverse of :func:`write_graph` (weights are recomputed, not trusted)."""
    source = str(path)
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    try:
        n, m = (int(p) for p in lines[0].split())
    except (ValueError, IndexError):
        raise GraphParseError(source, 1, "expected 'num_nodes num_edges'") from None
    if len(lines) < 1 + n + m:
        raise GraphParseError(source, len(lines), "file truncated")
    lon, lat, pairs = [], [], []
    for k in range(n):
        parts = lines[1 + k].split()
        if len(parts) != 3 or int(parts[0]) != k:
            raise GraphParseError(source, 2 + k, "expected 'id lon lat' in id order")
        lon.append(float(parts[1]))
        lat.append(float(parts[2]))
    for k in range(m):
        parts = lines[1 + n + k].split()
        if len(parts) != 3:
            raise GraphParseError(source, 2 + n + k, "expected 'u v weight'")
        pairs.append((int(parts[0]), int(parts[1])))
    return from_edges(lon, lat, pairs)
