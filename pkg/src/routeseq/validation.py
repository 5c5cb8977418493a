"""Input checks shared by the estimator and the CLI."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .astar import RouteDataset, RoutePath


def check_routes(X, n_nodes: int | None = None, min_len: int = 2) -> list[list[int]]:
    """Coerce routes (RoutePath objects, id sequences or a RouteDataset's
    training split) into lists of ints and validate them."""
    if isinstance(X, RouteDataset):
        X = X.train
    out = []
    for k, r in enumerate(X):
        nodes = list(r.nodes) if isinstance(r, RoutePath) else [int(u) for u in r]
        if len(nodes) < min_len:
            raise ValueError(f"route {k} has {len(nodes)} nodes; need at least {min_len}")
        if n_nodes is not None and not all(0 <= u < n_nodes for u in nodes):
            raise ValueError(f"route {k} references a node outside 0..{n_nodes - 1}")
        if any(a == b for a, b in zip(nodes[:-1], nodes[1:])):
            raise ValueError(f"route {k} repeats a node on consecutive steps")
        out.append(nodes)
    if not out:
        raise ValueError("no routes given")
    return out


def check_pairs(X, n_nodes: int) -> np.ndarray:
    """(source, destination) queries as an (n, 2) int array.

    Routes are accepted too; their endpoints become the query.
    """
    if isinstance(X, RouteDataset):
        X = X.test
    if len(X) and isinstance(X[0], RoutePath):
        X = [(r.src, r.dst) for r in X]
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of (source, destination) pairs, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("no pairs given")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("node ids must be integers")
        arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= n_nodes:
        raise ValueError(f"node ids must lie in 0..{n_nodes - 1}")
    return arr.astype(np.int64)


def infer_n_nodes(routes: Sequence[Sequence[int]]) -> int:
    return max(max(r) for r in routes) + 1
