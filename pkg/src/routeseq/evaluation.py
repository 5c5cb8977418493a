"""Scoring predicted routes against A* and context-matrix rank analysis."""
from __future__ import annotations

import csv
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .astar import RouteDataset, RoutePath, path_cost
from .graph import Graph
from .seq2seq import Seq2SeqModel, bidirectional_predict, default_max_len, encode


class PathClass(enum.Enum):
    SHORTEST = "shortest"
    SUCCESSFUL = "successful"
    FAILED = "failed"

    @property
    def successful(self) -> bool:
        return self is not PathClass.FAILED


def classify(g: Graph, predicted: RoutePath | Sequence[int] | None, truth: RoutePath) -> PathClass:
    """Failed unless ``predicted`` is a valid route with the truth's endpoints;
    Shortest when its cost also matches the A* cost (relative 1e-9)."""
    if predicted is None:
        return PathClass.FAILED
    nodes = predicted.nodes if isinstance(predicted, RoutePath) else tuple(predicted)
    if not nodes or nodes[0] != truth.src or nodes[-1] != truth.dst:
        return PathClass.FAILED
    cost = path_cost(g, nodes)
    if cost is None:
        return PathClass.FAILED
    if abs(cost - truth.cost) <= 1e-9 * max(1.0, truth.cost):
        return PathClass.SHORTEST
    return PathClass.SUCCESSFUL


@dataclass(frozen=True)
class PairRecord:
    src: int
    dst: int
    cls: PathClass
    pred_cost: float | None
    astar_cost: float
    exact_match: bool


@dataclass
class EvalReport:
    records: list[PairRecord]

    @property
    def n_test(self) -> int:
        return len(self.records)

    def _rate(self, pred) -> float:
        return sum(1 for r in self.records if pred(r)) / self.n_test if self.records else 0.0

    @property
    def shortest_rate(self) -> float:
        return self._rate(lambda r: r.cls is PathClass.SHORTEST)

    @property
    def successful_rate(self) -> float:
        return self._rate(lambda r: r.cls.successful)

    @property
    def exact_rate(self) -> float:
        """Fraction reproducing the A* node sequence itself."""
        return self._rate(lambda r: r.exact_match)

    def summary(self) -> str:
        return f"shortest={100 * self.shortest_rate:.1f}% successful={100 * self.successful_rate:.1f}%"


def _predict_one(args):
    m, g, truth, max_len = args
    pred = bidirectional_predict(m, g, truth.src, truth.dst, max_len)
    cls = classify(g, pred, truth)
    return PairRecord(truth.src, truth.dst, cls, None if pred is None else pred.cost, truth.cost,
                      pred is not None and pred.nodes == truth.nodes)


def evaluate_routes(m: Seq2SeqModel, routes: Sequence[RoutePath], g: Graph, max_len: int,
                    jobs: int = 1) -> EvalReport:
    if not routes:
        raise ValueError("no routes to evaluate")
    if g.n_nodes != m.n_nodes:
        raise ValueError(f"model covers {m.n_nodes} nodes but graph has {g.n_nodes}")
    work = [(m, g, r, max_len) for r in routes]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            records = list(ex.map(_predict_one, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        records = [_predict_one(w) for w in work]
    return EvalReport(records)


def evaluate(m: Seq2SeqModel, ds: RouteDataset, g: Graph, max_len: int | None = None,
             jobs: int = 1) -> EvalReport:
    """Bidirectional prediction and classification over the test split.

    ``max_len`` defaults to four times the mean training hop count.
    """
    if not ds.test_idx:
        raise ValueError("test split is empty")
    if max_len is None:
        max_len = default_max_len(ds.train or ds.test)
    return evaluate_routes(m, ds.test, g, max_len, jobs)


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["src", "dst", "class", "pred_cost", "astar_cost"])
        for r in report.records:
            pred = "" if r.pred_cost is None else f"{r.pred_cost:.17g}"
            w.writerow([r.src, r.dst, r.cls.value, pred, f"{r.astar_cost:.17g}"])
        w.writerow(["n", "shortest_rate", "successful_rate"])
        w.writerow([report.n_test, repr(report.shortest_rate), repr(report.successful_rate)])


def numerical_rank(a: np.ndarray, tol: float | None = None) -> int:
    """Count of singular values above ``tol * sigma_max``.

    ``tol`` defaults to ``1e-10 * max(rows, cols)``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("need a non-empty 2-D matrix")
    if tol is None:
        tol = 1e-10 * max(a.shape)
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def rank_analysis(contexts: np.ndarray, split: int | None = None, tol: float | None = None) -> tuple[int, int, int]:
    """Ranks of the GRU half, the LSTM half and the full stacked context matrix.

    Rows are routes; columns ``[:split]`` are the GRU part (``split``
    defaults to half the width).
    """
    contexts = np.asarray(contexts, dtype=np.float64)
    if contexts.ndim != 2 or contexts.shape[0] < 1:
        raise ValueError("contexts must be a 2-D matrix with at least one row")
    if split is None:
        split = contexts.shape[1] // 2
    return (numerical_rank(contexts[:, :split], tol), numerical_rank(contexts[:, split:], tol),
            numerical_rank(contexts, tol))


def context_matrix(m: Seq2SeqModel, routes: Sequence[RoutePath]) -> np.ndarray:
    return np.stack([encode(m, r.src, r.dst) for r in routes])


def default_rank_tol(contexts: np.ndarray) -> float:
    return 1e-10 * max(np.shape(contexts))
