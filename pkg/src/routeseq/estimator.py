"""scikit-learn style wrapper around the route Seq2Seq models."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .astar import RoutePath, path_cost
from .diffusion import DiffusionSchedule, schedule_default
from .evaluation import PathClass, classify
from .graph import Graph
from .seq2seq import (Seq2SeqModel, TrainConfig, bidirectional_predict, decode_greedy, encode, train)
from .validation import check_pairs, check_routes, infer_n_nodes


class RouteSeq2Seq(TransformerMixin, BaseEstimator):
    """Learn to emit shortest routes from (source, destination) pairs.

    ``fit`` takes routes (node-id sequences or :class:`RoutePath`);
    ``predict`` takes an ``(n, 2)`` array of endpoint pairs and returns one
    route per pair; ``transform`` returns the encoder context vectors.

    Parameters
    ----------
    variant : {"dual", "lstm2rnn", "gru2rnn"}
    hidden : int
        Hidden units per encoder; the dual model's context is twice this.
    diffusion : None, "default" or DiffusionSchedule
        Smooth the decoder's log-softmax and anneal sigma stage by stage
        (overrides ``epochs``).
    graph : Graph, optional
        When given, ``predict`` decodes in both directions and keeps the
        cheapest valid splice, and ``score`` becomes available.
    max_len : int, optional
        Decode length cap; defaults to four times the mean training hop count.
    """

    def __init__(self, variant="dual", hidden=256, d_emb=256, epochs=400, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, grad_clip_norm=5.0, diffusion=None, diffuse_tanh=False,
                 lstm_context="h", init_scale=0.1, max_len=None, seed=0, graph=None, n_nodes=None):
        self.variant = variant
        self.hidden = hidden
        self.d_emb = d_emb
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.grad_clip_norm = grad_clip_norm
        self.diffusion = diffusion
        self.diffuse_tanh = diffuse_tanh
        self.lstm_context = lstm_context
        self.init_scale = init_scale
        self.max_len = max_len
        self.seed = seed
        self.graph = graph
        self.n_nodes = n_nodes

    def _schedule(self) -> DiffusionSchedule | None:
        if self.diffusion is None:
            return None
        if isinstance(self.diffusion, DiffusionSchedule):
            return self.diffusion
        if self.diffusion == "default":
            return schedule_default()
        return DiffusionSchedule.from_string(str(self.diffusion))

    def _resolve_n_nodes(self, routes) -> int:
        if self.graph is not None:
            return self.graph.n_nodes
        if self.n_nodes is not None:
            return int(self.n_nodes)
        return infer_n_nodes(routes)

    def fit(self, X, y=None):
        routes = check_routes(X, self.graph.n_nodes if self.graph is not None else self.n_nodes)
        n_nodes = self._resolve_n_nodes(routes)
        cfg = TrainConfig(epochs=self.epochs, lr=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
                          seed=self.seed, grad_clip_norm=self.grad_clip_norm, schedule=self._schedule(),
                          diffuse_tanh=self.diffuse_tanh)
        model = Seq2SeqModel(self.variant, n_nodes, self.d_emb, self.hidden, self.lstm_context,
                             self.init_scale, self.seed)
        self.model_, curve = train(model, routes, cfg)
        self.loss_curve_ = [(p.epoch, p.sigma, p.mean_nll) for p in curve]
        self.n_nodes_ = n_nodes
        mean_hops = sum(len(r) - 1 for r in routes) / len(routes)
        self.max_len_ = self.max_len if self.max_len is not None else max(2, round(4 * mean_hops))
        return self

    def predict(self, X):
        """One route per (source, destination) pair.

        With a graph: a :class:`RoutePath` or None (no valid route found).
        Without: the forward greedy decode as a list of node ids.
        """
        check_is_fitted(self, "model_")
        pairs = check_pairs(X, self.n_nodes_)
        if self.graph is None:
            return [decode_greedy(self.model_, int(s), int(d), self.max_len_) for s, d in pairs]
        return [bidirectional_predict(self.model_, self.graph, int(s), int(d), self.max_len_) for s, d in pairs]

    def transform(self, X):
        """Context vectors, one row per pair (dual models: GRU half first)."""
        check_is_fitted(self, "model_")
        pairs = check_pairs(X, self.n_nodes_)
        return np.stack([encode(self.model_, int(s), int(d)) for s, d in pairs])

    def score(self, X, y=None):
        """Fraction of routes in ``X`` whose prediction matches the A* cost."""
        check_is_fitted(self, "model_")
        if self.graph is None:
            raise ValueError("score needs the estimator's graph")
        truths = [r if isinstance(r, RoutePath) else RoutePath(tuple(r), _cost(self.graph, r))
                  for r in (X.test if hasattr(X, "test") else X)]
        preds = self.predict(truths)
        hits = sum(classify(self.graph, p, t) is PathClass.SHORTEST for p, t in zip(preds, truths))
        return hits / len(truths)


def _cost(g: Graph, nodes) -> float:
    c = path_cost(g, list(nodes))
    if c is None:
        raise ValueError(f"route {list(nodes)} is not valid on the graph")
    return c
