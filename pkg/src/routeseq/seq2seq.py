"""Encoder-decoder route models: LSTM->RNN, GRU->RNN and the dual encoder.

The source and destination embeddings are fed as two encoder time steps
from a zero state; the final hidden state(s) form the context vector that
initialises a vanilla-RNN decoder with a log-softmax output over nodes.
All parameters live in one flat float64 vector so Adam, clipping and
checkpointing work on a single array; named views alias it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import ndmath
from .astar import RoutePath, path_cost
from .cells import (GRUParams, LSTMParams, RNNDecoderParams, gru_backward, gru_step, lstm_backward,
                    lstm_step)
from .diffusion import DiffusionSchedule, kappa, tanh_scale
from .graph import Graph

log = logging.getLogger(__name__)

VARIANTS = ("lstm2rnn", "gru2rnn", "dual")


class TrainingAborted(FloatingPointError):
    def __init__(self, message: str, epoch: int, route: int):
        super().__init__(f"{message} (epoch {epoch}, route {route})")
        self.epoch = epoch
        self.route = route


@dataclass
class ParamTree:
    """Named views over one flat vector, grouped per component."""

    flat: np.ndarray
    views: dict[str, np.ndarray]
    E: np.ndarray
    lstm: LSTMParams | None
    gru: GRUParams | None
    dec: RNNDecoderParams


class Seq2SeqModel:
    """Embedding + encoder(s) + RNN decoder over a vocabulary of graph nodes.

    Token ids ``0..n_nodes-1`` are nodes; id ``n_nodes`` is a reserved GO
    token that decoding never consumes nor emits.
    """

    def __init__(self, variant: str, n_nodes: int, d_emb: int = 256, d_h_enc: int = 256,
                 lstm_context: str = "h", init_scale: float = 0.1, seed: int = 0):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if lstm_context not in ("h", "hc"):
            raise ValueError("lstm_context must be 'h' or 'hc'")
        if n_nodes < 2 or d_emb < 1 or d_h_enc < 1:
            raise ValueError("need n_nodes >= 2 and positive sizes")
        self.variant = variant
        self.n_nodes = n_nodes
        self.vocab = n_nodes + 1
        self.d_emb = d_emb
        self.d_h_enc = d_h_enc
        self.lstm_context = lstm_context
        self.init_scale = init_scale
        self.seed = seed
        self.has_lstm = variant in ("lstm2rnn", "dual")
        self.has_gru = variant in ("gru2rnn", "dual")
        lstm_w = d_h_enc * (2 if lstm_context == "hc" else 1)
        self.d_ctx = (d_h_enc if self.has_gru else 0) + (lstm_w if self.has_lstm else 0)

        V, E, H, D = self.vocab, d_emb, d_h_enc, self.d_ctx
        layout = [("emb.E", (V, E))]
        if self.has_lstm:
            layout += [("enc.lstm.A", (4 * H, E)), ("enc.lstm.B", (4 * H, H)), ("enc.lstm.b", (4 * H,))]
        if self.has_gru:
            layout += [("enc.gru.A", (3 * H, E)), ("enc.gru.B", (3 * H, H)), ("enc.gru.b", (3 * H,))]
        layout += [("dec.rnn.A", (D, E)), ("dec.rnn.B", (D, D)), ("dec.rnn.b", (D,)),
                   ("dec.rnn.C", (V, D)), ("dec.rnn.c", (V,))]
        self.layout = layout
        self.size = sum(math.prod(s) for _, s in layout)
        self.params = self.bind(ndmath.seeded_init(self.size, init_scale, seed))

    @property
    def theta(self) -> np.ndarray:
        return self.params.flat

    def bind(self, flat: np.ndarray) -> ParamTree:
        if flat.shape != (self.size,):
            raise ValueError(f"flat parameter vector must have length {self.size}")
        views, pos = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            views[name] = flat[pos:pos + n].reshape(shape)
            pos += n
        lstm = gru = None
        if self.has_lstm:
            lstm = LSTMParams(views["enc.lstm.A"], views["enc.lstm.B"], views["enc.lstm.b"])
        if self.has_gru:
            gru = GRUParams(views["enc.gru.A"], views["enc.gru.B"], views["enc.gru.b"])
        dec = RNNDecoderParams(*(views[f"dec.rnn.{k}"] for k in "ABbCc"))
        return ParamTree(flat, views, views["emb.E"], lstm, gru, dec)

    def new_grads(self) -> ParamTree:
        return self.bind(np.zeros(self.size))

    def block_of(self, index: int) -> str:
        """Name of the parameter block containing flat index ``index``."""
        pos = 0
        for name, shape in self.layout:
            pos += math.prod(shape)
            if index < pos:
                return name
        raise IndexError(index)

    def check_node(self, u) -> int:
        if isinstance(u, (bool, np.bool_)) or not isinstance(u, (int, np.integer)):
            raise TypeError(f"node id must be an integer, got {type(u).__name__}")
        if not 0 <= u < self.n_nodes:
            raise IndexError(f"node id {u} outside 0..{self.n_nodes - 1}")
        return int(u)

    def copy(self) -> "Seq2SeqModel":
        other = object.__new__(Seq2SeqModel)
        other.__dict__.update(self.__dict__)
        other.params = other.bind(self.theta.copy())
        return other

    def header(self) -> dict:
        return {"variant": self.variant, "n_nodes": self.n_nodes, "vocab": self.vocab,
                "d_emb": self.d_emb, "d_h_enc": self.d_h_enc, "d_ctx": self.d_ctx,
                "lstm_context": self.lstm_context, "init_scale": self.init_scale, "seed": self.seed}

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Per-gate tensor views under their checkpoint names."""
        p = self.params
        out = {"emb.E": p.E}
        if p.lstm is not None:
            for part in "ABb":
                for gate in "ijfo":
                    out[f"enc.lstm.{part}_{gate}"] = p.lstm.gate(part, gate)
        if p.gru is not None:
            for part in "ABb":
                for gate in "zrh":
                    out[f"enc.gru.{part}_{gate}"] = p.gru.gate(part, gate)
        for k in "ABbCc":
            out[f"dec.rnn.{k}"] = p.views[f"dec.rnn.{k}"]
        return out


def save_model(m: Seq2SeqModel, path, config: dict | None = None) -> None:
    header = m.header()
    if config is not None:
        header["config"] = config
    ndmath.save_tensors(path, m.named_tensors(), header)


def load_model(path) -> tuple[Seq2SeqModel, dict]:
    tensors, header = ndmath.load_tensors(path)
    if header is None or "variant" not in header:
        raise ValueError(f"{path}: checkpoint has no model header")
    m = Seq2SeqModel(header["variant"], header["n_nodes"], header["d_emb"], header["d_h_enc"],
                     header.get("lstm_context", "h"), header.get("init_scale", 0.1), header.get("seed", 0))
    m.params.flat[:] = 0.0
    expected = m.named_tensors()
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise ValueError(f"{path}: tensor set mismatch (missing {missing}, unexpected {extra})")
    for name, view in expected.items():
        if tensors[name].shape != view.shape:
            raise ValueError(f"{path}: tensor {name} has shape {tensors[name].shape}, expected {view.shape}")
        view[...] = tensors[name]
    return m, header


# --- encoder ----------------------------------------------------------------

def _encode(m: Seq2SeqModel, src: int, dst: int):
    p = m.params
    x1, x2 = p.E[src], p.E[dst]
    H = m.d_h_enc
    parts, cache = [], {}
    if m.has_gru:
        h1, c1 = gru_step(x1, np.zeros(H), p.gru)
        h2, c2 = gru_step(x2, h1, p.gru)
        parts.append(h2)
        cache["gru"] = (c1, c2)
    if m.has_lstm:
        h1, s1, c1 = lstm_step(x1, np.zeros(H), np.zeros(H), p.lstm)
        h2, s2, c2 = lstm_step(x2, h1, s1, p.lstm)
        parts.append(h2)
        if m.lstm_context == "hc":
            parts.append(s2)
        cache["lstm"] = (c1, c2)
    return np.concatenate(parts), cache


def _encode_backward(m: Seq2SeqModel, src: int, dst: int, cache, dw, g: ParamTree) -> None:
    p = m.params
    H = m.d_h_enc
    pos = 0
    if m.has_gru:
        c1, c2 = cache["gru"]
        _, dx2, dh1 = gru_backward(c2, dw[:H], p.gru, g.gru)
        _, dx1, _ = gru_backward(c1, dh1, p.gru, g.gru)
        g.E[dst] += dx2
        g.E[src] += dx1
        pos = H
    if m.has_lstm:
        dh2 = dw[pos:pos + H]
        dc2 = dw[pos + H:pos + 2 * H] if m.lstm_context == "hc" else np.zeros(H)
        c1, c2 = cache["lstm"]
        _, dx2, dh1, dc1 = lstm_backward(c2, dh2, dc2, p.lstm, g.lstm)
        _, dx1, _, _ = lstm_backward(c1, dh1, dc1, p.lstm, g.lstm)
        g.E[dst] += dx2
        g.E[src] += dx1


def encode(m: Seq2SeqModel, src: int, dst: int) -> np.ndarray:
    """Context vector for a (source, destination) query.

    Dual models stack ``[gru_h ; lstm_h]`` in that order.
    """
    w, _ = _encode(m, m.check_node(src), m.check_node(dst))
    return w


# --- loss -------------------------------------------------------------------

def _decoder_forward(dec: RNNDecoderParams, E: np.ndarray, w: np.ndarray, inputs, ts: float):
    """Teacher-forced decoder over all steps; returns hidden states and logits."""
    L = len(inputs)
    X = E[inputs]                              # (L, E)
    pre = X @ dec.A.T + dec.b                  # (L, D)
    Hs = np.empty((L + 1, w.shape[0]))
    Hs[0] = w
    B = dec.B
    if ts == 1.0:
        for t in range(L):
            Hs[t + 1] = np.tanh(pre[t] + B @ Hs[t])
    else:
        for t in range(L):
            Hs[t + 1] = np.tanh(ts * (pre[t] + B @ Hs[t]))
    logits = Hs[1:] @ dec.C.T + dec.c          # (L, V)
    return X, Hs, logits


def forward_backward(m: Seq2SeqModel, path: Sequence[int], sigma: float | None = None,
                     grads: ParamTree | None = None, diffuse_tanh: bool = False) -> float:
    """Teacher-forced mean NLL of ``path``; adds its gradient into ``grads``.

    Step t feeds node ``path[t-1]`` and scores ``path[t]``. With ``sigma``
    set, the output log-softmax is replaced by its smoothed form (and, with
    ``diffuse_tanh``, so is the decoder tanh).
    """
    if len(path) < 2:
        raise ValueError("target route needs at least 2 nodes")
    path = [m.check_node(u) for u in path]
    p = m.params
    dec = p.dec
    kap = 1.0 if sigma is None else kappa(sigma)
    ts = tanh_scale(sigma) if (diffuse_tanh and sigma) else 1.0
    w, enc_cache = _encode(m, path[0], path[-1])
    inputs = path[:-1]
    targets = np.asarray(path[1:])
    L = len(inputs)
    X, Hs, logits = _decoder_forward(dec, p.E, w, inputs, ts)
    mx = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - mx)
    se = ex.sum(axis=1, keepdims=True)
    lse = (mx + np.log(se)).ravel()
    rows = np.arange(L)
    y_t = kap * logits[rows, targets] - lse
    loss = -float(y_t.sum()) / L
    if grads is None:
        return loss

    dlogits = ex / se
    dlogits[rows, targets] -= kap
    dlogits /= L
    ndmath.add_matmul_tn_(grads.dec.C, dlogits, Hs[1:])
    grads.dec.c += dlogits.sum(axis=0)
    dHout = dlogits @ dec.C                    # (L, D)
    DA = np.empty_like(dHout)
    dh = np.zeros(m.d_ctx)
    BT = dec.B.T
    Hn = Hs[1:]
    for t in range(L - 1, -1, -1):
        da = (dHout[t] + dh) * (1.0 - Hn[t] * Hn[t])
        if ts != 1.0:
            da *= ts
        DA[t] = da
        dh = BT @ da
    ndmath.add_matmul_tn_(grads.dec.B, DA, Hs[:-1])
    ndmath.add_matmul_tn_(grads.dec.A, DA, X)
    grads.dec.b += DA.sum(axis=0)
    np.add.at(grads.E, inputs, DA @ dec.A)
    _encode_backward(m, path[0], path[-1], enc_cache, dh, grads)
    return loss


def step_loss(m: Seq2SeqModel, target: RoutePath | Sequence[int], sigma: float | None = None,
              diffuse_tanh: bool = False) -> tuple[float, ParamTree]:
    """Loss and fresh gradient tree for one route."""
    nodes = target.nodes if isinstance(target, RoutePath) else target
    g = m.new_grads()
    loss = forward_backward(m, nodes, sigma, g, diffuse_tanh)
    return loss, g


# --- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 400
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip_norm: float = 5.0
    schedule: DiffusionSchedule | None = None
    diffuse_tanh: bool = False

    def __post_init__(self):
        if self.schedule is None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not self.grad_clip_norm > 0:
            raise ValueError("gradient clip norm must be positive")

    def epoch_sigmas(self) -> list[float | None]:
        if self.schedule is None:
            return [None] * self.epochs
        return list(self.schedule.sigmas())

    def echo(self) -> dict:
        d = asdict(self)
        d["schedule"] = None if self.schedule is None else self.schedule.to_string()
        return d


@dataclass
class LossPoint:
    epoch: int
    sigma: float | None
    mean_nll: float


def train(m: Seq2SeqModel, routes: Sequence[RoutePath | Sequence[int]], cfg: TrainConfig,
          callback=None) -> tuple[Seq2SeqModel, list[LossPoint]]:
    """Per-route Adam training with BPTT, in place on ``m``.

    Every epoch visits the routes in a fresh order drawn from the stream
    seeded with ``cfg.seed + 1``. Each route's gradient is clipped to global
    norm ``cfg.grad_clip_norm`` before its Adam step. With a schedule, its
    stages run in order and Adam state carries across stages.
    """
    seqs = [list(r.nodes) if isinstance(r, RoutePath) else list(r) for r in routes]
    if not seqs:
        raise ValueError("training set is empty")
    rng = ndmath.XorShiftRandom(cfg.seed + 1)
    g = m.new_grads()
    adam = ndmath.AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    curve: list[LossPoint] = []
    for epoch, sigma in enumerate(cfg.epoch_sigmas(), start=1):
        order = rng.permutation(len(seqs))
        total = 0.0
        for idx in order:
            loss = forward_backward(m, seqs[idx], sigma, g, cfg.diffuse_tanh)
            if not math.isfinite(loss):
                raise TrainingAborted("non-finite loss", epoch, idx)
            norm = math.sqrt(float(g.flat @ g.flat))
            if not math.isfinite(norm):
                bad = int(np.flatnonzero(~np.isfinite(g.flat))[0])
                raise TrainingAborted(f"non-finite gradient in {m.block_of(bad)}", epoch, idx)
            scale = cfg.grad_clip_norm / norm if norm > cfg.grad_clip_norm else 1.0
            ndmath.adam_flat_(m.theta, g.flat, adam, scale)
            total += loss
        point = LossPoint(epoch, sigma, total / len(seqs))
        curve.append(point)
        log.info("epoch %d sigma=%s mean_nll=%.6f", epoch, sigma, point.mean_nll)
        if callback is not None:
            callback(point)
    return m, curve


def write_loss_curve(curve: Sequence[LossPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,sigma,mean_nll\n")
        for pt in curve:
            s = "" if pt.sigma is None else repr(pt.sigma)
            f.write(f"{pt.epoch},{s},{pt.mean_nll!r}\n")


# --- inference --------------------------------------------------------------

def decode_greedy(m: Seq2SeqModel, src: int, dst: int, max_len: int) -> list[int]:
    """Decode from the model's own predictions until ``dst`` or ``max_len`` nodes.

    Each step takes the most probable node other than the one just emitted
    (and never the GO token). Returns ``[src, emissions...]``.
    """
    src, dst = m.check_node(src), m.check_node(dst)
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    if src == dst:
        return [src]
    p = m.params
    dec = p.dec
    h, _ = _encode(m, src, dst)
    out = [src]
    while len(out) < max_len:
        prev = out[-1]
        h = np.tanh(dec.A @ p.E[prev] + dec.B @ h + dec.b)
        logits = dec.C[:m.n_nodes] @ h + dec.c[:m.n_nodes]
        logits[prev] = -np.inf
        nxt = int(np.argmax(logits))
        out.append(nxt)
        if nxt == dst:
            break
    return out


def bidirectional_candidates(fwd: Sequence[int], bwd: Sequence[int]) -> list[list[int]]:
    """Forward path, reversed backward path, and every splice through a shared node."""
    rb = list(reversed(bwd))
    cands = [list(fwd), rb]
    where: dict[int, list[int]] = {}
    for j, u in enumerate(rb):
        where.setdefault(u, []).append(j)
    for i, u in enumerate(fwd):
        for j in where.get(u, ()):
            cands.append(list(fwd[:i + 1]) + rb[j + 1:])
    return cands


def bidirectional_predict(m: Seq2SeqModel, g: Graph, src: int, dst: int, max_len: int) -> RoutePath | None:
    """Cheapest valid src->dst route among forward, backward and spliced decodes."""
    fwd = decode_greedy(m, src, dst, max_len)
    bwd = decode_greedy(m, dst, src, max_len)
    best = None
    for cand in bidirectional_candidates(fwd, bwd):
        if cand[0] != src or cand[-1] != dst:
            continue
        cost = path_cost(g, cand)
        if cost is None:
            continue
        if best is None or cost < best.cost:
            best = RoutePath(tuple(cand), cost)
    return best


def default_max_len(routes: Sequence[RoutePath]) -> int:
    """Four times the mean hop count of ``routes``."""
    if not routes:
        raise ValueError("need at least one route")
    return max(2, round(4 * sum(r.hops for r in routes) / len(routes)))
