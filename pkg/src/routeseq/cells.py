"""LSTM, GRU and vanilla-RNN cells with exact backward passes.

Gate matrices are stored stacked so one matrix product serves all gates:
LSTM rows are ordered (i, j, f, o) and GRU rows (z, r, h). Per-gate views
(``A_i``, ``B_z``, ...) alias the stacked storage. Backward functions
accumulate parameter gradients into a parameter object of the same type.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .ndmath import add_outer_


def logistic(x):
    """1 / (1 + exp(-x)), evaluated without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    inv = 1.0 / (1.0 + e)
    return np.where(x >= 0, inv, e * inv)


def logsumexp(x) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


def log_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - logsumexp(x)


class _Params:
    """Shared plumbing for the parameter dataclasses."""

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def zeros_like(self):
        return type(self)(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.arrays().items()})


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass
class LSTMParams(_Params):
    A: np.ndarray  # (4H, E)
    B: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        h4, e = self.A.shape
        _require(h4 % 4 == 0, "LSTM input map must have 4*H rows")
        h = h4 // 4
        _require(self.B.shape == (h4, h), f"LSTM recurrent map must be {(h4, h)}, got {self.B.shape}")
        _require(self.b.shape == (h4,), f"LSTM bias must be {(h4,)}, got {self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.B.shape[1]

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    def gate(self, name: str, gate: str) -> np.ndarray:
        k = "ijfo".index(gate)
        h = self.hidden
        return getattr(self, name)[k * h:(k + 1) * h]

    A_i = property(lambda s: s.gate("A", "i"))
    A_j = property(lambda s: s.gate("A", "j"))
    A_f = property(lambda s: s.gate("A", "f"))
    A_o = property(lambda s: s.gate("A", "o"))
    B_i = property(lambda s: s.gate("B", "i"))
    B_j = property(lambda s: s.gate("B", "j"))
    B_f = property(lambda s: s.gate("B", "f"))
    B_o = property(lambda s: s.gate("B", "o"))
    b_i = property(lambda s: s.gate("b", "i"))
    b_j = property(lambda s: s.gate("b", "j"))
    b_f = property(lambda s: s.gate("b", "f"))
    b_o = property(lambda s: s.gate("b", "o"))


@dataclass
class GRUParams(_Params):
    A: np.ndarray  # (3H, E)
    B: np.ndarray  # (3H, H)
    b: np.ndarray  # (3H,)

    def __post_init__(self):
        h3, e = self.A.shape
        _require(h3 % 3 == 0, "GRU input map must have 3*H rows")
        h = h3 // 3
        _require(self.B.shape == (h3, h), f"GRU recurrent map must be {(h3, h)}, got {self.B.shape}")
        _require(self.b.shape == (h3,), f"GRU bias must be {(h3,)}, got {self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.B.shape[1]

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    def gate(self, name: str, gate: str) -> np.ndarray:
        k = "zrh".index(gate)
        h = self.hidden
        return getattr(self, name)[k * h:(k + 1) * h]

    A_z = property(lambda s: s.gate("A", "z"))
    A_r = property(lambda s: s.gate("A", "r"))
    A_h = property(lambda s: s.gate("A", "h"))
    B_z = property(lambda s: s.gate("B", "z"))
    B_r = property(lambda s: s.gate("B", "r"))
    B_h = property(lambda s: s.gate("B", "h"))
    b_z = property(lambda s: s.gate("b", "z"))
    b_r = property(lambda s: s.gate("b", "r"))
    b_h = property(lambda s: s.gate("b", "h"))


@dataclass
class RNNDecoderParams(_Params):
    A: np.ndarray  # (H, E)
    B: np.ndarray  # (H, H)
    b: np.ndarray  # (H,)
    C: np.ndarray  # (V, H)
    c: np.ndarray  # (V,)

    def __post_init__(self):
        h, e = self.A.shape
        v = self.C.shape[0]
        _require(self.B.shape == (h, h), f"decoder recurrent map must be {(h, h)}, got {self.B.shape}")
        _require(self.b.shape == (h,), "decoder bias length must equal hidden size")
        _require(self.C.shape == (v, h), f"output map must have {h} columns, got {self.C.shape}")
        _require(self.c.shape == (v,), "output bias length must equal vocabulary size")

    @property
    def hidden(self) -> int:
        return self.B.shape[0]

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    @property
    def vocab(self) -> int:
        return self.C.shape[0]


def _check_step(x, h, p) -> None:
    if x.shape != (p.d_in,):
        raise ValueError(f"input must have shape {(p.d_in,)}, got {x.shape}")
    if h.shape != (p.hidden,):
        raise ValueError(f"state must have shape {(p.hidden,)}, got {h.shape}")


# --- LSTM -------------------------------------------------------------------

def lstm_step(x, h, c, p: LSTMParams):
    """One LSTM step. Returns ``(h_new, c_new, cache)``."""
    _check_step(x, h, p)
    if c.shape != h.shape:
        raise ValueError("cell state and hidden state shapes differ")
    H = p.hidden
    a = p.A @ x + p.B @ h + p.b
    i = logistic(a[:H])
    j = np.tanh(a[H:2 * H])
    f = logistic(a[2 * H:3 * H])
    o = logistic(a[3 * H:])
    c_new = f * c + i * j
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, j, f, o, tc)


def lstm_backward(cache, dh_new, dc_new, p: LSTMParams, grads: LSTMParams | None = None):
    """Backward through one LSTM step.

    Returns ``(grads, dx, dh, dc)`` where ``grads`` has had this step's
    parameter gradients added.
    """
    x, h, c, i, j, f, o, tc = cache
    if dh_new.shape != h.shape or dc_new.shape != c.shape:
        raise ValueError("upstream gradient shape does not match cached state")
    if grads is None:
        grads = p.zeros_like()
    dc_t = dc_new + dh_new * o * (1.0 - tc * tc)
    da = np.concatenate([
        dc_t * j * i * (1.0 - i),
        dc_t * i * (1.0 - j * j),
        dc_t * c * f * (1.0 - f),
        dh_new * tc * o * (1.0 - o),
    ])
    add_outer_(grads.A, da, x)
    add_outer_(grads.B, da, h)
    grads.b += da
    return grads, p.A.T @ da, p.B.T @ da, dc_t * f


# --- GRU --------------------------------------------------------------------

def gru_step(x, h, p: GRUParams):
    """One GRU step. Returns ``(h_new, cache)``."""
    _check_step(x, h, p)
    H = p.hidden
    ax = p.A @ x + p.b
    azr = ax[:2 * H] + p.B[:2 * H] @ h
    z = logistic(azr[:H])
    r = logistic(azr[H:])
    rh = r * h
    ht = np.tanh(ax[2 * H:] + p.B[2 * H:] @ rh)
    h_new = z * h + (1.0 - z) * ht
    return h_new, (x, h, z, r, rh, ht)


def gru_backward(cache, dh_new, p: GRUParams, grads: GRUParams | None = None):
    """Backward through one GRU step. Returns ``(grads, dx, dh)``."""
    x, h, z, r, rh, ht = cache
    if dh_new.shape != h.shape:
        raise ValueError("upstream gradient shape does not match cached state")
    if grads is None:
        grads = p.zeros_like()
    H = p.hidden
    dah = dh_new * (1.0 - z) * (1.0 - ht * ht)
    drh = p.B[2 * H:].T @ dah
    daz = dh_new * (h - ht) * z * (1.0 - z)
    dar = drh * h * r * (1.0 - r)
    dzr = np.concatenate([daz, dar])
    add_outer_(grads.A, np.concatenate([dzr, dah]), x)
    add_outer_(grads.B[:2 * H], dzr, h)
    add_outer_(grads.B[2 * H:], dah, rh)
    grads.b[:2 * H] += dzr
    grads.b[2 * H:] += dah
    dx = p.A[:2 * H].T @ dzr + p.A[2 * H:].T @ dah
    dh = dh_new * z + drh * r + p.B[:2 * H].T @ dzr
    return grads, dx, dh


# --- vanilla RNN decoder ----------------------------------------------------

def rnn_step(x, h, p: RNNDecoderParams, kappa: float = 1.0, tanh_scale: float = 1.0):
    """One decoder step. Returns ``(h_new, y, cache)``.

    ``y = kappa * logits - logsumexp(logits)`` with ``logits = C h_new + c``;
    ``kappa = 1`` is the ordinary log-softmax. ``tanh_scale`` multiplies the
    pre-activation of the recurrence (1 leaves it untouched).
    """
    _check_step(x, h, p)
    a = p.A @ x + p.B @ h + p.b
    h_new = np.tanh(tanh_scale * a) if tanh_scale != 1.0 else np.tanh(a)
    logits = p.C @ h_new + p.c
    m = logits.max()
    e = np.exp(logits - m)
    s = e.sum()
    lse = m + math.log(s)
    y = (kappa * logits - lse) if kappa != 1.0 else logits - lse
    return h_new, y, (x, h, h_new, e / s, kappa, tanh_scale)


def rnn_backward(cache, dy, dh_next, p: RNNDecoderParams, grads: RNNDecoderParams | None = None):
    """Backward through one decoder step given dL/dy and dL/dh_new.

    Returns ``(grads, dx, dh)``.
    """
    x, h, h_new, probs, kappa, tanh_scale = cache
    if dy.shape != probs.shape or dh_next.shape != h_new.shape:
        raise ValueError("upstream gradient shape does not match cached step")
    if grads is None:
        grads = p.zeros_like()
    dlogits = kappa * dy - probs * dy.sum()
    return _rnn_backward_logits(x, h, h_new, tanh_scale, dlogits, dh_next, p, grads)


def rnn_backward_nll(cache, target: int, weight: float, dh_next, p: RNNDecoderParams,
                     grads: RNNDecoderParams):
    """Fast path of :func:`rnn_backward` for the loss ``-weight * y[target]``."""
    x, h, h_new, probs, kappa, tanh_scale = cache
    dlogits = probs * weight
    dlogits[target] -= kappa * weight
    return _rnn_backward_logits(x, h, h_new, tanh_scale, dlogits, dh_next, p, grads)


def _rnn_backward_logits(x, h, h_new, tanh_scale, dlogits, dh_next, p, grads):
    add_outer_(grads.C, dlogits, h_new)
    grads.c += dlogits
    dh_new = p.C.T @ dlogits + dh_next
    da = dh_new * (1.0 - h_new * h_new)
    if tanh_scale != 1.0:
        da *= tanh_scale
    add_outer_(grads.A, da, x)
    add_outer_(grads.B, da, h)
    grads.b += da
    return grads, p.A.T @ da, p.B.T @ da


# --- embedding --------------------------------------------------------------

def embed(token: int, E: np.ndarray) -> np.ndarray:
    if not 0 <= token < E.shape[0]:
        raise IndexError(f"token id {token} outside vocabulary of size {E.shape[0]}")
    return E[token].copy()


def embed_backward(token: int, dx, dE: np.ndarray) -> np.ndarray:
    if not 0 <= token < dE.shape[0]:
        raise IndexError(f"token id {token} outside vocabulary of size {dE.shape[0]}")
    dE[token] += dx
    return dE
