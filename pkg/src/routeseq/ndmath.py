"""Dense float64 numerics: a small linear-algebra kit, a seeded generator,
Adam, a central-difference gradient oracle and the checkpoint container.

Checkpoint container layout (all integers little-endian)::

    b"RSQ1"
    repeated until EOF:
        u32  name length in bytes
        ...  name, UTF-8
        u64  rows
        u64  cols            (0 marks a 1-D tensor of length ``rows``)
        f64  rows*cols (or rows) values, row-major, little-endian

A record named ``__header__`` is the one exception: ``cols`` is 0 and the
payload is ``rows`` bytes of UTF-8 JSON instead of floats.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import blas

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

MAGIC = b"RSQ1"
HEADER_RECORD = "__header__"


class NonFiniteError(FloatingPointError):
    pass


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.isfinite(a).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")


def _as1(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    return x


def _as2(w, name="W") -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {w.shape}")
    return w


def matvec(w, x) -> np.ndarray:
    w, x = _as2(w), _as1(x)
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"cannot multiply {w.shape} matrix by length-{x.shape[0]} vector")
    out = w @ x
    _check_finite("matvec result", out)
    return out


def add(a, b) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    out = a + b
    _check_finite("add result", out)
    return out


def hadamard(a, b) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    out = a * b
    _check_finite("hadamard result", out)
    return out


def affine(w, x, b) -> np.ndarray:
    """``w @ x + b``."""
    b = _as1(b, "b")
    y = matvec(w, x)
    if y.shape != b.shape:
        raise ValueError(f"bias length {b.shape[0]} does not match output length {y.shape[0]}")
    return add(y, b)


def add_outer_(dst: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``dst += outer(u, v)`` in place, without a temporary."""
    if dst.flags.c_contiguous and dst.dtype == np.float64:
        out = blas.dger(1.0, v, u, a=dst.T, overwrite_a=1)
        if np.shares_memory(out, dst):
            return dst
    dst += np.outer(u, v)
    return dst


def add_matmul_tn_(dst: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``dst += a.T @ b`` in place, without a temporary."""
    if dst.flags.c_contiguous and dst.dtype == np.float64:
        out = blas.dgemm(1.0, b, a, beta=1.0, c=dst.T, trans_a=1, overwrite_c=1)
        if np.shares_memory(out, dst):
            return dst
    dst += a.T @ b
    return dst


# --- random numbers ---------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class XorShiftRandom:
    """Lane-parallel xorshift64* generator seeded through splitmix64.

    Version ``xorshift64*-lanes1024/splitmix64 v1``: 1024 independent
    xorshift64* lanes (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D)
    whose initial states are successive splitmix64 outputs of ``seed``.
    Each generator step advances every lane once and emits the lane outputs
    in lane order; the output stream does not depend on how requests are
    chunked.
    """

    VERSION = "xorshift64*-lanes1024/splitmix64 v1"
    LANES = 1024
    _MULT = np.uint64(0x2545F4914F6CDD1D)

    def __init__(self, seed: int):
        state = int(seed) & _MASK64
        lanes = []
        for _ in range(self.LANES):
            state, z = splitmix64(state)
            lanes.append(z or 0x9E3779B97F4A7C15)
        self._state = np.array(lanes, dtype=np.uint64)
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0

    def _step(self) -> np.ndarray:
        x = self._state
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        return x * self._MULT

    def bits(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        out = np.empty(n, dtype=np.uint64)
        filled = 0
        while filled < n:
            if self._pos == self._buf.size:
                need = n - filled
                steps = max(1, -(-need // self.LANES))
                self._buf = np.concatenate([self._step() for _ in range(steps)])
                self._pos = 0
            take = min(n - filled, self._buf.size - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out

    def random(self, size: int | tuple[int, ...] | None = None):
        """Uniform doubles on [0, 1) with 53 random bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.bits(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if size is None else u.reshape(size)

    def integers(self, high: int, size=None):
        """Uniform integers on [0, high)."""
        if high < 1:
            raise ValueError("high must be >= 1")
        u = self.random(size)
        if size is None:
            return min(int(u * high), high - 1)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def uniform(self, low: float, high: float, size):
        return low + (high - low) * self.random(size)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        perm = list(range(n))
        if n < 2:
            return perm
        draws = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(draws[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def seeded_init(shape, scale: float, seed: int) -> np.ndarray:
    """I.i.d. uniform weights on [-scale, scale] from :class:`XorShiftRandom`."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    return XorShiftRandom(seed).uniform(-scale, scale, shape)


# --- optimisation -----------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], **kw) -> "AdamState":
        st = cls(**kw)
        for k, p in params.items():
            st.m[k] = np.zeros_like(p, dtype=np.float64)
            st.v[k] = np.zeros_like(p, dtype=np.float64)
        return st


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place.

    Every gradient is checked before anything is modified, so a rejected
    update leaves parameters and state untouched.
    """
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k!r}")
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k!r}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {k!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    step = state.lr / (1.0 - b1 ** state.t)
    vcorr = 1.0 / (1.0 - b2 ** state.t)
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v * vcorr)
        denom += state.eps
        params[k] -= step * m / denom
    return params, state


def _adam_fused_py(theta, g, m, v, scale, lr_t, b1, b2, vcorr, eps):
    for i in range(theta.shape[0]):
        gi = g[i] * scale
        g[i] = 0.0
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        theta[i] -= lr_t * mi / (math.sqrt(vi * vcorr) + eps)


_adam_fused = numba.njit(cache=True, nogil=True)(_adam_fused_py) if numba is not None else None


def adam_flat_(theta: np.ndarray, g: np.ndarray, state: AdamState, scale: float = 1.0) -> None:
    """Adam on flat vectors in one pass; consumes ``g`` (scaled by ``scale``
    first, zeroed afterwards). Same arithmetic as :func:`adam_step`."""
    state.t += 1
    key = "theta"
    if key not in state.m:
        state.m[key] = np.zeros_like(theta)
        state.v[key] = np.zeros_like(theta)
    lr_t = state.lr / (1.0 - state.beta1 ** state.t)
    vcorr = 1.0 / (1.0 - state.beta2 ** state.t)
    if _adam_fused is not None:
        _adam_fused(theta, g, state.m[key], state.v[key], scale, lr_t, state.beta1, state.beta2, vcorr, state.eps)
        return
    if scale != 1.0:
        g *= scale
    adam_step({key: theta}, {key: g}, state)
    g.fill(0.0)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.dot(g.ravel(), g.ravel())) for g in grads.values()))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / norm
        for g in grads.values():
            g *= s
    return norm


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteError(f"function is not finite near coordinate {i}")
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(x.shape)


# --- checkpoint container ---------------------------------------------------

def save_tensors(path, tensors: Mapping[str, np.ndarray], header: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        if header is not None:
            blob = json.dumps(header, sort_keys=True).encode("utf-8")
            name = HEADER_RECORD.encode("utf-8")
            f.write(struct.pack("<I", len(name)) + name + struct.pack("<QQ", len(blob), 0) + blob)
        for name, arr in tensors.items():
            if name == HEADER_RECORD:
                raise ValueError(f"{HEADER_RECORD!r} is reserved")
            a = np.asarray(arr, dtype=np.float64)
            if a.ndim == 1:
                rows, cols = a.shape[0], 0
            elif a.ndim == 2:
                rows, cols = a.shape
            else:
                raise ValueError(f"tensor {name!r} must be 1-D or 2-D")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)) + raw + struct.pack("<QQ", rows, cols))
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict | None]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an RSQ1 checkpoint")
    pos = 4
    tensors: dict[str, np.ndarray] = {}
    header = None
    try:
        while pos < len(data):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            rows, cols = struct.unpack_from("<QQ", data, pos)
            pos += 16
            if name == HEADER_RECORD:
                header = json.loads(data[pos:pos + rows].decode("utf-8"))
                pos += rows
                continue
            count = rows * (cols or 1)
            if pos + 8 * count > len(data):
                raise ValueError("truncated tensor payload")
            a = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
            pos += 8 * count
            tensors[name] = a if cols == 0 else a.reshape(rows, cols)
    except struct.error as exc:
        raise ValueError(f"{path}: truncated checkpoint") from exc
    return tensors, header
