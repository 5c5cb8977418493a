"""Gaussian-smoothed (Weierstrass-transformed) activations and the sigma
schedule used for homotopy-continuation training.

``diffused_apply(kind, x, sigma)`` evaluates the closed form of
``integral f(x - t) K(t, sigma) dt`` with ``K`` the zero-mean Gaussian of
standard deviation ``sigma``. The erf, sign and relu forms are exact; the
tanh form is an approximation (it treats tanh as a scaled erf), and the
log-softmax form is a coefficient-damped surrogate rather than a true
convolution. :func:`quadrature_convolve` computes the integral numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.special import erf

from .cells import logsumexp

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DiffusedKind:
    tag: str
    alpha: float = 1.0

    TAGS = ("erf", "tanh", "sign", "relu", "logsoftmax")

    def __post_init__(self):
        if self.tag not in self.TAGS:
            raise ValueError(f"unknown kind {self.tag!r}; expected one of {self.TAGS}")
        if self.tag == "erf" and not (math.isfinite(self.alpha) and self.alpha != 0):
            raise ValueError("erf scale alpha must be finite and nonzero")

    @classmethod
    def Erf(cls, alpha: float = 1.0) -> "DiffusedKind":
        return cls("erf", alpha)

    def original(self, x):
        """The un-smoothed function."""
        x = np.asarray(x, dtype=np.float64)
        if self.tag == "erf":
            return erf(self.alpha * x)
        if self.tag == "tanh":
            return np.tanh(x)
        if self.tag == "sign":
            return np.sign(x)
        if self.tag == "relu":
            return np.maximum(x, 0.0)
        return x - logsumexp(x)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the original function is not smooth."""
        return (0.0,) if self.tag in ("sign", "relu") else ()


ERF = DiffusedKind("erf")
TANH = DiffusedKind("tanh")
SIGN = DiffusedKind("sign")
RELU = DiffusedKind("relu")
LOGSOFTMAX = DiffusedKind("logsoftmax")


def kappa(sigma: float) -> float:
    """Slope damping of the smoothed log-softmax: (1 - 1/pi) exp(-pi sigma^2) + 1/pi."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return (1.0 - 1.0 / math.pi) * math.exp(-math.pi * sigma * sigma) + 1.0 / math.pi


def tanh_scale(sigma: float) -> float:
    """Input scaling of the smoothed tanh: 1 / sqrt(1 + (pi/2) sigma^2)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return 1.0 / math.sqrt(1.0 + 0.5 * math.pi * sigma * sigma)


def diffused_apply(kind: DiffusedKind, x, sigma: float):
    """Closed-form Gaussian smoothing of ``kind`` at width ``sigma``.

    ``sigma == 0`` returns the original function. Scalars in, scalars out.
    """
    if not sigma >= 0:
        raise ValueError("sigma must be >= 0")
    scalar = np.ndim(x) == 0
    if scalar and kind.tag == "logsoftmax":
        raise ValueError("log-softmax needs a vector argument")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        out = kind.original(x)
    elif kind.tag == "erf":
        a = kind.alpha
        out = erf(a * x / math.sqrt(1.0 + 2.0 * (a * sigma) ** 2))
    elif kind.tag == "tanh":
        out = np.tanh(x * tanh_scale(sigma))
    elif kind.tag == "sign":
        out = erf(x / (SQRT2 * sigma))
    elif kind.tag == "relu":
        out = sigma / SQRT2PI * np.exp(-x * x / (2.0 * sigma * sigma)) + 0.5 * x * (1.0 + erf(x / (SQRT2 * sigma)))
    else:
        out = kappa(sigma) * x - logsumexp(x)
    return float(out) if scalar else out


def gauss_hermite_convolve(f: Callable, x: float, sigma: float, nodes: int = 128) -> float:
    """Plain Gauss-Hermite estimate of the Gaussian convolution of ``f`` at ``x``.

    Accurate only when ``f`` is smooth on the scale of ``sigma``.
    """
    if nodes < 32:
        raise ValueError("use at least 32 nodes")
    u, w = hermgauss(nodes)
    vals = np.asarray(f(x - SQRT2 * sigma * u), dtype=np.float64)
    if not np.isfinite(vals).all():
        raise FloatingPointError("non-finite integrand sample")
    return float(w @ vals) / math.sqrt(math.pi)


def quadrature_convolve(f: Callable, x: float, sigma: float, nodes: int = 128,
                        breakpoints: Iterable[float] = (), support: float = 8.0) -> float:
    """Composite Gaussian quadrature of ``integral f(x - t) K(t, sigma) dt``.

    After substituting ``t = sqrt(2) sigma u`` the integrand is
    ``exp(-u^2) f(x - sqrt(2) sigma u) / sqrt(pi)``. The ``u`` range
    ``[-support, support]`` (mass outside ~1e-29) is cut at every breakpoint
    of ``f`` and into panels no wider than 0.5 in ``u`` nor 1 in ``t``; each
    panel gets a ``nodes``-point Gauss-Legendre rule. With breakpoints given
    for kinks and jumps the result is accurate to rounding.
    """
    if nodes < 32:
        raise ValueError("use at least 32 nodes")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    scale = SQRT2 * sigma
    cuts = {-support, support}
    for b in breakpoints:
        u = (x - b) / scale
        if -support < u < support:
            cuts.add(u)
    cuts = sorted(cuts)
    width = min(0.5, 1.0 / scale)
    z, w = leggauss(nodes)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        k = max(1, math.ceil((hi - lo) / width))
        edges = np.linspace(lo, hi, k + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * z[None, :]).ravel()
        vals = np.asarray(f(x - scale * u), dtype=np.float64)
        if not np.isfinite(vals).all():
            raise FloatingPointError("non-finite integrand sample")
        total += float(((half[:, None] * w[None, :]).ravel() * np.exp(-u * u)) @ vals)
    return total / math.sqrt(math.pi)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Ordered (sigma, epochs) stages with strictly decreasing sigma."""

    stages: tuple[tuple[float, int], ...]

    def __post_init__(self):
        stages = tuple((float(s), int(e)) for s, e in self.stages)
        if not stages:
            raise ValueError("schedule needs at least one stage")
        for s, e in stages:
            if not (s > 0 and math.isfinite(s)):
                raise ValueError(f"sigma must be positive and finite, got {s}")
            if e < 1:
                raise ValueError(f"each stage needs >= 1 epoch, got {e}")
        for (s0, _), (s1, _) in zip(stages[:-1], stages[1:]):
            if not s1 < s0:
                raise ValueError(f"sigma must decrease across stages ({s0} then {s1})")
        object.__setattr__(self, "stages", stages)

    @property
    def total_epochs(self) -> int:
        return sum(e for _, e in self.stages)

    def sigmas(self) -> list[float]:
        """Per-epoch sigma in training order."""
        return [s for s, e in self.stages for _ in range(e)]

    def __iter__(self):
        return iter(self.stages)

    def __len__(self) -> int:
        return len(self.stages)

    def to_string(self) -> str:
        return ",".join(f"{s!r}:{e}" for s, e in self.stages)

    @classmethod
    def from_string(cls, text: str) -> "DiffusionSchedule":
        """Parse ``"30:100,5:100,..."``."""
        try:
            stages = [(float(a), int(b)) for a, b in (item.split(":") for item in text.split(","))]
        except ValueError:
            raise ValueError(f"bad schedule {text!r}; expected 'sigma:epochs,...'") from None
        return cls(tuple(stages))


def schedule_default() -> DiffusionSchedule:
    return DiffusionSchedule(((30.0, 100), (5.0, 100), (1.0, 100), (0.0001, 100)))


ORACLE_KINDS: Sequence[DiffusedKind] = (ERF, TANH, SIGN, RELU)
ORACLE_XS = (-5.0, -2.0, -0.5, 0.0, 0.5, 2.0, 5.0)
ORACLE_SIGMAS = (0.1, 1.0, 5.0)


def oracle_grid(nodes: int = 128) -> list[dict]:
    """Closed form vs quadrature over the standard (kind, x, sigma) grid."""
    rows = []
    for kind in ORACLE_KINDS:
        for x in ORACLE_XS:
            for s in ORACLE_SIGMAS:
                cf = diffused_apply(kind, x, s)
                q = quadrature_convolve(kind.original, x, s, nodes, kind.breakpoints)
                rows.append({"kind": kind.tag, "x": x, "sigma": s, "closed_form": cf,
                             "quadrature": q, "abs_err": abs(cf - q)})
    return rows
