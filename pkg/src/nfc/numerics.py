"""Scalar primitives: integer floor/ceiling, per-trial random streams, noise laws."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "floor_int",
    "ceil_int",
    "RngStream",
    "ForwardKind",
    "BoundedKind",
    "ForwardNoiseSpec",
    "BoundedNoiseSpec",
    "draw_forward",
    "draw_bounded",
]

_ATOM_MARGIN = 2.0**-20


def floor_int(a: float) -> int:
    """Greatest integer not exceeding ``a``."""
    if not math.isfinite(a):
        raise ValueError(f"floor_int needs a finite argument, got {a!r}")
    return math.floor(a)


def ceil_int(a: float) -> int:
    """Least integer not below ``a``."""
    if not math.isfinite(a):
        raise ValueError(f"ceil_int needs a finite argument, got {a!r}")
    return math.ceil(a)


class RngStream:
    """Deterministic random stream keyed by ``(master_seed, stream_id)``.

    Each stream is an independent child of the master seed (numpy's
    ``SeedSequence`` spawn-key mechanism), so trial ``i`` sees the same
    samples no matter which worker runs it or in what order.
    """

    __slots__ = ("master_seed", "stream_id", "_gen")

    def __init__(self, master_seed: int, stream_id: int = 0):
        if not (0 <= master_seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValueError("master_seed and stream_id must be 64-bit unsigned")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


class ForwardKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class BoundedKind(str, enum.Enum):
    UNIFORM = "uniform"
    TRUNC_GAUSS = "trunc-gauss"
    RADEMACHER = "rademacher"
    CONSTANT = "constant"
    ZERO = "zero"


@dataclass(frozen=True)
class ForwardNoiseSpec:
    """White forward-channel noise with variance ``variance``."""

    kind: ForwardKind = ForwardKind.GAUSSIAN
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ForwardKind(self.kind))
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"forward noise variance must be > 0, got {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class BoundedNoiseSpec:
    """Bounded noise: every sample satisfies ``|s| <= bound * (1 - interior_margin)``.

    ``interior_margin=None`` picks the per-kind default: zero for the
    continuous laws, ``2**-20`` for the laws with an atom on the bound.
    """

    kind: BoundedKind = BoundedKind.ZERO
    bound: float = 0.0
    interior_margin: float | None = field(default=None)

    def __post_init__(self):
        kind = BoundedKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not (math.isfinite(self.bound) and self.bound >= 0):
            raise ValueError(f"noise bound must be >= 0, got {self.bound!r}")
        eps = self.interior_margin
        if eps is None:
            eps = _ATOM_MARGIN if kind in (BoundedKind.RADEMACHER, BoundedKind.CONSTANT) else 0.0
        if not 0.0 <= eps < 1.0:
            raise ValueError(f"interior_margin must lie in [0, 1), got {eps!r}")
        object.__setattr__(self, "interior_margin", float(eps))

    @property
    def effective_bound(self) -> float:
        return self.bound * (1.0 - self.interior_margin)


def draw_forward(spec: ForwardNoiseSpec, rng: RngStream, size: int | None = None):
    """One sample (or ``size`` samples) of the forward noise."""
    gen = rng.generator
    if spec.kind is ForwardKind.GAUSSIAN:
        out = gen.normal(0.0, spec.std, size)
    else:
        half = math.sqrt(3.0 * spec.variance)
        out = gen.uniform(-half, half, size)
    return float(out) if size is None else out


def _trunc_gauss(gen: np.random.Generator, scale: float, limit: float, size: int) -> np.ndarray:
    # rejection sampling; acceptance is >= 99.7% at the default scale
    out = np.empty(size)
    filled = 0
    while filled < size:
        cand = gen.normal(0.0, scale, size - filled)
        cand = cand[np.abs(cand) <= limit]
        out[filled:filled + cand.size] = cand
        filled += cand.size
    return out


def draw_bounded(spec: BoundedNoiseSpec, rng: RngStream, size: int | None = None):
    """One sample (or ``size`` samples) of a bounded noise law."""
    n = 1 if size is None else size
    lim = spec.effective_bound
    kind = spec.kind
    gen = rng.generator
    if kind is BoundedKind.ZERO or lim == 0.0:
        out = np.zeros(n)
    elif kind is BoundedKind.UNIFORM:
        out = gen.uniform(-lim, lim, n)
        # uniform() is half-open; the clip only guards against -lim rounding
        np.clip(out, -lim, lim, out=out)
    elif kind is BoundedKind.TRUNC_GAUSS:
        out = _trunc_gauss(gen, spec.bound / 3.0, lim, n)
    elif kind is BoundedKind.RADEMACHER:
        out = np.where(gen.integers(0, 2, n) == 1, lim, -lim)
    else:
        out = np.full(n, lim)
    return float(out[0]) if size is None else out
