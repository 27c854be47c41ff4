"""Uniform feedback quantizer and the scaled encoder/decoder for a noisy backward channel.

``quantize(y, b)`` rounds to the nearest multiple of ``2b`` (cells are
``[(2k-1)b, (2k+1)b)``), so the error never exceeds ``b`` in magnitude.

Over a backward channel with additive noise bounded by ``sigma_s``, the
encoder sends ``Q = quantize((sigma_s/sigma_v) * y, sigma_s)``.  Any noise
strictly smaller than ``sigma_s`` keeps ``Q + S`` in the same cell, so
rescaling the re-quantized value recovers ``quantize(y, sigma_v)`` exactly.
Both maps go through the integer cell index so the recovered value is
bit-identical to the direct quantizer output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizerSpec",
    "BackwardChannelSpec",
    "quantize",
    "quant_error",
    "cell_index",
    "backward_encode",
    "backward_decode",
]


@dataclass(frozen=True)
class QuantizerSpec:
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ValueError(f"quantizer sensitivity must be > 0, got {self.b!r}")


@dataclass(frozen=True)
class BackwardChannelSpec:
    sigma_s_bar: float
    sigma_v_bar: float
    p_q2: float

    def __post_init__(self):
        for name in ("sigma_s_bar", "sigma_v_bar", "p_q2"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be > 0, got {val!r}")
        if self.p_q <= self.sigma_s_bar:
            raise ValueError("backward power cannot cover noise amplitude: need P_Q > sigma_s_bar")

    @property
    def p_q(self) -> float:
        return math.sqrt(self.p_q2)


def _b(spec) -> float:
    return spec.b if isinstance(spec, QuantizerSpec) else float(spec)


def _out(val, like):
    return val if isinstance(like, np.ndarray) else float(val)


def cell_index(y, b: float):
    """Integer-valued cell index ``floor((y + b) / (2b))`` (float dtype)."""
    return np.floor((y + b) / (2.0 * b))


def quantize(y, spec):
    """``2b * floor((y + b) / (2b))``; ``spec`` is a :class:`QuantizerSpec` or a bare ``b``."""
    b = _b(spec)
    return _out(2.0 * b * cell_index(y, b), y)


def quant_error(y, spec):
    """Quantization error ``quantize(y) - y``; bounded by ``b`` in magnitude."""
    return _out(quantize(y, spec) - y, y)


def backward_encode(y, spec: BackwardChannelSpec):
    """Channel input ``Q = quantize((sigma_s/sigma_v) y, sigma_s)``.

    Evaluated as ``2 sigma_s * floor((y + sigma_v) / (2 sigma_v))``, the same
    value by positive homogeneity of the quantizer, so that its cell index
    agrees bit-for-bit with ``quantize(y, sigma_v)``.
    """
    return _out(2.0 * spec.sigma_s_bar * cell_index(y, spec.sigma_v_bar), y)


def backward_decode(received, spec: BackwardChannelSpec):
    """``(sigma_v/sigma_s) * quantize(received, sigma_s)``, evaluated as ``2 sigma_v * k``.

    The received value is not checked: noise at or beyond ``sigma_s`` can push
    the reconstruction into a neighbouring cell.
    """
    return _out(2.0 * spec.sigma_v_bar * cell_index(received, spec.sigma_s_bar), received)
