"""Schalkwijk-Kailath style encoder/decoder operators and message maps.

The closed loop is always run through the one-step recursions
(:func:`encoder_step`, :func:`decoder_step`).  The direct summation
:func:`closed_form_x` carries a ``2**(r_bar*t) * z`` term that overflows for
long blocks and is kept only as a short-horizon oracle.

All step functions accept numpy arrays in place of scalars, so a batch of
independent trials advances with exactly the same floating-point operations
as a single trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import ceil_int, floor_int

__all__ = [
    "MAX_MESSAGE_BITS",
    "CLOSED_FORM_MAX_T",
    "SchemeParams",
    "EncoderState",
    "DecoderState",
    "message_to_point",
    "point_to_message",
    "encoder_init",
    "encoder_step",
    "decoder_init",
    "decoder_step",
    "closed_form_x",
    "stable_form_x",
]

MAX_MESSAGE_BITS = 40
CLOSED_FORM_MAX_T = 25


@dataclass(frozen=True)
class SchemeParams:
    """Block length ``n``, target rate ``r`` and operator rate ``r_bar`` (bits/use)."""

    n: int
    r: float
    r_bar: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"block length must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"rate r must be positive, got {self.r!r}")
        if not (math.isfinite(self.r_bar) and self.r_bar > self.r):
            raise ValueError(f"need 0 < r < r_bar, got r={self.r!r}, r_bar={self.r_bar!r}")
        bits = self.message_bits
        if bits < 1:
            raise ValueError(f"floor(r*n) = {bits}: the message must carry at least one bit")
        if bits > MAX_MESSAGE_BITS:
            raise ValueError(f"floor(r*n) = {bits} exceeds the {MAX_MESSAGE_BITS}-bit precision cap")

    @property
    def message_bits(self) -> int:
        return floor_int(self.r * self.n)

    @property
    def num_messages(self) -> int:
        return 2**self.message_bits

    @property
    def gain(self) -> float:
        """``2**r_bar``, the open-loop growth per step."""
        return 2.0**self.r_bar

    @property
    def coef(self) -> float:
        """``2**-r_bar - 2**r_bar`` (negative)."""
        return 2.0**-self.r_bar - 2.0**self.r_bar


@dataclass(frozen=True)
class EncoderState:
    t: int
    x: float | np.ndarray


@dataclass(frozen=True)
class DecoderState:
    """``z_hat`` is the running estimate; ``z_err`` carries its rounding error (compensated sum)."""

    t: int
    z_hat: float | np.ndarray
    z_err: float | np.ndarray = 0.0


def message_to_point(m: int, params: SchemeParams) -> float:
    """Map message ``m`` in ``1..2**floor(r n)`` to the midpoint of its cell in (0, 1)."""
    if int(m) != m or not 1 <= m <= params.num_messages:
        raise ValueError(f"message {m!r} outside 1..{params.num_messages}")
    return (int(m) - 0.5) * 2.0**-params.message_bits


def point_to_message(z_hat, t: int, params: SchemeParams):
    """Estimate ``ceil(2**floor(r t) * z_hat)``.

    No clamping is applied: an out-of-range index is simply a decoding error.
    Non-finite estimates decode to 0, which matches no message.  Arrays in,
    int64 arrays out.
    """
    if not 0 <= t <= params.n:
        raise ValueError(f"step {t} outside 0..{params.n}")
    scale = 2.0 ** floor_int(params.r * t)
    if isinstance(z_hat, np.ndarray):
        v = scale * z_hat
        ok = np.isfinite(v)
        return np.where(ok, np.ceil(np.where(ok, v, 0.0)), 0.0).astype(np.int64)
    v = scale * z_hat
    if not math.isfinite(v):
        return 0
    return ceil_int(v)


def encoder_init(z, params: SchemeParams) -> EncoderState:
    z_arr = np.asarray(z)
    if not np.all((z_arr > 0.0) & (z_arr < 1.0)):
        raise ValueError("message point must lie strictly inside (0, 1)")
    return EncoderState(0, params.coef * z)


def encoder_step(state: EncoderState, u, params: SchemeParams) -> EncoderState:
    """Advance the encoder by one use given the fed-back value ``u`` of the last step."""
    return EncoderState(state.t + 1, params.gain * state.x + params.coef * u)


def decoder_init() -> DecoderState:
    return DecoderState(0, 0.0)


def decoder_step(state: DecoderState, y, v, params: SchemeParams) -> DecoderState:
    """Fold channel output ``y`` and feedback corruption ``v`` into the estimate."""
    w = 2.0 ** (-params.r_bar * (state.t + 1))
    inc = -w * (v + y)
    # two-sum: s + e == z_hat + inc exactly
    s = state.z_hat + inc
    bv = s - state.z_hat
    e = (state.z_hat - (s - bv)) + (inc - bv)
    return DecoderState(state.t + 1, s, state.z_err + e)


def closed_form_x(z: float, u_history: Sequence[float], t: int, params: SchemeParams) -> float:
    """Direct-sum encoder output at step ``t`` from ``z`` and ``u_history[:t]``."""
    if t > CLOSED_FORM_MAX_T:
        raise ValueError(f"closed form is an oracle for t <= {CLOSED_FORM_MAX_T} only")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return params.coef * z
    if len(u_history) < t:
        raise ValueError(f"need {t} fed-back values, got {len(u_history)}")
    rb = params.r_bar
    acc = math.fsum(2.0 ** (rb * (t - i - 1)) * u_history[i] for i in range(t))
    return params.coef * (acc + 2.0 ** (rb * t) * z)


def stable_form_x(z: float, w_history: Sequence[float], v_history: Sequence[float],
                  t: int, params: SchemeParams) -> float:
    """Closed-loop encoder output at ``t >= 1`` written as a stable filter of the noise."""
    if t < 1:
        raise ValueError("stable form is defined for t >= 1")
    rb = params.r_bar
    acc = math.fsum(2.0 ** (-rb * (t - i - 1)) * (w_history[i] + v_history[i]) for i in range(t))
    return params.coef * (acc + 2.0 ** (-rb * t) * z)
