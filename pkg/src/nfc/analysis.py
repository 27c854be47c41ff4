"""Closed-form theory: achievable rate, design selector, power and error bounds.

Notation used throughout: ``sigma_w2`` is the forward noise variance,
``p_x``/``p_x2`` the forward amplitude/power constraint, ``sigma_v_bar`` the
feedback corruption amplitude (or quantizer sensitivity), ``sigma_s_bar`` the
backward noise amplitude and ``p_q``/``p_q2`` the backward power constraint.
Rates are in bits per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import floor_int

__all__ = [
    "RateQuery",
    "RateSolution",
    "TailConstants",
    "capacity",
    "rate_equation_residual",
    "solve_rate",
    "rho",
    "gamma_select",
    "tail_constants",
    "power_bound_x",
    "power_bound_x_constrained",
    "power_bound_x_steady",
    "power_bound_q",
    "error_bound_markov",
    "error_bound_gaussian",
    "decision_threshold",
    "error_threshold",
    "tail_bound",
    "rho_composed",
]

_LN2 = math.log(2.0)
_MAX_BISECT = 2000


@dataclass(frozen=True)
class RateQuery:
    sigma_w2: float
    p_x2: float
    sigma_v_bar: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.sigma_w2, self.p_x2, self.sigma_v_bar)):
            raise ValueError("rate query fields must be finite")
        if self.sigma_w2 <= 0 or self.p_x2 <= 0:
            raise ValueError("sigma_w2 and p_x2 must be positive")
        if self.sigma_v_bar < 0:
            raise ValueError("sigma_v_bar must be non-negative")


@dataclass(frozen=True)
class RateSolution:
    value: float
    iterations: int
    residual: float
    zero_branch: bool = False


@dataclass(frozen=True)
class TailConstants:
    gamma: float
    beta2: float


def capacity(sigma_w2: float, p_x2: float) -> float:
    """AWGN capacity ``0.5 log2(1 + P_X^2 / sigma_W^2)``."""
    return 0.5 * math.log2(1.0 + p_x2 / sigma_w2)


def rate_equation_residual(rate: float, sigma_w2: float, p_x2: float, sigma_v_bar: float) -> float:
    """``sigma_W sqrt(2^(2 rate) - 1) - P_X + sigma_V (1 + 2^rate)``; increasing in ``rate``."""
    grow = math.expm1(2.0 * rate * _LN2)
    return (math.sqrt(sigma_w2) * math.sqrt(grow) - math.sqrt(p_x2)
            + sigma_v_bar * (1.0 + 2.0**rate))


def solve_rate(q: RateQuery) -> RateSolution:
    """Achievable rate for ``q`` by bisection, run until the bracket is two adjacent floats.

    Returns zero when ``4 sigma_V^2 > P_X^2`` or when the residual is already
    non-negative at rate zero (the ``sigma_V = P_X / 2`` boundary).
    """
    if 4.0 * q.sigma_v_bar**2 > q.p_x2:
        return RateSolution(0.0, 0, 0.0, zero_branch=True)

    def f(x):
        return rate_equation_residual(x, q.sigma_w2, q.p_x2, q.sigma_v_bar)

    lo, hi = 0.0, capacity(q.sigma_w2, q.p_x2)
    f_lo = f(lo)
    if f_lo >= 0.0:
        return RateSolution(0.0, 0, f_lo)
    f_hi = f(hi)
    if f_hi <= 0.0:
        return RateSolution(hi, 0, f_hi)
    it = 0
    while it < _MAX_BISECT:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        f_mid = f(mid)
        if f_mid == 0.0:
            return RateSolution(mid, it, 0.0)
        if f_mid < 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if abs(f_lo) <= abs(f_hi):
        return RateSolution(lo, it, f_lo)
    return RateSolution(hi, it, f_hi)


def rho(sigma_w2: float, p_x2: float, sigma_v_bar: float) -> float:
    """Achievable rate as a plain float; see :func:`solve_rate`."""
    return solve_rate(RateQuery(sigma_w2, p_x2, sigma_v_bar)).value


def gamma_select(sigma_w: float, sigma_s_bar: float, p_x: float, p_q: float) -> float:
    """Quantizer sensitivity selected for a backward channel: ``(P_X + sigma_W) sigma_S / (P_Q - sigma_S)``."""
    if min(sigma_w, sigma_s_bar, p_x, p_q) <= 0:
        raise ValueError("gamma_select needs positive arguments")
    if p_q <= sigma_s_bar:
        raise ValueError("backward power cannot cover noise amplitude: need P_Q > sigma_s_bar")
    return (p_x + sigma_w) * sigma_s_bar / (p_q - sigma_s_bar)


def tail_constants(r_bar: float, sigma_v_bar: float, sigma_w2: float) -> TailConstants:
    a = 2.0**r_bar
    gamma = (a + 1.0) * sigma_v_bar + a - 1.0 / a
    beta2 = (a * a - 1.0) * sigma_w2
    return TailConstants(gamma, beta2)


def _transient(t: float, r_bar: float) -> float:
    a = 2.0**r_bar
    return 2.0 ** (-r_bar * t) * (a - 1.0 / a)


def power_bound_x_steady(r_bar: float, sigma_w2: float, sigma_v_bar: float) -> float:
    """Limit of :func:`power_bound_x` as ``t`` grows."""
    a = 2.0**r_bar
    return (math.sqrt(sigma_w2) * math.sqrt(a * a - 1.0) + sigma_v_bar * (a + 1.0)) ** 2


def power_bound_x(t: int, r_bar: float, sigma_w2: float, sigma_v_bar: float, p_x: float | None = None) -> float:
    """Upper bound on ``E[X_t^2]`` for the closed loop.

    ``p_x`` is accepted for signature symmetry only; the bound does not use it.
    When ``r_bar`` is below the achievable rate for ``p_x`` this is at most
    :func:`power_bound_x_constrained`.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    a = 2.0**r_bar
    amp = math.sqrt(sigma_w2) * math.sqrt(a * a - 1.0) + sigma_v_bar * (a + 1.0) + _transient(t, r_bar)
    return amp * amp


def power_bound_x_constrained(t: int, r_bar: float, p_x: float) -> float:
    """``(P_X + 2^(-r_bar t)(2^r_bar - 2^-r_bar))^2``, valid when ``r_bar`` is below the achievable rate."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return (p_x + _transient(t, r_bar)) ** 2


def power_bound_q(t: float, r_bar: float, p_q: float, sigma_s_bar: float, p_x: float, sigma_w: float) -> float:
    """Upper bound on ``E[Q_t^2]`` at the backward channel input (``t`` may be ``inf``)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if p_q <= sigma_s_bar:
        raise ValueError("need P_Q > sigma_s_bar")
    extra = _transient(t, r_bar) * (p_q - sigma_s_bar) / (p_x + sigma_w)
    return (p_q + extra) ** 2


def decision_threshold(n: int, r: float, r_bar: float) -> float:
    """Amplitude ``2(2^r_bar - 2^-r_bar) 2^((r_bar - r) n)`` used by the closed-form error bounds.

    It exceeds the true decoding margin :func:`error_threshold` by a factor
    in (2, 4] (exactly 4 when ``r n`` is an integer), so bounds built on it
    are optimistic.
    """
    a = 2.0**r_bar
    return 2.0 * (a - 1.0 / a) * 2.0 ** ((r_bar - r) * n)


def error_threshold(n: int, r: float, r_bar: float) -> float:
    """Smallest ``|X_n|`` that can cause a decoding error.

    The decoder is correct iff ``|Z - Zhat_n| < 2^-(floor(r n) + 1)``, and
    ``|X_n| = 2^(r_bar n)(2^r_bar - 2^-r_bar)|Zhat_n - Z|`` along every
    trajectory, so errors need ``|X_n| >= (2^r_bar - 2^-r_bar) 2^(r_bar n - floor(r n) - 1)``.
    """
    a = 2.0**r_bar
    return (a - 1.0 / a) * 2.0 ** (r_bar * n - floor_int(r * n) - 1)


def error_bound_markov(n: int, r: float, r_bar: float, e_xn2: float, threshold: float | None = None) -> float:
    """Markov bound ``E[X_n^2] / threshold^2`` on the block error probability.

    The default threshold is :func:`decision_threshold`, giving
    ``2^(-2(r_bar - r) n) E[X_n^2] / (4 (2^r_bar - 2^-r_bar)^2)``.  Pass
    ``threshold=error_threshold(n, r, r_bar)`` for a bound that actually holds.
    """
    if not r < r_bar:
        raise ValueError("need r < r_bar")
    if e_xn2 < 0:
        raise ValueError("E[X_n^2] must be non-negative")
    if threshold is None:
        a = 2.0**r_bar
        return 2.0 ** (-2.0 * (r_bar - r) * n) * e_xn2 / (4.0 * (a - 1.0 / a) ** 2)
    return e_xn2 / threshold**2


def tail_bound(alpha: float, tc: TailConstants) -> float:
    """Gaussian tail bound on ``P(|X_t| >= alpha)``; 1 when ``alpha <= gamma``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha <= tc.gamma:
        return 1.0
    return math.exp(-((alpha - tc.gamma) ** 2) / (2.0 * tc.beta2))


def error_bound_gaussian(n: int, r: float, r_bar: float, tc: TailConstants, threshold: float | None = None) -> float:
    """Doubly exponential block error bound under Gaussian forward noise.

    ``exp(-(threshold - gamma)^2 / (2 beta^2))``, or 1 when the threshold does
    not exceed ``gamma``.  Threshold defaults as in :func:`error_bound_markov`.
    """
    if not r < r_bar:
        raise ValueError("need r < r_bar")
    if threshold is None:
        threshold = decision_threshold(n, r, r_bar)
    return tail_bound(threshold, tc)


def rho_composed(sigma_w2: float, p_x2: float, sigma_s_bar: float, p_q: float) -> float:
    """Achievable rate over a noisy backward channel with the selected sensitivity."""
    sv = gamma_select(math.sqrt(sigma_w2), sigma_s_bar, math.sqrt(p_x2), p_q)
    return rho(sigma_w2, p_x2, sv)
