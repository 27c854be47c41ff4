"""Invariant checks shared by ``nfc verify`` and the test-suite.

Each check takes a seed, runs a randomized property over every module and
returns a :class:`CheckResult` carrying the worst measured residual.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis
from .backward import BackwardChannelSpec, backward_decode, backward_encode, quant_error, quantize
from .numerics import (
    BoundedKind,
    BoundedNoiseSpec,
    ForwardKind,
    ForwardNoiseSpec,
    RngStream,
    ceil_int,
    draw_bounded,
    draw_forward,
    floor_int,
)
from .scheme import (
    SchemeParams,
    closed_form_x,
    encoder_init,
    encoder_step,
    message_to_point,
    point_to_message,
    stable_form_x,
)
from .simulator import (
    DelayPlacement,
    Scheme,
    SchemeConfig,
    check_estimation_identity,
    draw_message,
    run_trial,
    run_trials,
    side_info_twin,
    wilson_interval,
)

EDGE_MARGIN = 2.0**-20


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{tag}  {self.name:<44s} measured={self.measured:.3e} tol={self.tolerance:.1e}{extra}"


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _gen(seed: int, tag: int) -> np.random.Generator:
    return RngStream(seed, tag).generator


def reference_config(scheme=Scheme.QUANTIZED, n=30, r=0.5, r_bar=0.6, **kw) -> SchemeConfig:
    """The running example: unit Gaussian noise, P_X^2 = 4, sensitivity 0.25."""
    params = SchemeParams(n, r, r_bar)
    fwd = kw.pop("forward", ForwardNoiseSpec(ForwardKind.GAUSSIAN, 1.0))
    if scheme is Scheme.SCALED_BACKWARD:
        kw.setdefault("sigma_s_bar", 0.1)
        kw.setdefault("p_q2", 4.0)
        kw.setdefault("feedback_noise", BoundedNoiseSpec(BoundedKind.UNIFORM, kw["sigma_s_bar"]))
    elif scheme is Scheme.SIDE_INFO:
        kw.setdefault("feedback_noise", BoundedNoiseSpec(BoundedKind.UNIFORM, 0.25))
    else:
        kw.setdefault("sigma_v_bar", 0.25)
    return SchemeConfig(scheme, params, fwd, 4.0, **kw)


def random_loop_config(g: np.random.Generator, max_n: int = 25, max_r_bar: float = 1.0) -> SchemeConfig:
    """Random short-block config for identity checks; transmit power is left unconstrained."""
    while True:
        n = int(g.integers(2, max_n + 1))
        r_bar = float(g.uniform(0.1, max_r_bar))
        if 1.0 / n >= r_bar:
            continue
        r = float(g.uniform(1.0 / n, r_bar))
        try:
            params = SchemeParams(n, r, r_bar)
        except ValueError:
            continue
        break
    fwd = ForwardNoiseSpec(ForwardKind.GAUSSIAN if g.random() < 0.5 else ForwardKind.UNIFORM,
                           float(g.uniform(0.2, 2.0)))
    scheme = [Scheme.SIDE_INFO, Scheme.QUANTIZED, Scheme.SCALED_BACKWARD][int(g.integers(0, 3))]
    sv = float(g.uniform(0.05, 0.5))
    if scheme is Scheme.SCALED_BACKWARD:
        ss = float(g.uniform(0.01, 0.2))
        return SchemeConfig(scheme, params, fwd, 1e6, BoundedNoiseSpec(BoundedKind.UNIFORM, ss),
                            sigma_v_bar=sv, sigma_s_bar=ss, p_q2=4.0, allow_sigma_v_override=True)
    return SchemeConfig(scheme, params, fwd, 1e6, BoundedNoiseSpec(BoundedKind.UNIFORM, sv), sigma_v_bar=sv)


# core numerics ---------------------------------------------------------------

def check_floor_ceil(seed: int) -> CheckResult:
    g = _gen(seed, 1)
    vals = np.concatenate([g.normal(0, 1e3, 5000), np.round(g.normal(0, 50, 2000)), g.uniform(-3, 3, 3000)])
    bad = 0
    for a in vals.tolist():
        f, c = floor_int(a), ceil_int(a)
        if not (f <= a < f + 1 and c - 1 < a <= c and c == -floor_int(-a)):
            bad += 1
    return CheckResult("floor/ceil brackets and duality", bad == 0, bad, 0)


def check_bounded_support(seed: int, draws: int = 100_000) -> CheckResult:
    worst = 0.0
    bad = 0
    for i, kind in enumerate(BoundedKind):
        for b, eps in ((0.5, None), (1.0, 0.01), (0.1, 0.0)):
            spec = BoundedNoiseSpec(kind, b, eps)
            s = draw_bounded(spec, RngStream(seed, 100 + i), draws)
            over = np.abs(s).max() - spec.effective_bound
            worst = max(worst, over)
            bad += int(np.count_nonzero(np.abs(s) > spec.effective_bound))
    return CheckResult("bounded noise stays inside b(1-eps)", bad == 0, bad, 0, f"max excess {worst:.2e}")


def check_forward_variance(seed: int, draws: int = 1_000_000) -> CheckResult:
    worst = 0.0
    for i, kind in enumerate(ForwardKind):
        for var in (1.0, 0.3):
            s = draw_forward(ForwardNoiseSpec(kind, var), RngStream(seed, 200 + i), draws)
            worst = max(worst, abs(np.mean(s * s) / var - 1.0))
    return CheckResult("forward noise second moment", worst < 0.02, worst, 0.02)


def check_stream_replay(seed: int) -> CheckResult:
    a = draw_forward(ForwardNoiseSpec(), RngStream(seed, 7), 1000).tobytes()
    b = draw_forward(ForwardNoiseSpec(), RngStream(seed, 7), 1000).tobytes()
    c = draw_forward(ForwardNoiseSpec(), RngStream(seed, 8), 1000).tobytes()
    ok = a == b and a != c
    return CheckResult("stream replay is byte-identical", ok, 0.0 if ok else 1.0, 0)


# scheme ----------------------------------------------------------------------

def check_recursion_vs_closed_form(seed: int, cases: int = 300) -> CheckResult:
    g = _gen(seed, 2)
    worst = 0.0
    for _ in range(cases):
        r_bar = float(g.uniform(0.1, 1.5))
        p = SchemeParams(25, 0.5 * r_bar, r_bar)
        z = float(g.uniform(0.01, 0.99))
        u = g.normal(0, 2.0, 25).tolist()
        st = encoder_init(z, p)
        for t in range(26):
            if t:
                st = encoder_step(st, u[t - 1], p)
            worst = max(worst, _rel(st.x, closed_form_x(z, u, t, p)))
    return CheckResult("encoder recursion == direct sum (t<=25)", worst < 1e-9, worst, 1e-9)


def check_stable_form(seed: int, cases: int = 300) -> CheckResult:
    g = _gen(seed, 3)
    worst = 0.0
    for k in range(cases):
        cfg = random_loop_config(g)
        tr = run_trial(cfg, 1, RngStream(seed, 10_000 + k))
        w = tr.y - tr.x
        v = tr.u - tr.y
        for t in range(1, cfg.params.n + 1):
            worst = max(worst, _rel(tr.x[t], stable_form_x(tr.z, w, v, t, cfg.params)))
    return CheckResult("closed loop == stable filter form", worst < 1e-9, worst, 1e-9)


def check_identity(seed: int, cases: int = 1000) -> CheckResult:
    g = _gen(seed, 4)
    worst = 0.0
    for k in range(cases):
        cfg = random_loop_config(g)
        tr = run_trial(cfg, draw_message(cfg.params, RngStream(seed, 20_000 + k)), RngStream(seed, 30_000 + k))
        worst = max(worst, check_estimation_identity(tr, cfg.params))
    return CheckResult("X_t == scaled estimation error", worst < 1e-8, worst, 1e-8)


def check_decoding_margin(seed: int, cases: int = 2000) -> CheckResult:
    g = _gen(seed, 5)
    bad = 0
    for _ in range(cases):
        n = int(g.integers(1, 41))
        p = SchemeParams(n, 1.0, 1.5)
        m = int(g.integers(1, p.num_messages + 1))
        z = message_to_point(m, p)
        half = 2.0 ** -(p.message_bits + 1)
        zh = z + float(g.uniform(-0.999, 0.999)) * half
        if point_to_message(zh, n, p) != m:
            bad += 1
    return CheckResult("|Z - Zhat| < half cell decodes correctly", bad == 0, bad, 0)


def check_noiseless(seed: int) -> CheckResult:
    worst = 0.0
    bad = 0
    for n, r, r_bar in ((10, 0.5, 1.0), (30, 0.5, 0.6), (40, 0.9, 1.0), (200, 0.2, 0.3)):
        cfg = reference_config(Scheme.SIDE_INFO, n, r, r_bar)
        g = _gen(seed, 6 + n)
        for _ in range(20):
            m = int(g.integers(1, cfg.params.num_messages + 1))
            tr = run_trial(cfg, m, RngStream(seed, 6), w=np.zeros(n + 1), v=np.zeros(n + 1))
            for t in range(n + 1):
                expect = tr.z * (1.0 - 2.0 ** (-2 * r_bar * t))
                worst = max(worst, abs(tr.z_hat[t] - expect))
            bad += int(tr.error)
    ok = bad == 0 and worst < 1e-12
    return CheckResult("noiseless loop: Zhat_t = Z(1 - 2^-2r_bar t)", ok, worst, 1e-12, f"errors={bad}")


def check_round_trip(seed: int) -> CheckResult:
    bad = 0
    for bits in list(range(1, 13)) + [16]:
        p = SchemeParams(bits, 1.0, 1.5)
        for m in range(1, p.num_messages + 1):
            if point_to_message(message_to_point(m, p), p.n, p) != m:
                bad += 1
    return CheckResult("message -> point -> message (exhaustive)", bad == 0, bad, 0)


# backward link ---------------------------------------------------------------

def check_quantizer_lattice(seed: int, count: int = 100_000) -> CheckResult:
    g = _gen(seed, 8)
    worst = 0.0
    bad = 0
    for b in (0.01, 0.25, 1.0, 3.7):
        y = g.normal(0, 10 * b, count)
        q = quantize(y, b)
        k = q / (2 * b)
        bad += int(np.count_nonzero(np.abs(k - np.round(k)) > 1e-9))
        err = quant_error(y, b)
        worst = max(worst, float(np.max(np.abs(err)) / b))
        shifted = quantize(y + 2 * b, b)
        bad += int(np.count_nonzero(np.abs(shifted - (q + 2 * b)) > 1e-9 * (np.abs(q) + b)))
    ok = bad == 0 and worst <= 1.0
    return CheckResult("quantizer lattice, periodicity, |error| <= b", ok, worst, 1.0, f"violations={bad}")


def check_homogeneity(seed: int, count: int = 100_000) -> CheckResult:
    g = _gen(seed, 9)
    worst = 0.0
    for _ in range(10):
        b = float(g.uniform(0.05, 2.0))
        c = float(g.uniform(0.05, 20.0))
        y = g.normal(0, 5, count)
        lhs = quantize(c * y, c * b)
        rhs = c * quantize(y, b)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), c * b))))
    return CheckResult("quantizer positive homogeneity", worst < 1e-12, worst, 1e-12)


QuantizeFn = Callable[[np.ndarray, float], np.ndarray]


def check_backward_equivalence(seed: int, pairs: int = 10_000, specs: int = 10,
                             rhs_quantizer: QuantizeFn = quantize) -> CheckResult:
    """Scaled quantize / noisy channel / rescale reproduces direct quantization.

    ``rhs_quantizer`` replaces the direct quantizer (mutation testing).
    """
    g = _gen(seed, 10)
    worst = 0.0
    for _ in range(specs):
        ss = float(g.uniform(0.01, 1.0))
        sv = float(g.uniform(0.01, 1.0))
        spec = BackwardChannelSpec(ss, sv, (10 * ss) ** 2)
        y = g.normal(0, 3, pairs)
        s = g.uniform(-1, 1, pairs) * ss * (1 - EDGE_MARGIN)
        lhs = backward_decode(s + backward_encode(y, spec), spec)
        rhs = rhs_quantizer(y, sv)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), sv))))
    return CheckResult("backward channel reproduces quantizer", worst < 1e-12, worst, 1e-12)


def check_scheme_triangle(seed: int, runs: int = 100) -> CheckResult:
    """side-info with V = quantization error, quantized, scaled-backward with S = 0: same trajectories."""
    mismatches = 0
    for k in range(runs):
        scaled = reference_config(Scheme.SCALED_BACKWARD)
        sv = scaled.effective_sigma_v
        quant = reference_config(Scheme.QUANTIZED, sigma_v_bar=sv)
        side = side_info_twin(quant)
        m = draw_message(quant.params, RngStream(seed, 40_000 + k))
        zeros = np.zeros(quant.params.n + 1)
        tq = run_trial(quant, m, RngStream(seed, 50_000 + k))
        ts = run_trial(scaled, m, RngStream(seed, 50_000 + k), v=zeros)
        ti = run_trial(side, m, RngStream(seed, 50_000 + k), v=tq.v)
        ts.q = None
        if not (tq.identical(ts) and tq.identical(ti)):
            mismatches += 1
    return CheckResult("side-info == quantized == scaled-backward(S=0)", mismatches == 0, mismatches, 0)


# analysis --------------------------------------------------------------------

def check_rate_residual(seed: int, cases: int = 2000) -> CheckResult:
    g = _gen(seed, 11)
    worst = 0.0
    for _ in range(cases):
        sw2 = float(g.uniform(0.05, 5))
        px2 = float(g.uniform(0.05, 50))
        sv = float(g.uniform(0, 0.5)) * math.sqrt(px2)
        sol = analysis.solve_rate(analysis.RateQuery(sw2, px2, sv))
        if sol.value > 0:
            worst = max(worst, abs(analysis.rate_equation_residual(sol.value, sw2, px2, sv)))
    return CheckResult("rate equation residual", worst < 1e-9, worst, 1e-9)


def check_rate_monotone(seed: int) -> CheckResult:
    g = _gen(seed, 12)
    bad = 0
    for _ in range(20):
        sw2 = float(g.uniform(0.1, 3))
        px2 = float(g.uniform(0.5, 20))
        svs = np.sort(g.uniform(0, math.sqrt(px2), 50))
        r = [analysis.rho(sw2, px2, s) for s in svs]
        bad += sum(b > a for a, b in zip(r, r[1:]))
        sv = float(g.uniform(0, 1))
        pxs = np.sort(g.uniform(0.1, 30, 50))
        r = [analysis.rho(sw2, p, sv) for p in pxs]
        bad += sum(b < a for a, b in zip(r, r[1:]))
    return CheckResult("rate monotone in sigma_v and P_X", bad == 0, bad, 0)


def check_rate_limits(seed: int) -> CheckResult:
    g = _gen(seed, 13)
    worst = 0.0
    zero_bad = 0
    for _ in range(50):
        sw2 = float(g.uniform(0.1, 5))
        px2 = float(g.uniform(0.1, 50))
        worst = max(worst, abs(analysis.rho(sw2, px2, 1e-9) - analysis.capacity(sw2, px2)))
        zero_bad += analysis.rho(sw2, px2, math.sqrt(px2) / 2) != 0.0
    ratio = analysis.rho(1.0, 1e12, 1.0) / math.log2(1e6 / 2.0)
    ok = worst < 1e-6 and zero_bad == 0 and 0.99 <= ratio <= 1.01
    return CheckResult("rate limits: capacity, zero point, high power", ok, worst, 1e-6,
                       f"zero-point misses={zero_bad} high-power ratio={ratio:.5f}")


def check_rate_scale_invariance(seed: int) -> CheckResult:
    g = _gen(seed, 14)
    worst = 0.0
    for _ in range(200):
        sw2 = float(g.uniform(0.1, 5))
        px2 = float(g.uniform(0.1, 50))
        sv = float(g.uniform(0, 0.5)) * math.sqrt(px2)
        c = float(g.uniform(0.1, 10))
        worst = max(worst, abs(analysis.rho(sw2, px2, sv) - analysis.rho(c * c * sw2, c * c * px2, c * sv)))
    return CheckResult("rate invariant under joint amplitude scaling", worst < 1e-9, worst, 1e-9)


def check_gaussian_bound_shape(seed: int) -> CheckResult:
    bad = 0
    for r, r_bar, sv in ((0.5, 0.6, 0.25), (0.2, 0.7, 0.1), (0.9, 1.0, 0.0)):
        tc = analysis.tail_constants(r_bar, sv, 1.0)
        vals = [analysis.error_bound_gaussian(n, r, r_bar, tc) for n in range(1, 80)]
        bad += sum(v > 1.0 for v in vals)
        past = [v for v in vals if v < 1.0]
        bad += sum(b >= a for a, b in zip(past, past[1:]) if a > 0)
    return CheckResult("gaussian error bound <= 1, decreasing in n", bad == 0, bad, 0)


# simulator -------------------------------------------------------------------

def check_delay_placement(seed: int, runs: int = 100) -> CheckResult:
    after = reference_config(Scheme.SCALED_BACKWARD, delay=DelayPlacement.AFTER)
    before = reference_config(Scheme.SCALED_BACKWARD, delay=DelayPlacement.BEFORE)
    mism = 0
    for k in range(runs):
        m = draw_message(after.params, RngStream(seed, 60_000 + k))
        if not run_trial(after, m, RngStream(seed, k)).identical(run_trial(before, m, RngStream(seed, k))):
            mism += 1
    return CheckResult("delay before/after feedback decoder", mism == 0, mism, 0)


def check_empirical_power(seed: int, trials: int = 10_000) -> CheckResult:
    worst = 0.0
    for cfg in (reference_config(Scheme.QUANTIZED), reference_config(Scheme.SIDE_INFO),
                reference_config(Scheme.SCALED_BACKWARD)):
        rep = run_trials(cfg, trials, seed)
        worst = max(worst, max(e / b for e, b in zip(rep.empirical_power_x, rep.bound_power_x)))
        if rep.empirical_power_q is not None:
            worst = max(worst, max(e / b for e, b in zip(rep.empirical_power_q, rep.bound_power_q)))
    return CheckResult("empirical E[X_t^2], E[Q_t^2] vs bounds", worst <= 1.05, worst, 1.05)


def check_markov_bound(seed: int, trials: int = 10_000) -> CheckResult:
    worst = 0.0
    for cfg in (reference_config(Scheme.QUANTIZED), reference_config(Scheme.SIDE_INFO)):
        rep = run_trials(cfg, trials, seed)
        lo, _ = rep.error_rate_ci95
        worst = max(worst, lo / rep.bound_error_markov)
    return CheckResult("error rate vs second-moment bound", worst <= 1.0, worst, 1.0)


def check_tail_bound(seed: int, trials: int = 20_000) -> CheckResult:
    cfg = reference_config(Scheme.SIDE_INFO)
    tc = analysis.tail_constants(cfg.params.r_bar, cfg.effective_sigma_v, cfg.forward.variance)
    levels = [tc.gamma + d for d in (0.5, 1.0, 2.0)]
    rep = run_trials(cfg, trials, seed, tail_levels=levels)
    worst = 0.0
    for a, k in zip(levels, rep.tail_exceedances):
        lo, hi = wilson_interval(k, trials)
        slack = 3.0 * (hi - lo) / 2.0
        worst = max(worst, (k / trials) / (analysis.tail_bound(a, tc) * 1.1 + slack))
    return CheckResult("empirical tail of |X_n| vs gaussian bound", worst <= 1.0, worst, 1.0)


ALL_CHECKS = [
    check_floor_ceil,
    check_bounded_support,
    check_forward_variance,
    check_stream_replay,
    check_recursion_vs_closed_form,
    check_stable_form,
    check_identity,
    check_decoding_margin,
    check_noiseless,
    check_round_trip,
    check_quantizer_lattice,
    check_homogeneity,
    check_backward_equivalence,
    check_scheme_triangle,
    check_rate_residual,
    check_rate_monotone,
    check_rate_limits,
    check_rate_scale_invariance,
    check_gaussian_bound_shape,
    check_delay_placement,
    check_empirical_power,
    check_markov_bound,
    check_tail_bound,
]


def run_all(seed: int, checks=None) -> list[CheckResult]:
    out = []
    for fn in checks or ALL_CHECKS:
        t0 = time.perf_counter()
        res = fn(seed)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
