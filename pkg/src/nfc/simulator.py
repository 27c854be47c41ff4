"""Closed-loop Monte Carlo harness for the three feedback configurations.

* ``side-info``: the feedback is ``U_t = Y_t + V_t`` with bounded ``V_t`` that
  the decoder also observes.
* ``quantized``: the feedback is ``quantize(Y_t, sigma_v)``; the decoder
  recomputes the quantization error from ``Y_t``.
* ``scaled-backward``: ``Y_t`` is scaled and quantized onto a backward
  channel with bounded additive noise ``S_t``, then rescaled at the encoder.

Trial ``i`` of a run draws everything (message, forward noise, feedback
noise) from ``RngStream(master_seed, i)``.  Trials are processed in fixed-size
chunks whose partial sums are merged in chunk order, so reports do not depend
on the number of worker threads.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from . import analysis
from .backward import BackwardChannelSpec, backward_decode, backward_encode, quant_error, quantize
from .numerics import (
    BoundedKind,
    BoundedNoiseSpec,
    ForwardKind,
    ForwardNoiseSpec,
    RngStream,
    draw_bounded,
    draw_forward,
)
from .scheme import (
    CLOSED_FORM_MAX_T,
    DecoderState,
    SchemeParams,
    decoder_step,
    encoder_init,
    encoder_step,
    message_to_point,
    point_to_message,
)

__all__ = [
    "Scheme",
    "DelayPlacement",
    "SchemeConfig",
    "InvalidConfig",
    "TrialTrajectory",
    "MonteCarloReport",
    "check_config",
    "validate_config",
    "draw_message",
    "run_trial",
    "run_trials",
    "check_estimation_identity",
    "wilson_interval",
    "resolve_workers",
]

CHUNK_TRIALS = 2048


class Scheme(str, enum.Enum):
    SIDE_INFO = "side-info"
    QUANTIZED = "quantized"
    SCALED_BACKWARD = "scaled-backward"


class DelayPlacement(str, enum.Enum):
    AFTER = "after"
    BEFORE = "before"


@dataclass(frozen=True)
class SchemeConfig:
    """Everything needed to run one closed-loop configuration.

    ``feedback_noise`` is ``V_t`` for side-info and ``S_t`` for
    scaled-backward; the quantized scheme ignores it.  ``sigma_v_bar`` is
    the quantizer sensitivity; for side-info it defaults to the feedback
    noise bound and for scaled-backward to the selected value
    ``gamma_select(...)``.
    """

    scheme: Scheme
    params: SchemeParams
    forward: ForwardNoiseSpec
    p_x2: float
    feedback_noise: BoundedNoiseSpec = field(default_factory=BoundedNoiseSpec)
    sigma_v_bar: float | None = None
    sigma_s_bar: float | None = None
    p_q2: float | None = None
    delay: DelayPlacement = DelayPlacement.AFTER
    allow_sigma_v_override: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "delay", DelayPlacement(self.delay))

    @property
    def p_x(self) -> float:
        return math.sqrt(self.p_x2)

    @property
    def gamma(self) -> float | None:
        if self.sigma_s_bar is None or self.p_q2 is None:
            return None
        return analysis.gamma_select(self.forward.std, self.sigma_s_bar, self.p_x, math.sqrt(self.p_q2))

    @property
    def effective_sigma_v(self) -> float:
        if self.sigma_v_bar is not None:
            return float(self.sigma_v_bar)
        if self.scheme is Scheme.SIDE_INFO:
            return self.feedback_noise.bound
        if self.scheme is Scheme.SCALED_BACKWARD:
            return self.gamma
        raise ValueError("quantized scheme needs sigma_v_bar")

    @property
    def backward(self) -> BackwardChannelSpec:
        return BackwardChannelSpec(self.sigma_s_bar, self.effective_sigma_v, self.p_q2)

    def achievable_rate(self) -> float:
        return analysis.rho(self.forward.variance, self.p_x2, self.effective_sigma_v)


class InvalidConfig(ValueError):
    """Raised by :func:`validate_config`; ``reasons`` lists every violated hypothesis."""

    def __init__(self, reasons: list[str]):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))


def check_config(cfg: SchemeConfig) -> list[str]:
    """Return the list of violated hypotheses (empty when the config is usable)."""
    reasons = []
    scheme = cfg.scheme
    if not (math.isfinite(cfg.p_x2) and cfg.p_x2 > 0):
        return [f"requires P_X² > 0 (got {cfg.p_x2!r})"]

    if scheme is Scheme.SCALED_BACKWARD:
        if cfg.sigma_s_bar is None or cfg.p_q2 is None:
            return ["scaled-backward scheme requires σ̄_S and P_Q²"]
        if not (cfg.sigma_s_bar > 0 and cfg.p_q2 > 0):
            return ["requires σ̄_S > 0 and P_Q² > 0"]
        if math.sqrt(cfg.p_q2) <= cfg.sigma_s_bar:
            return ["requires P_Q > σ̄_S (backward power cannot cover noise amplitude)"]
        if cfg.feedback_noise.bound > cfg.sigma_s_bar:
            reasons.append(f"backward noise bound {cfg.feedback_noise.bound:g} exceeds σ̄_S = {cfg.sigma_s_bar:g}")
        gamma = cfg.gamma
        if cfg.sigma_v_bar is not None and not cfg.allow_sigma_v_override and cfg.sigma_v_bar != gamma:
            reasons.append(f"requires σ̄_V = Γ(σ_W, σ̄_S, P_X, P_Q) = {gamma:.12g} (got {cfg.sigma_v_bar:.12g}); "
                           "set the override flag to experiment")
    elif scheme is Scheme.QUANTIZED:
        if cfg.sigma_v_bar is None:
            return ["quantized scheme requires a quantizer sensitivity σ̄_V"]
    else:
        if cfg.sigma_v_bar is not None and cfg.feedback_noise.bound > cfg.sigma_v_bar:
            reasons.append(f"feedback noise bound {cfg.feedback_noise.bound:g} exceeds σ̄_V = {cfg.sigma_v_bar:g}")

    sv = cfg.effective_sigma_v
    if scheme is not Scheme.SIDE_INFO and not sv > 0:
        reasons.append("requires quantizer sensitivity σ̄_V > 0")
        return reasons
    if not 4.0 * sv * sv < cfg.p_x2:
        reasons.append(f"requires 4σ̄_V² < P_X² (4σ̄_V² = {4 * sv * sv:.12g}, P_X² = {cfg.p_x2:.12g})")
        return reasons
    rate = cfg.achievable_rate()
    if not cfg.params.r_bar < rate:
        reasons.append(f"requires r < r̄ < ϱ: r̄ ≥ ϱ (r̄ = {cfg.params.r_bar:.12g}, ϱ = {rate:.12g})")
    return reasons


def validate_config(cfg: SchemeConfig) -> SchemeConfig:
    reasons = check_config(cfg)
    if reasons:
        raise InvalidConfig(reasons)
    return cfg


@dataclass
class TrialTrajectory:
    """Per-step record for ``t = 0..n``; ``q`` is only set for scaled-backward."""

    m: int
    z: float
    m_hat: int
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    z_hat: np.ndarray
    z_err: np.ndarray | None = None
    q: np.ndarray | None = None

    @property
    def error(self) -> bool:
        return self.m != self.m_hat

    def identical(self, other: "TrialTrajectory") -> bool:
        """Bit-for-bit equality of every recorded signal."""
        if (self.m, self.m_hat) != (other.m, other.m_hat) or (self.q is None) != (other.q is None):
            return False
        names = ["x", "y", "u", "v", "z_hat", "z_err"] + (["q"] if self.q is not None else [])
        return all(getattr(self, k).tobytes() == getattr(other, k).tobytes() for k in names)


def draw_message(params: SchemeParams, rng: RngStream) -> int:
    return int(rng.generator.integers(1, params.num_messages + 1))


def _draw_noise(cfg: SchemeConfig, rng: RngStream) -> tuple[np.ndarray, np.ndarray | None]:
    steps = cfg.params.n + 1
    w = draw_forward(cfg.forward, rng, steps)
    if cfg.scheme is Scheme.QUANTIZED:
        return w, None
    return w, draw_bounded(cfg.feedback_noise, rng, steps)


def _closed_loop(cfg: SchemeConfig, z: np.ndarray, w: np.ndarray, noise: np.ndarray | None) -> dict:
    """Run a batch of trials; ``w`` and ``noise`` have shape ``(batch, n+1)``."""
    params = cfg.params
    n = params.n
    batch = z.shape[0]
    scheme = cfg.scheme
    sv = cfg.effective_sigma_v
    bspec = cfg.backward if scheme is Scheme.SCALED_BACKWARD else None
    before = cfg.delay is DelayPlacement.BEFORE

    rec = {k: np.empty((batch, n + 1)) for k in ("x", "y", "u", "v", "z_hat", "z_err")}
    if bspec is not None:
        rec["q"] = np.empty((batch, n + 1))

    enc = encoder_init(z, params)
    dec = DecoderState(0, np.zeros(batch), np.zeros(batch))
    fed_back = None  # value delivered to the encoder for use at the next step
    pending = None  # backward-channel output still awaiting the feedback decoder
    for t in range(n + 1):
        if t > 0:
            if before:
                fed_back = backward_decode(pending, bspec)
                rec["u"][:, t - 1] = fed_back
            enc = encoder_step(enc, fed_back, params)
        x = enc.x
        rec["x"][:, t] = x
        rec["z_hat"][:, t] = dec.z_hat
        rec["z_err"][:, t] = dec.z_err
        y = x + w[:, t]
        if scheme is Scheme.SIDE_INFO:
            v = noise[:, t]
            fed_back = y + v
        elif scheme is Scheme.QUANTIZED:
            fed_back = quantize(y, sv)
            v = quant_error(y, sv)
        else:
            q = backward_encode(y, bspec)
            rec["q"][:, t] = q
            received = q + noise[:, t]
            if before:
                pending = received
            else:
                fed_back = backward_decode(received, bspec)
            v = quant_error(y, sv)
        rec["y"][:, t] = y
        rec["v"][:, t] = v
        if not before or scheme is not Scheme.SCALED_BACKWARD:
            rec["u"][:, t] = fed_back
        if t < n:
            dec = decoder_step(dec, y, v, params)
    if before and scheme is Scheme.SCALED_BACKWARD:
        rec["u"][:, n] = backward_decode(pending, bspec)
    rec["m_hat"] = point_to_message(rec["z_hat"][:, n] + rec["z_err"][:, n], n, params)
    return rec


def run_trial(cfg: SchemeConfig, m: int, rng: RngStream, *, w=None, v=None) -> TrialTrajectory:
    """Simulate one block for message ``m``.

    Forward noise then feedback noise (each ``n+1`` samples) are drawn from
    ``rng``.  ``w`` / ``v`` override the drawn sequences for diagnostics
    (``v`` is the side-info corruption or the backward noise ``S_t``).
    """
    z = message_to_point(m, cfg.params)
    w_draw, n_draw = _draw_noise(cfg, rng)
    w_arr = w_draw if w is None else np.asarray(w, dtype=float)
    n_arr = n_draw if v is None else np.asarray(v, dtype=float)
    rec = _closed_loop(cfg, np.array([z]), w_arr[None, :], None if n_arr is None else n_arr[None, :])
    return TrialTrajectory(
        m=int(m), z=z, m_hat=int(rec["m_hat"][0]),
        x=rec["x"][0], y=rec["y"][0], u=rec["u"][0], v=rec["v"][0], z_hat=rec["z_hat"][0], z_err=rec["z_err"][0],
        q=rec["q"][0] if "q" in rec else None,
    )


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(errors, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class MonteCarloReport:
    scheme: str
    trials: int
    errors: int
    error_rate: float
    error_rate_ci95: tuple[float, float]
    empirical_power_x: list[float]
    empirical_power_q: list[float] | None
    bound_power_x: list[float]
    bound_power_q: list[float] | None
    bound_error_markov: float
    bound_error_gaussian: float | None
    bound_error_markov_exact_threshold: float
    bound_error_gaussian_exact_threshold: float | None
    tail_levels: list[float] = field(default_factory=list)
    tail_exceedances: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error_rate_ci95"] = list(self.error_rate_ci95)
        return d


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else ``NFC_THREADS`` (0 means one per CPU)."""
    if workers is None:
        workers = int(os.environ.get("NFC_THREADS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def _run_chunk(cfg, master_seed, start, stop, message, tail_levels):
    params = cfg.params
    count = stop - start
    steps = params.n + 1
    ms = np.empty(count, dtype=np.int64)
    w = np.empty((count, steps))
    noise = None if cfg.scheme is Scheme.QUANTIZED else np.empty((count, steps))
    for j in range(count):
        rng = RngStream(master_seed, start + j)
        ms[j] = draw_message(params, rng) if message is None else message
        wj, nj = _draw_noise(cfg, rng)
        w[j] = wj
        if noise is not None:
            noise[j] = nj
    z = (ms - 0.5) * 2.0**-params.message_bits
    rec = _closed_loop(cfg, z, w, noise)
    x_n = np.abs(rec["x"][:, params.n])
    return {
        "errors": int(np.count_nonzero(rec["m_hat"] != ms)),
        "sum_x2": np.sum(rec["x"] ** 2, axis=0),
        "sum_q2": np.sum(rec["q"] ** 2, axis=0) if "q" in rec else None,
        "tail": [int(np.count_nonzero(x_n >= a)) for a in tail_levels],
    }


def run_trials(cfg: SchemeConfig, trials: int, master_seed: int, *, message: int | None = None,
               tail_levels=(), workers: int | None = None) -> MonteCarloReport:
    """Estimate the block error rate and per-step second moments over ``trials`` blocks.

    Messages are uniform unless ``message`` fixes one.  ``tail_levels`` adds
    counts of ``|X_n| >= level``.
    """
    validate_config(cfg)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if message is not None:
        message_to_point(message, cfg.params)
    tail_levels = [float(a) for a in tail_levels]
    bounds = [(s, min(s + CHUNK_TRIALS, trials)) for s in range(0, trials, CHUNK_TRIALS)]
    nworkers = min(resolve_workers(workers), len(bounds))

    def job(b):
        return _run_chunk(cfg, master_seed, b[0], b[1], message, tail_levels)

    if nworkers > 1:
        with ThreadPoolExecutor(nworkers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]

    errors = 0
    sum_x2 = np.zeros(cfg.params.n + 1)
    sum_q2 = np.zeros(cfg.params.n + 1) if cfg.scheme is Scheme.SCALED_BACKWARD else None
    tail = [0] * len(tail_levels)
    for part in parts:
        errors += part["errors"]
        sum_x2 = sum_x2 + part["sum_x2"]
        if sum_q2 is not None:
            sum_q2 = sum_q2 + part["sum_q2"]
        tail = [a + b for a, b in zip(tail, part["tail"])]

    return _assemble_report(cfg, trials, errors, sum_x2 / trials,
                            None if sum_q2 is None else sum_q2 / trials, tail_levels, tail)


def _assemble_report(cfg, trials, errors, power_x, power_q, tail_levels, tail) -> MonteCarloReport:
    p = cfg.params
    sv = cfg.effective_sigma_v
    sw2 = cfg.forward.variance
    ts = range(p.n + 1)
    bound_x = [analysis.power_bound_x(t, p.r_bar, sw2, sv, cfg.p_x) for t in ts]
    bound_q = None
    if cfg.scheme is Scheme.SCALED_BACKWARD:
        pq = math.sqrt(cfg.p_q2)
        bound_q = [analysis.power_bound_q(t, p.r_bar, pq, cfg.sigma_s_bar, cfg.p_x, cfg.forward.std) for t in ts]
    e_xn2 = analysis.power_bound_x_constrained(p.n, p.r_bar, cfg.p_x)
    thr = analysis.error_threshold(p.n, p.r, p.r_bar)
    markov = analysis.error_bound_markov(p.n, p.r, p.r_bar, e_xn2)
    markov_exact = min(1.0, analysis.error_bound_markov(p.n, p.r, p.r_bar, e_xn2, threshold=thr))
    gauss = gauss_exact = None
    if cfg.forward.kind is ForwardKind.GAUSSIAN:
        tc = analysis.tail_constants(p.r_bar, sv, sw2)
        gauss = analysis.error_bound_gaussian(p.n, p.r, p.r_bar, tc)
        gauss_exact = analysis.error_bound_gaussian(p.n, p.r, p.r_bar, tc, threshold=thr)
    return MonteCarloReport(
        scheme=cfg.scheme.value,
        trials=trials,
        errors=errors,
        error_rate=errors / trials,
        error_rate_ci95=wilson_interval(errors, trials),
        empirical_power_x=[float(v) for v in power_x],
        empirical_power_q=None if power_q is None else [float(v) for v in power_q],
        bound_power_x=bound_x,
        bound_power_q=bound_q,
        bound_error_markov=markov,
        bound_error_gaussian=gauss,
        bound_error_markov_exact_threshold=markov_exact,
        bound_error_gaussian_exact_threshold=gauss_exact,
        tail_levels=list(tail_levels),
        tail_exceedances=list(tail),
    )


def check_estimation_identity(traj: TrialTrajectory, params: SchemeParams, z: float | None = None) -> float:
    """Normwise relative gap between ``X_t`` and ``2^(r_bar t)(2^r_bar - 2^-r_bar)(Zhat_t - Z)``.

    The largest gap over ``t`` is divided by the largest magnitude of either
    side over the trajectory.  The identity amplifies a rounding error made
    at step ``s`` by ``2^(r_bar (t - s))``, so a pointwise ratio is dominated
    by roundoff whenever ``X_t`` passes near zero.
    """
    if params.n > CLOSED_FORM_MAX_T:
        raise ValueError(f"identity check limited to n <= {CLOSED_FORM_MAX_T}")
    z = traj.z if z is None else z
    err = np.zeros(params.n + 1) if traj.z_err is None else traj.z_err
    c = params.gain - 1.0 / params.gain
    t = np.arange(params.n + 1)
    rhs = 2.0 ** (params.r_bar * t) * c * ((traj.z_hat - z) + err)
    scale = max(float(np.max(np.abs(traj.x))), float(np.max(np.abs(rhs))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(traj.x - rhs))) / scale


def side_info_twin(cfg: SchemeConfig) -> SchemeConfig:
    """Side-info config with the same forward link, for injecting a chosen ``V_t``."""
    sv = cfg.effective_sigma_v
    return replace(cfg, scheme=Scheme.SIDE_INFO, sigma_v_bar=sv, sigma_s_bar=None, p_q2=None,
                   feedback_noise=BoundedNoiseSpec(BoundedKind.UNIFORM, sv))
