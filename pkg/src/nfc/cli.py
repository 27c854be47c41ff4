"""``nfc`` command line: rate sweeps, bound tables, Monte Carlo runs, invariant suite.

Parameters resolve as flags > ``--config`` file > built-in defaults.  A config
file is a flat YAML/JSON mapping of flag names; a run manifest written by a
previous invocation is also accepted and replays that run.

Exit codes: 0 success, 2 invalid parameters, 3 I/O failure, 4 verify failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analysis
from .numerics import BoundedKind, BoundedNoiseSpec, ForwardKind, ForwardNoiseSpec
from .scheme import SchemeParams
from .simulator import InvalidConfig, Scheme, SchemeConfig, check_config, run_trials

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_VERIFY = 4

DEFAULTS = {
    "sigma_w2": 1.0,
    "px2": 4.0,
    "pq2": 4.0,
    "sigma_v": None,
    "sigma_s": 0.1,
    "rate": 0.5,
    "rbar": 0.6,
    "n": 30,
    "trials": 10_000,
    "seed": 1,
    "scheme": "quantized",
    "noise": "gaussian",
    "feedback_noise": "uniform",
    "delay": "after",
    "out": None,
    "message": None,
    "override_sigma_v": False,
}

COMMAND_DEFAULTS = {
    "rate-sweep": {"min": 0.0, "max": 1.0, "points": 1000},
    "gamma-sweep": {"min": 1e-6, "max": 0.99, "points": 100, "pq_list": "1,2,4,8"},
    "bounds": {"n_min": 1, "n_max": 60, "exact_threshold": False},
    "simulate": {},
    "verify": {},
}


class UsageError(Exception):
    pass


def fmt(v: float) -> str:
    return f"{v:.12g}"


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=None)
    p.add_argument("--sigma-w2", type=float, help="forward noise variance")
    p.add_argument("--px2", type=float, help="forward power constraint P_X^2")
    p.add_argument("--pq2", type=float, help="backward power constraint P_Q^2")
    p.add_argument("--sigma-v", type=float, help="feedback corruption bound / quantizer sensitivity")
    p.add_argument("--sigma-s", type=float, help="backward channel noise bound")
    p.add_argument("--rate", type=float, help="target rate r (bits per use)")
    p.add_argument("--rbar", type=float, help="operator rate r_bar")
    p.add_argument("--n", type=int, help="block length")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--noise", choices=[k.value for k in ForwardKind])
    p.add_argument("--feedback-noise", choices=[k.value for k in BoundedKind])
    p.add_argument("--delay", choices=["after", "before"])
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--config", help="flat YAML/JSON parameter file or run manifest")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="nfc", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"nfc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("rate-sweep", parents=[common], help="achievable rate vs feedback corruption")
    sp.add_argument("--min", type=float)
    sp.add_argument("--max", type=float)
    sp.add_argument("--points", type=int)

    sp = sub.add_parser("gamma-sweep", parents=[common], help="achievable rate vs backward noise, per P_Q")
    sp.add_argument("--min", type=float)
    sp.add_argument("--max", type=float)
    sp.add_argument("--points", type=int)
    sp.add_argument("--pq-list", help="comma-separated P_Q amplitudes")

    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo run, JSON report")
    sp.add_argument("--message", type=int, help="fix the transmitted message")
    sp.add_argument("--override-sigma-v", action="store_true", default=None,
                    help="allow --sigma-v other than the selected value for scaled-backward")

    sp = sub.add_parser("bounds", parents=[common], help="error and power bounds vs block length")
    sp.add_argument("--n-min", type=int)
    sp.add_argument("--n-max", type=int)
    sp.add_argument("--exact-threshold", action="store_true", default=None,
                    help="use the exact decoding threshold instead of the closed-form amplitude")

    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a flat mapping")
    if "manifest" in data and isinstance(data["manifest"], dict):
        data = data["manifest"]
    if "params" in data and isinstance(data["params"], dict):
        data = data["params"]
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace) -> dict:
    params = dict(DEFAULTS)
    params.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        loaded = _load_config(args.config)
        unknown = set(loaded) - set(params)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        params.update(loaded)
    for k, v in vars(args).items():
        if k in params and v is not None:
            params[k] = v
    return params


def manifest(command: str, params: dict) -> dict:
    return {
        "command": command,
        "params": params,
        "master_seed": params.get("seed"),
        "tool_version": __version__,
        "outputs": [params["out"]] if params.get("out") else [],
    }


def _emit(text: str, params: dict, command: str, sidecar: bool = True):
    out = params.get("out")
    if not out:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text)
    if sidecar:
        Path(str(path) + ".manifest.json").write_text(json.dumps(manifest(command, params), indent=2, sort_keys=True) + "\n")


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _grid(params: dict) -> np.ndarray:
    lo, hi, pts = float(params["min"]), float(params["max"]), int(params["points"])
    if pts < 2 or not lo < hi:
        raise UsageError("sweep needs min < max and at least 2 points")
    return np.linspace(lo, hi, pts)


def rate_sweep_rows(sigma_w2: float, px2: float, grid) -> list[tuple[float, float]]:
    return [(float(s), analysis.rho(sigma_w2, px2, float(s))) for s in grid]


def cmd_rate_sweep(params: dict) -> int:
    rows = rate_sweep_rows(params["sigma_w2"], params["px2"], _grid(params))
    _emit(_csv(["sigma_v_bar", "rho"], ([fmt(s), fmt(r)] for s, r in rows)), params, "rate-sweep")
    return EXIT_OK


def gamma_sweep_rows(sigma_w2: float, px2: float, grid, pqs) -> list[tuple[float, float, float, int]]:
    """``(sigma_s, P_Q, rate, valid)``; ``valid=0`` marks ``P_Q <= sigma_s`` where the selector is undefined."""
    rows = []
    for s in grid:
        for pq in pqs:
            if pq > s:
                rows.append((float(s), pq, analysis.rho_composed(sigma_w2, px2, float(s), pq), 1))
            else:
                rows.append((float(s), pq, 0.0, 0))
    return rows


def cmd_gamma_sweep(params: dict) -> int:
    pq_list = params["pq_list"]
    if isinstance(pq_list, str):
        pq_list = [float(v) for v in pq_list.split(",") if v.strip()]
    if not pq_list or min(pq_list) <= 0:
        raise UsageError("--pq-list needs positive values")
    rows = gamma_sweep_rows(params["sigma_w2"], params["px2"], _grid(params), pq_list)
    text = _csv(["sigma_s_bar", "pq", "rho_composed", "valid"],
                ([fmt(s), fmt(pq), fmt(r), str(ok)] for s, pq, r, ok in rows))
    _emit(text, params, "gamma-sweep")
    return EXIT_OK


def config_from_params(params: dict) -> SchemeConfig:
    scheme = Scheme(params["scheme"])
    try:
        sp = SchemeParams(int(params["n"]), float(params["rate"]), float(params["rbar"]))
        fwd = ForwardNoiseSpec(ForwardKind(params["noise"]), float(params["sigma_w2"]))
    except ValueError as exc:
        raise InvalidConfig([str(exc)]) from exc
    kind = BoundedKind(params["feedback_noise"])
    sv = params["sigma_v"]
    if scheme is Scheme.SCALED_BACKWARD:
        ss = float(params["sigma_s"])
        return SchemeConfig(scheme, sp, fwd, float(params["px2"]), BoundedNoiseSpec(kind, ss),
                            sigma_v_bar=sv, sigma_s_bar=ss, p_q2=float(params["pq2"]),
                            delay=params["delay"], allow_sigma_v_override=bool(params["override_sigma_v"]))
    sv = 0.25 if sv is None else float(sv)
    if scheme is Scheme.SIDE_INFO:
        return SchemeConfig(scheme, sp, fwd, float(params["px2"]), BoundedNoiseSpec(kind, sv),
                            sigma_v_bar=sv, delay=params["delay"])
    return SchemeConfig(scheme, sp, fwd, float(params["px2"]), sigma_v_bar=sv, delay=params["delay"])


def cmd_simulate(params: dict) -> int:
    cfg = config_from_params(params)
    reasons = check_config(cfg)
    if reasons:
        raise InvalidConfig(reasons)
    if int(params["trials"]) < 1:
        raise UsageError("--trials must be >= 1")
    report = run_trials(cfg, int(params["trials"]), int(params["seed"]), message=params["message"])
    doc = {
        "manifest": manifest("simulate", params),
        "config": {
            "scheme": cfg.scheme.value,
            "n": cfg.params.n,
            "r": cfg.params.r,
            "r_bar": cfg.params.r_bar,
            "message_bits": cfg.params.message_bits,
            "sigma_v_bar": cfg.effective_sigma_v,
            "achievable_rate": cfg.achievable_rate(),
        },
        "report": report.to_dict(),
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", params, "simulate", sidecar=False)
    return EXIT_OK


def bounds_rows(params: dict) -> list[list[float]]:
    r, rb = float(params["rate"]), float(params["rbar"])
    if not 0 < r < rb:
        raise InvalidConfig(["requires r < r̄"])
    sw2, px = float(params["sigma_w2"]), math.sqrt(float(params["px2"]))
    sv = params["sigma_v"]
    ss, pq = float(params["sigma_s"]), math.sqrt(float(params["pq2"]))
    if sv is None:
        sv = analysis.gamma_select(math.sqrt(sw2), ss, px, pq) if params["scheme"] == "scaled-backward" else 0.25
    tc = analysis.tail_constants(rb, float(sv), sw2)
    steady_x = analysis.power_bound_x_steady(rb, sw2, float(sv))
    steady_q = analysis.power_bound_q(math.inf, rb, pq, ss, px, math.sqrt(sw2)) if pq > ss else math.nan
    rows = []
    for n in range(int(params["n_min"]), int(params["n_max"]) + 1):
        thr = analysis.error_threshold(n, r, rb) if params["exact_threshold"] else None
        e_xn2 = analysis.power_bound_x_constrained(n, rb, px)
        rows.append([n, analysis.error_bound_markov(n, r, rb, e_xn2, threshold=thr),
                     analysis.error_bound_gaussian(n, r, rb, tc, threshold=thr), steady_x, steady_q])
    return rows


def cmd_bounds(params: dict) -> int:
    rows = bounds_rows(params)
    header = ["n", "markov_bound", "gaussian_bound", "power_bound_x_steady", "power_bound_q_steady"]
    _emit(_csv(header, ([str(row[0])] + [fmt(v) for v in row[1:]] for row in rows)), params, "bounds")
    return EXIT_OK


def cmd_verify(params: dict) -> int:
    from .verify import run_all

    results = run_all(int(params["seed"]))
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} properties passed")
    _emit("\n".join(lines) + "\n", params, "verify")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


COMMANDS = {
    "rate-sweep": cmd_rate_sweep,
    "gamma-sweep": cmd_gamma_sweep,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        params = resolve(args)
        return COMMANDS[args.command](params)
    except InvalidConfig as exc:
        for reason in exc.reasons:
            print(f"nfc: invalid configuration: {reason}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, ValueError) as exc:
        print(f"nfc: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"nfc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
