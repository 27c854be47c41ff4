"""Schalkwijk-Kailath style coding over white-noise channels with corrupted feedback."""

__version__ = "0.1.0"

from .analysis import gamma_select, rho, rho_composed, solve_rate, tail_constants  # noqa: E402
from .backward import backward_decode, backward_encode, quant_error, quantize  # noqa: E402
from .scheme import SchemeParams, message_to_point, point_to_message  # noqa: E402
from .simulator import Scheme, SchemeConfig, run_trial, run_trials, validate_config  # noqa: E402

__all__ = [
    "gamma_select",
    "rho",
    "rho_composed",
    "solve_rate",
    "tail_constants",
    "backward_decode",
    "backward_encode",
    "quant_error",
    "quantize",
    "SchemeParams",
    "message_to_point",
    "point_to_message",
    "Scheme",
    "SchemeConfig",
    "run_trial",
    "run_trials",
    "validate_config",
]
