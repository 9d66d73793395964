"""Shared helpers: unit conversions, environment switches and the UTC clock."""

from __future__ import annotations

import math
import os
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version

TWO_PI = 2.0 * math.pi

DEFAULT_DIMENSION_GUARD = 4096
DEFAULT_OUTPUT_DIR = "./etsim_output"
DEFAULT_WORKERS = 4


def get_current_utc_time() -> datetime:
    """Get the current UTC time without timezone info and microseconds."""
    return datetime.now(timezone.utc).replace(tzinfo=None).replace(microsecond=0)


def tool_version() -> str:
    try:
        return version("et-entanglement-sim")
    except PackageNotFoundError:
        return "0.1.0+local"


def dimension_guard() -> int:
    """Largest Hilbert-space dimension a builder will accept."""
    return int(os.getenv("ETSIM_DIMENSION_GUARD", DEFAULT_DIMENSION_GUARD))


def default_output_dir() -> str:
    return os.getenv("ETSIM_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)


def default_workers() -> int:
    return max(1, int(os.getenv("ETSIM_WORKERS", DEFAULT_WORKERS)))


def load_local_env() -> None:
    """Load a local .env unless told not to (deployed runs set ETSIM_NO_DOTENV)."""
    if os.getenv("ETSIM_NO_DOTENV") is None:
        from dotenv import load_dotenv

        load_dotenv()


# Time axes. Internally every duration is in units of 1/omega0; omega0 itself
# is carried in angular kHz (rad/ms), so t[1/omega0] = t[ms] * omega0[rad/ms].

def ms_to_omega0_time(t_ms: float, omega0_angular_khz: float) -> float:
    return t_ms * omega0_angular_khz


def omega0_time_to_ms(t: float, omega0_angular_khz: float) -> float:
    return t / omega0_angular_khz


def khz_to_omega0(value_khz: float, omega0_angular_khz: float) -> float:
    """Convert an ordinary-frequency coupling in kHz to units of omega0."""
    return TWO_PI * value_khz / omega0_angular_khz


def omega0_to_khz(value: float, omega0_angular_khz: float) -> float:
    return value * omega0_angular_khz / TWO_PI
