import os

from app.core.errors import ConfigError

DEFAULT_STEP = 1e-3
DEFAULT_X_MIN = 1e-8
DEFAULT_PRECISION = 17
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name}={raw!r} is not a number") from None
    if not value > 0.0:
        raise ConfigError(f"{name} must be positive, got {raw!r}")
    return value


def _env_flag(name: str, default: bool) -> bool:
    v = os.getenv(name, "").strip().lower()
    if not v:
        return default
    return v in ("1", "true", "yes", "y", "on")


def get_x_min() -> float:
    # Singularity guard for the 1/x^3 coupling.
    return _env_float("ERMAKOV_XMIN", DEFAULT_X_MIN)


def get_default_step() -> float:
    return _env_float("ERMAKOV_STEP", DEFAULT_STEP)


def get_precision() -> int:
    raw = os.getenv("ERMAKOV_PRECISION", "").strip()
    if not raw:
        return DEFAULT_PRECISION
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"ERMAKOV_PRECISION={raw!r} is not an integer") from None
    if not 1 <= value <= 17:
        raise ConfigError(f"ERMAKOV_PRECISION must lie in [1, 17], got {value}")
    return value


def get_log_level() -> str:
    level = os.getenv("ERMAKOV_LOG_LEVEL", "").strip().upper() or "WARNING"
    if level not in LOG_LEVELS:
        raise ConfigError(f"ERMAKOV_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    return level


def exact_check_enabled() -> bool:
    return _env_flag("ERMAKOV_EXACT_CHECK", True)
