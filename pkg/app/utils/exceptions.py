"""Error Handling Utilities
========================
Defines the simulator's exception hierarchy and standardizes how
configuration validation errors are reported, mapping pydantic error types
to uniform error codes and CLI exit statuses.
"""

from __future__ import annotations

from typing import ClassVar

from pydantic import ValidationError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""

    code: ClassVar[str] = "SIMULATION_ERROR"
    exit_code: ClassVar[int] = EXIT_FAILURE

    def __init__(self, message: str, *, code: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code  # type: ignore[misc]

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ConfigurationError(SimulationError):
    code = "CONFIGURATION_ERROR"
    exit_code = EXIT_CONFIG

    def __init__(
        self, message: str, *, key: str | None = None, code: str | None = None
    ) -> None:
        super().__init__(message, code=code)
        self.key = key


class InputError(SimulationError):
    code = "INPUT_ERROR"
    exit_code = EXIT_CONFIG


class ProtocolError(SimulationError):
    code = "PROTOCOL_ERROR"
    exit_code = EXIT_CONFIG


class SingularSystemError(SimulationError):
    code = "SINGULAR_SYSTEM"
    exit_code = EXIT_CONFIG

    def __init__(self, pair: tuple[int, int]) -> None:
        m, k = pair
        super().__init__(
            f"self path estimate of node {m + 1} is identically zero; "
            f"cannot fit compensation filter c_{m + 1}{k + 1}"
        )
        self.pair = pair


class NotReadyError(SimulationError):
    """Raised when a windowed statistic is read before enough samples exist."""

    code = "NOT_READY"


class StreamExhaustedError(SimulationError):
    code = "STREAM_EXHAUSTED"


class NumericalAbortError(SimulationError):
    code = "NUMERICAL_ABORT"
    exit_code = EXIT_NUMERICAL

    def __init__(self, node: int, sample: int, quantity: str) -> None:
        super().__init__(
            f"non-finite {quantity} at node {node + 1}, sample {sample}"
        )
        self.node = node
        self.sample = sample
        self.quantity = quantity


class CausalityError(SimulationError):
    code = "CAUSALITY_VIOLATION"


def get_error_key(error_type: str, error_msg: str = "") -> str:
    """Get standardized error key based on Pydantic error type."""
    type_map = {
        # Number validations
        "int_type": "MUST_BE_INTEGER",
        "int_parsing": "MUST_BE_INTEGER",
        "float_type": "MUST_BE_NUMBER",
        "float_parsing": "MUST_BE_NUMBER",
        "finite_number": "MUST_BE_FINITE",
        "greater_than": "TOO_SMALL",
        "greater_than_equal": "TOO_SMALL",
        "less_than": "TOO_LARGE",
        "less_than_equal": "TOO_LARGE",
        # Strings and paths
        "string_type": "MUST_BE_STRING",
        "path_type": "MUST_BE_PATH",
        # Boolean
        "bool_type": "MUST_BE_BOOLEAN",
        "bool_parsing": "MUST_BE_BOOLEAN",
        # Collections
        "list_type": "MUST_BE_LIST",
        "dict_type": "MUST_BE_OBJECT",
        "model_type": "MUST_BE_OBJECT",
        "too_short": "TOO_FEW_ITEMS",
        "too_long": "TOO_MANY_ITEMS",
        # Common validations
        "missing": "REQUIRED",
        "extra_forbidden": "UNKNOWN_KEY",
        "literal_error": "INVALID_CHOICE",
        "enum": "INVALID_CHOICE",
    }

    if error_type in type_map:
        return type_map[error_type]

    if error_type == "value_error":
        msg_lower = error_msg.lower()
        if "delay" in msg_lower:
            return "INVALID_DELAY"
        if "length" in msg_lower:
            return "INVALID_LENGTH"
        if "sample count" in msg_lower or "integral" in msg_lower:
            return "NOT_INTEGRAL"
        return "INVALID_VALUE"

    return "INVALID"


def format_field_path(location: tuple[int | str, ...]) -> str:
    if not location:
        return "unknown"

    path_parts: list[str] = []
    for part in location:
        if isinstance(part, int):
            if path_parts:
                path_parts[-1] = f"{path_parts[-1]}[{part}]"
            else:
                path_parts.append(f"[{part}]")
        else:
            path_parts.append(part)

    return ".".join(path_parts) if path_parts else str(location[-1])


def format_validation_error(exc: ValidationError) -> dict[str, str]:
    """Map every validation failure to ``{dotted.path: VALIDATION_<FIELD>_<KEY>}``."""
    errors: dict[str, str] = {}

    for error in exc.errors():
        field_path = format_field_path(tuple(error.get("loc", ())))
        error_key = get_error_key(error.get("type", ""), error.get("msg", ""))

        field_name = field_path.split(".")[-1].split("[")[0].upper() or "ROOT"
        errors[field_path] = f"VALIDATION_{field_name}_{error_key}"

    return errors


def configuration_error_from(exc: ValidationError) -> ConfigurationError:
    """Wrap a pydantic failure so the CLI reports the first offending key."""
    errors = format_validation_error(exc)
    key, code = next(iter(errors.items()), ("unknown", "VALIDATION_INVALID"))
    details = "; ".join(f"{path}: {value}" for path, value in errors.items())
    return ConfigurationError(details, key=key, code=code)
