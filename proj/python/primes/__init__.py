"""Python access to the primes annotation pipeline library."""

from ._core import (
    ConfigError,
    IoError,
    PrimesError,
    ValidationError,
    call_cost,
    detect_duplicates,
    evaluate_gate,
    kappa,
    required_sample_size,
    run_pipeline,
    sha256_hex,
    validate_format,
)

__all__ = [
    "ConfigError",
    "IoError",
    "PrimesError",
    "ValidationError",
    "call_cost",
    "detect_duplicates",
    "evaluate_gate",
    "kappa",
    "required_sample_size",
    "run_pipeline",
    "sha256_hex",
    "validate_format",
]
