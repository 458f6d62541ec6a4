from ._lwpk import (
    ConfigError,
    LwpkError,
    ablate,
    ari,
    clustering_accuracy,
    config_text,
    offset_distance,
    run,
    sign_test_p_value,
    summarize,
)

__all__ = [
    "ConfigError",
    "LwpkError",
    "ablate",
    "ari",
    "clustering_accuracy",
    "config_text",
    "offset_distance",
    "run",
    "sign_test_p_value",
    "summarize",
]
