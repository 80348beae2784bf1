from ._core import (
    Environment,
    Policy,
    compute_gae,
    conflate,
    conflate_weighted,
    mpc_solve,
    normalized_entropy,
)

__all__ = [
    "Environment",
    "Policy",
    "compute_gae",
    "conflate",
    "conflate_weighted",
    "mpc_solve",
    "normalized_entropy",
]
