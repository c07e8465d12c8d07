"""Quasi-random peaked brick-wall circuits: construction, obfuscation and simulation."""

from .circuit import Block, Circuit, Metadata, build_mirror, generate_random_half
from .errors import PeakedError
from .linalg import U3Params, block_matrix, deviation

__all__ = [
    "Block",
    "Circuit",
    "Metadata",
    "PeakedError",
    "U3Params",
    "block_matrix",
    "build_mirror",
    "deviation",
    "generate_random_half",
]
