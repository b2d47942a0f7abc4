"""Result containers shared by the cell solvers."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .exceptions import InvalidParameterError
from .lattice import LatticeFunction


@dataclass
class CellProblemResult:
    """Normalized minimum of one cell problem of size ``T``."""

    T: int
    value: float
    minimizer: LatticeFunction | None
    diagnostics: dict = dc_field(default_factory=dict)


@dataclass
class DensityEstimate:
    samples: list            # (T, value) pairs
    estimate: float          # value at the largest T
    extrapolated: float      # Richardson in 1/T from the two largest sizes (nan if one size)
    results: list = dc_field(default_factory=list)

    def __iter__(self):
        return iter((self.samples, self.estimate))


def check_sizes(sizes, minimum: int = 2) -> list[int]:
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InvalidParameterError("sizes must be nonempty")
    if any(s < minimum for s in sizes):
        raise InvalidParameterError(f"every size must be at least {minimum}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidParameterError("sizes must be strictly increasing")
    return sizes


def richardson(samples) -> float:
    """Extrapolate ``a + b/T`` through the last two samples."""
    if len(samples) < 2:
        return float("nan")
    (t1, v1), (t2, v2) = samples[-2], samples[-1]
    return (t2 * v2 - t1 * v1) / (t2 - t1)
