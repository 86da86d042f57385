"""Constellation sets: construction, minimum distance, nearest-symbol mapping.

All detectors and closed-form bounds in this package are driven by two
constellation quantities: the minimum pairwise distance d_min and the average
symbol energy.  Both are computed exactly at construction time and cached on
the (immutable) Constellation object.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ConstellationKind(enum.Enum):
    PSK = "psk"
    QAM = "qam"
    CUSTOM = "custom"


def _pairwise_min_distance(symbols: np.ndarray) -> float:
    diffs = symbols[:, None] - symbols[None, :]
    dist = np.abs(diffs)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


@dataclass(frozen=True)
class Constellation:
    """An ordered set of complex constellation points.

    ``d_min`` and ``avg_energy`` are always recomputed from the symbol list,
    so custom (possibly unnormalized) sets report their true geometry.
    Instances are immutable and safe to share across worker processes.
    """

    symbols: np.ndarray
    kind: ConstellationKind = ConstellationKind.CUSTOM
    M: int = field(init=False)
    d_min: float = field(init=False)
    avg_energy: float = field(init=False)

    def __post_init__(self) -> None:
        sym = np.asarray(self.symbols, dtype=np.complex128).ravel()
        if sym.size < 2:
            raise ValueError(f"constellation needs at least 2 symbols, got {sym.size}")
        if not np.all(np.isfinite(sym.view(np.float64))):
            raise ValueError("constellation symbols must be finite")
        d = _pairwise_min_distance(sym)
        if d == 0.0:
            raise ValueError("constellation symbols must be pairwise distinct")
        sym.setflags(write=False)
        object.__setattr__(self, "symbols", sym)
        object.__setattr__(self, "M", int(sym.size))
        object.__setattr__(self, "d_min", d)
        object.__setattr__(self, "avg_energy", float(np.mean(np.abs(sym) ** 2)))

    def cache_token(self) -> tuple:
        """Hashable identity used to key per-process enumeration caches."""
        return (self.kind.value, self.M, self.symbols.tobytes())

    def __eq__(self, other) -> bool:
        return isinstance(other, Constellation) and self.cache_token() == other.cache_token()

    def __hash__(self) -> int:
        return hash(self.cache_token())


def make_constellation(kind: ConstellationKind | str, M: int) -> Constellation:
    """Build a unit-average-energy M-PSK or square M-QAM constellation.

    PSK places symbols at angles 2*pi*k/M, k = 0..M-1 (no phase rotation;
    results are rotation invariant, one convention is fixed for determinism).
    QAM uses the square {+-1, +-3, ...} grid scaled to unit average energy and
    requires M to be an even power of two (4, 16, 64, ...).
    """
    if isinstance(kind, str):
        kind = ConstellationKind(kind.lower())
    M = int(M)
    if kind is ConstellationKind.PSK:
        if M < 2:
            raise ValueError(f"PSK needs M >= 2, got {M}")
        angles = 2.0 * np.pi * np.arange(M) / M
        symbols = np.exp(1j * angles)
    elif kind is ConstellationKind.QAM:
        side = round(np.sqrt(M))
        if M < 4 or side * side != M or (side & (side - 1)) != 0:
            raise ValueError(f"QAM needs M an even power of two (4, 16, 64, ...), got {M}")
        levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
        re, im = np.meshgrid(levels, levels, indexing="ij")
        grid = (re + 1j * im).ravel()
        symbols = grid / np.sqrt(np.mean(np.abs(grid) ** 2))
    else:
        raise ValueError("use Constellation(symbols) directly for custom sets")
    return Constellation(symbols=symbols, kind=kind)


def custom_constellation(points) -> Constellation:
    """Wrap an explicit list of complex points; no normalization is applied."""
    return Constellation(symbols=np.asarray(points, dtype=np.complex128), kind=ConstellationKind.CUSTOM)


def min_distance(c: Constellation) -> float:
    """Exact minimum |s - s'| over all distinct symbol pairs."""
    return _pairwise_min_distance(c.symbols)


def nearest_symbol(c: Constellation, z: complex) -> int:
    """Index of the symbol closest to z; ties break to the lowest index."""
    z = complex(z)
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise ValueError(f"nearest_symbol needs a finite point, got {z!r}")
    return int(np.argmin(np.abs(c.symbols - z)))


def nearest_symbols(c: Constellation, z: np.ndarray) -> np.ndarray:
    """Entrywise nearest-symbol indices for a vector of points."""
    z = np.asarray(z, dtype=np.complex128)
    if not np.all(np.isfinite(z.view(np.float64))):
        raise ValueError("nearest_symbols needs finite points")
    # argmin returns the first (lowest-index) minimizer, matching nearest_symbol
    return np.argmin(np.abs(z[..., None] - c.symbols), axis=-1)
