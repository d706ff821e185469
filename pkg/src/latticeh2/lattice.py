"""Discrete tori and spatially invariant feedback kernels.

Sites of the torus ``Z_L^d`` are multi-indices ``(k_1, ..., k_d)`` with
componentwise arithmetic modulo ``L``. A feedback kernel is stored as a sparse
list of ``(offset, gain)`` pairs; its action on a field is the periodic
convolution ``(F x)_k = sum_l f_{k-l} x_l``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionViolation, DimensionMismatch, WindowTooLarge

__all__ = [
    "Kind",
    "LatticeShape",
    "FeedbackArray",
    "make_feedback_array",
    "window_kernel",
    "nearest_neighbor_kernel",
    "absolute_kernel",
    "circulant_matrix",
    "convolve",
    "kernel_from_dict",
    "kernel_to_dict",
    "load_kernel",
]

MAX_DIM = 5
ZERO_SUM_RTOL = 1e-12
SYMMETRY_RTOL = 1e-12


class Kind(str, enum.Enum):
    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class LatticeShape:
    """The torus ``Z_L^d`` with ``N = L**d`` sites."""

    d: int
    L: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or not 1 <= self.d <= MAX_DIM:
            raise ValueError(f"dimension d must be an integer in [1, {MAX_DIM}], got {self.d!r}")
        if not isinstance(self.L, (int, np.integer)) or self.L < 1:
            raise ValueError(f"side length L must be a positive integer, got {self.L!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", int(self.L))

    @property
    def N(self) -> int:
        return self.L**self.d

    @property
    def dims(self) -> tuple:
        return (self.L,) * self.d

    def sites(self) -> np.ndarray:
        """All multi-indices as an ``(N, d)`` integer array, row-major order."""
        return np.indices(self.dims).reshape(self.d, -1).T

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi) % self.L
        return np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), self.dims)


@dataclass(frozen=True)
class FeedbackArray:
    """Validated, spatially invariant convolution kernel.

    Use :func:`make_feedback_array` (or one of the kernel helpers) rather than
    the constructor; the constructor trusts its inputs.
    """

    offsets: tuple
    gains: tuple
    kind: Kind
    q: int = field(default=0)

    @property
    def d(self) -> int:
        return len(self.offsets[0])

    @property
    def beta(self) -> float:
        """Infinity norm of the gain array."""
        return float(max(abs(g) for g in self.gains)) if self.gains else 0.0

    @property
    def total(self) -> float:
        return float(sum(self.gains))

    @property
    def absolute_gain(self) -> float:
        """``f0 = -sum_k f_k`` for absolute kernels, zero for relative ones."""
        return -self.total if self.kind is Kind.ABSOLUTE else 0.0

    @property
    def offset_array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=int).reshape(len(self.offsets), -1)

    @property
    def gain_array(self) -> np.ndarray:
        return np.asarray(self.gains, dtype=float)

    def gain_at(self, offset) -> float:
        offset = tuple(int(o) for o in offset)
        for k, g in zip(self.offsets, self.gains):
            if k == offset:
                return g
        return 0.0

    def scaled(self, factor: float) -> "FeedbackArray":
        """Kernel with every gain multiplied by ``factor`` (must be positive)."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return make_feedback_array(self.offsets, [factor * g for g in self.gains], self.kind)

    def fits(self, shape: LatticeShape) -> bool:
        return 2 * self.q + 1 <= shape.L

    def check_fits(self, shape: LatticeShape) -> None:
        if self.d != shape.d:
            raise DimensionMismatch(f"kernel is {self.d}-dimensional, lattice is {shape.d}-dimensional")
        if not self.fits(shape):
            raise WindowTooLarge(f"window q={self.q} needs L >= {2 * self.q + 1}, got L={shape.L}")


def make_feedback_array(offsets, gains, kind) -> FeedbackArray:
    """Build a kernel and check it against the admissibility assumptions.

    Parameters
    ----------
    offsets : sequence of int tuples
        Multi-indices ``k`` (all of the same length ``d``). Plain integers are
        accepted for ``d = 1``.
    gains : sequence of float
        Gain ``f_k`` for each offset.
    kind : Kind or str
        ``"relative"`` (gains sum to zero) or ``"absolute"`` (gains sum to a
        strictly negative value ``-f0``).

    Raises
    ------
    AssumptionViolation
        If the kernel is asymmetric, not axis aligned, anisotropic, or has the
        wrong zero-frequency sum for its kind.
    """
    kind = Kind(kind.value if isinstance(kind, Kind) else str(kind).lower())
    offsets = [tuple(int(c) for c in np.atleast_1d(o)) for o in offsets]
    gains = [float(g) for g in gains]
    if len(offsets) != len(gains):
        raise ValueError("offsets and gains must have the same length")
    if not offsets:
        raise ValueError("kernel needs at least one entry")
    d = len(offsets[0])
    if any(len(o) != d for o in offsets):
        raise DimensionMismatch("all offsets must have the same dimension")
    if not 1 <= d <= MAX_DIM:
        raise DimensionMismatch(f"offset dimension must be in [1, {MAX_DIM}]")
    if len(set(offsets)) != len(offsets):
        raise ValueError("offsets must be distinct")
    if not all(np.isfinite(gains)):
        raise ValueError("gains must be finite")

    table = {k: g for k, g in zip(offsets, gains) if g != 0.0}
    scale = sum(abs(g) for g in gains)

    for k, g in table.items():
        mirror = tuple(-c for c in k)
        if not np.isclose(table.get(mirror, 0.0), g, rtol=SYMMETRY_RTOL, atol=SYMMETRY_RTOL * scale):
            raise AssumptionViolation(
                "ReflectionSymmetry", f"gain {g} at {k} differs from gain {table.get(mirror, 0.0)} at {mirror}"
            )

    # axis profile: distance along the axis -> gain, one dict per axis
    profiles = [dict() for _ in range(d)]
    for k, g in table.items():
        nonzero = [i for i, c in enumerate(k) if c != 0]
        if len(nonzero) > 1:
            raise AssumptionViolation("CoordinateDecoupling", f"offset {k} is not axis-aligned")
        if nonzero:
            i = nonzero[0]
            profiles[i][k[i]] = g
    for i in range(1, d):
        keys = set(profiles[0]) | set(profiles[i])
        for j in keys:
            if not np.isclose(profiles[0].get(j, 0.0), profiles[i].get(j, 0.0),
                              rtol=SYMMETRY_RTOL, atol=SYMMETRY_RTOL * scale):
                raise AssumptionViolation("Isotropy", f"axis 0 and axis {i} differ at distance {j}")

    total = sum(gains)
    if kind is Kind.RELATIVE:
        if abs(total) > ZERO_SUM_RTOL * scale:
            raise AssumptionViolation("RelativeMeasurements", f"relative kernel gains sum to {total}, not 0")
    elif not total < -ZERO_SUM_RTOL * scale:
        raise AssumptionViolation("AbsoluteFeedback", f"absolute kernel gains must sum to a negative value, got {total}")

    q = max((max(abs(c) for c in k) for k in table), default=0)
    return FeedbackArray(offsets=tuple(offsets), gains=tuple(gains), kind=kind, q=int(q))


def window_kernel(d: int, q: int = 1, gain: float = 1.0) -> FeedbackArray:
    """Relative kernel with ``gain`` on every axis offset ``1 <= |j| <= q``.

    The center entry is set to ``-2 * d * q * gain`` so the gains sum to zero.
    ``q = 1`` gives the nearest-neighbor graph Laplacian (times ``gain``).
    """
    if q < 1:
        raise ValueError("window q must be >= 1")
    offsets, gains = [(0,) * d], [-2.0 * d * q * gain]
    for axis in range(d):
        for j in range(1, q + 1):
            for s in (j, -j):
                k = [0] * d
                k[axis] = s
                offsets.append(tuple(k))
                gains.append(gain)
    return make_feedback_array(offsets, gains, Kind.RELATIVE)


def nearest_neighbor_kernel(d: int, gain: float = 1.0) -> FeedbackArray:
    return window_kernel(d, 1, gain)


def absolute_kernel(d: int, g0: float = 1.0, relative: FeedbackArray | None = None) -> FeedbackArray:
    """Absolute kernel ``-g0 * delta`` plus an optional relative part."""
    table = {(0,) * d: -float(g0)}
    if relative is not None:
        if relative.d != d:
            raise DimensionMismatch("relative part has the wrong dimension")
        for k, g in zip(relative.offsets, relative.gains):
            table[k] = table.get(k, 0.0) + g
    return make_feedback_array(list(table), list(table.values()), Kind.ABSOLUTE)


def circulant_matrix(array: FeedbackArray, shape: LatticeShape) -> np.ndarray:
    """Dense ``N x N`` matrix of the periodic convolution with ``array``.

    Entry ``(k, l)`` equals ``f_{(k - l) mod L}``.
    """
    array.check_fits(shape)
    sites = shape.sites()
    rows = np.arange(shape.N)
    M = np.zeros((shape.N, shape.N))
    for k, g in zip(array.offset_array, array.gains):
        if g == 0.0:
            continue
        cols = shape.flat_index(sites - k)
        M[rows, cols] += g
    return M


def convolve(array: FeedbackArray, field_values, shape: LatticeShape) -> np.ndarray:
    """Apply the kernel to a field given as a flat length-``N`` vector.

    Relative kernels are applied as ``sum_{k != 0} f_k (x_{. - k} - x)``, which
    equals the plain convolution because the center gain balances the rest,
    and maps constant fields to exactly zero.
    """
    x = np.asarray(field_values, dtype=float)
    if x.shape != (shape.N,):
        raise DimensionMismatch(f"field must have shape ({shape.N},), got {x.shape}")
    array.check_fits(shape)
    grid = x.reshape(shape.dims)
    out = np.zeros_like(grid)
    axes = tuple(range(shape.d))
    relative = array.kind is Kind.RELATIVE
    for k, g in zip(array.offset_array, array.gains):
        if g == 0.0 or (relative and not k.any()):
            continue
        shifted = np.roll(grid, tuple(k), axis=axes)
        # difference form keeps constant fields in the kernel exactly
        out += g * (shifted - grid) if relative else g * shifted
    return out.reshape(-1)


def kernel_to_dict(array: FeedbackArray) -> dict:
    return {
        "kind": array.kind.value,
        "entries": [{"offset": list(k), "gain": g} for k, g in zip(array.offsets, array.gains)],
    }


def kernel_from_dict(data: dict) -> FeedbackArray:
    try:
        entries = data["entries"]
        kind = data["kind"]
        offsets = [e["offset"] for e in entries]
        gains = [e["gain"] for e in entries]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed kernel definition: {exc}") from exc
    return make_feedback_array(offsets, gains, kind)


def load_kernel(path) -> FeedbackArray:
    return kernel_from_dict(json.loads(Path(path).read_text()))
