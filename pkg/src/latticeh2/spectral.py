"""Fourier symbols of feedback kernels and the DFT frequency grid.

Symbols are evaluated as real cosine sums. Since kernels are reflection
symmetric, ``sum_k f_k exp(-i theta.k)`` is real; the relative part is
written as ``-sum_k f_k (1 - cos(theta.k))`` with ``1 - cos x = 2 sin^2(x/2)``
so that small frequencies keep full relative precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateArray
from .lattice import FeedbackArray, Kind, LatticeShape

__all__ = [
    "ThetaGrid",
    "dft_grid",
    "symbol",
    "local_error_symbol",
    "asymptote_bounds",
]


def _as_points(theta, d=None) -> np.ndarray:
    pts = np.asarray(theta, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # a single d-vector unless d == 1 and many scalars were passed
        pts = pts.reshape(-1, 1) if d == 1 else pts.reshape(1, -1)
    return pts


def _one_minus_cos(x):
    return 2.0 * np.sin(0.5 * x) ** 2


def symbol(array: FeedbackArray, theta):
    """Z-transform symbol of ``array`` at one or many frequencies.

    Parameters
    ----------
    array : FeedbackArray
    theta : float, array of shape (d,), or array of shape (M, d)
        Spatial frequencies. For ``d = 1`` a flat array is read as ``M``
        scalar frequencies.

    Returns
    -------
    float or ndarray of shape (M,)
    """
    scalar = np.ndim(theta) == 0 or (np.ndim(theta) == 1 and array.d > 1)
    pts = _as_points(theta, array.d)
    if pts.shape[1] != array.d:
        raise ValueError(f"theta has dimension {pts.shape[1]}, kernel has {array.d}")
    phase = pts @ array.offset_array.T
    values = -_one_minus_cos(phase) @ array.gain_array
    if array.kind is Kind.ABSOLUTE:
        values = values - array.absolute_gain
    return float(values[0]) if scalar else values


def local_error_symbol(theta, d=None):
    """``sum_i 2 (1 - cos theta_i)``: squared magnitude of the nearest-neighbor difference."""
    if d is None:
        d = 1 if np.ndim(theta) == 0 else np.shape(theta)[-1]
    scalar = np.ndim(theta) == 0 or (np.ndim(theta) == 1 and d > 1)
    pts = _as_points(theta, d)
    values = 2.0 * _one_minus_cos(pts).sum(axis=1)
    return float(values[0]) if scalar else values


@dataclass(frozen=True)
class ThetaGrid:
    """Nonzero DFT frequencies ``2 pi n / L``, wrapped into ``(-pi, pi]``.

    Attributes
    ----------
    shape : LatticeShape
    wavenumbers : ndarray of shape (N - 1, d)
        Integer wavenumbers in ``(-L/2, L/2]``.
    points : ndarray of shape (N - 1, d)
    """

    shape: LatticeShape
    wavenumbers: np.ndarray
    points: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def theta_min(self) -> float:
        return 2.0 * np.pi / self.shape.L


def dft_grid(shape: LatticeShape) -> ThetaGrid:
    n = shape.sites()[1:]  # row 0 is the zero wavenumber
    n = np.where(n > shape.L // 2, n - shape.L, n)
    return ThetaGrid(shape=shape, wavenumbers=n, points=(2.0 * np.pi / shape.L) * n)


def asymptote_bounds(array: FeedbackArray, samples: int = 4001, seed: int = 0):
    """Empirical constants ``(c_lo, c_hi)`` with ``c_lo beta |theta|^2 <= -symbol <= c_hi beta |theta|^2``.

    The ratio is sampled on a uniform grid of ``(0, pi]`` along the first axis
    and, for ``d > 1``, additionally at ``samples`` random points of
    ``[-pi, pi]^d``.
    """
    if array.kind is not Kind.RELATIVE:
        raise ValueError("quadratic asymptote only applies to relative kernels; "
                         "absolute kernels tend to -f0 at zero frequency")
    if array.beta == 0.0:
        raise DegenerateArray("kernel is identically zero")
    d = array.d
    axis = np.zeros((samples, d))
    axis[:, 0] = np.linspace(np.pi / samples, np.pi, samples)
    pts = [axis]
    if d > 1:
        rng = np.random.default_rng(seed)
        pts.append(rng.uniform(-np.pi, np.pi, size=(samples, d)))
        diag = np.linspace(np.pi / samples, np.pi, samples)[:, None] * np.ones(d)
        pts.append(diag)
    pts = np.vstack(pts)
    norm2 = np.sum(pts**2, axis=1)
    keep = norm2 > 0
    ratio = -symbol(array, pts[keep]) / (array.beta * norm2[keep])
    return float(ratio.min()), float(ratio.max())
