"""Closed-form per-site H2 densities and their sum over the DFT grid.

Three controller families are covered:

* static feedback (``u = 0``), with per-frequency block ``[[0, 1], [f, g]]``;
* distributed-averaging integral control (noiseless or with velocity
  measurement noise of intensity ``epsilon``), with block
  ``[[a, 0, -c0], [0, 0, 1], [1, f, g]]`` acting on ``(z, x, v)``;
* centralized averaging integral control, whose single shared integral
  state only moves the unobservable network average and therefore has the
  static-feedback variance at every nonzero frequency.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidVariant, SingularPhi, UnstableBlock, ZeroAveraging
from .lattice import FeedbackArray, Kind, LatticeShape
from .spectral import dft_grid, local_error_symbol, symbol

__all__ = [
    "Controller",
    "Output",
    "SystemSpec",
    "VarianceReport",
    "phi",
    "density_static",
    "density_dapi",
    "per_site_variance",
    "is_stable",
]

PHI_SINGULAR_TOL = 1e-14


class Controller(str, enum.Enum):
    STATIC = "static"
    DAPI_NOISELESS = "dapi_noiseless"
    DAPI_NOISY = "dapi_noisy"
    CENTRALIZED = "centralized"

    @property
    def is_dapi(self) -> bool:
        return self in (Controller.DAPI_NOISELESS, Controller.DAPI_NOISY)


class Output(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass(frozen=True)
class SystemSpec:
    """Lattice, kernels, controller family and scalar gains.

    Attributes
    ----------
    shape : LatticeShape
    f : FeedbackArray
        Relative position kernel.
    g : FeedbackArray
        Absolute velocity kernel (must contain ``g0 > 0``).
    controller : Controller
    a : FeedbackArray or None
        Relative averaging kernel of the integral states; required by the
        distributed integral controllers.
    c0 : float
        Integral gain.
    epsilon : float
        Measurement noise intensity relative to the process disturbance.
    """

    shape: LatticeShape
    f: FeedbackArray
    g: FeedbackArray
    controller: Controller = Controller.STATIC
    a: FeedbackArray | None = None
    c0: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "controller", Controller(self.controller))
        if self.f.kind is not Kind.RELATIVE:
            raise InvalidVariant("position kernel f must be relative")
        if self.g.kind is not Kind.ABSOLUTE:
            raise InvalidVariant("velocity kernel g must contain absolute feedback g0 > 0")
        for name in ("f", "g", "a"):
            k = getattr(self, name)
            if k is not None and k.d != self.shape.d:
                raise InvalidVariant(f"kernel {name} is {k.d}-dimensional, lattice is {self.shape.d}-dimensional")
        if self.controller.is_dapi:
            if self.a is None:
                raise InvalidVariant("distributed integral control needs an averaging kernel a")
            if self.a.kind is not Kind.RELATIVE:
                raise InvalidVariant("averaging kernel a must be relative")
        if self.epsilon < 0:
            raise InvalidVariant("epsilon must be nonnegative")
        if self.controller is Controller.DAPI_NOISELESS and self.epsilon != 0.0:
            raise InvalidVariant("noiseless integral control requires epsilon = 0")

    @property
    def N(self) -> int:
        return self.shape.N

    def with_shape(self, shape: LatticeShape) -> "SystemSpec":
        return replace(self, shape=shape)

    def replace(self, **changes) -> "SystemSpec":
        return replace(self, **changes)


@dataclass
class VarianceReport:
    V_N: float
    V_w: float
    V_eta: float
    output: Output
    N: int
    d: int
    per_theta: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"V_N": self.V_N, "V_w": self.V_w, "V_eta": self.V_eta,
                "output": Output(self.output).value, "N": self.N, "d": self.d}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def csv_rows(self):
        """Header and rows ``theta_1..theta_d, p_w, p_eta`` (needs ``per_theta``)."""
        if self.per_theta is None:
            raise ValueError("report was computed without the per-frequency table")
        header = [f"theta_{i + 1}" for i in range(self.d)] + ["p_w", "p_eta"]
        return header, self.per_theta.tolist()


def _symbols(spec: SystemSpec, theta):
    fh = np.atleast_1d(symbol(spec.f, theta))
    gh = np.atleast_1d(symbol(spec.g, theta))
    ah = np.atleast_1d(symbol(spec.a, theta)) if spec.a is not None else None
    return fh, gh, ah


def _local(theta, d, output):
    if Output(output) is Output.LOCAL:
        return np.atleast_1d(local_error_symbol(theta, d))
    return 1.0


def _unscalar(theta, d, values):
    scalar = np.ndim(theta) == 0 or (np.ndim(theta) == 1 and d > 1)
    return float(values[0]) if scalar else values


def _theta_at(theta, d, idx):
    pts = np.asarray(theta, dtype=float)
    if pts.ndim == 0 or (pts.ndim == 1 and d > 1):
        return pts.tolist() if pts.ndim else float(pts)
    pts = pts.reshape(-1, d)
    return pts[idx].tolist()


def phi(theta, spec: SystemSpec):
    """Coupling function ``c0 (a + g) / (a^2 + g a - f)`` of the integral controller."""
    if not spec.controller.is_dapi:
        raise InvalidVariant("phi is only defined for distributed integral control")
    fh, gh, ah = _symbols(spec, theta)
    den = ah * ah + gh * ah - fh
    bad = np.abs(den) < PHI_SINGULAR_TOL
    if bad.any():
        raise SingularPhi(f"phi denominator vanishes at theta={_theta_at(theta, spec.shape.d, np.argmax(bad))}")
    return _unscalar(theta, spec.shape.d, spec.c0 * (ah + gh) / den)


def density_static(theta, f: FeedbackArray, g: FeedbackArray, output=Output.GLOBAL):
    """Static-feedback density ``l / (2 f g)`` (``l = 1`` for the global error)."""
    fh = np.atleast_1d(symbol(f, theta))
    gh = np.atleast_1d(symbol(g, theta))
    bad = (fh >= 0) | (gh >= 0)
    if bad.any():
        raise UnstableBlock("static block requires f(theta) < 0 and g(theta) < 0",
                            theta=_theta_at(theta, f.d, np.argmax(bad)))
    return _unscalar(theta, f.d, _local(theta, f.d, output) / (2.0 * fh * gh))


def _dapi_hurwitz(fh, gh, ah, c0):
    # characteristic polynomial s^3 + c2 s^2 + c1 s + c0 of the (z, x, v) block
    c2 = -(ah + gh)
    c1 = ah * gh - fh + c0
    cc = ah * fh
    return (c2 > 0) & (cc > 0) & (c2 * c1 > cc)


def density_dapi(theta, spec: SystemSpec, output=Output.GLOBAL):
    """Disturbance and noise densities ``(p_w, p_eta)`` of distributed integral control.

    Returns
    -------
    p_w, p_eta : float or ndarray
        ``p_w = l / (2 f) / (phi + g)`` and
        ``p_eta = eps^2 c0 l / (2 a f) / (1 + g / phi)``, with ``l`` the
        local-error symbol (or 1 for the global error).

    Raises
    ------
    ZeroAveraging
        ``a(theta) = 0`` at a frequency while ``epsilon > 0``.
    UnstableBlock
        The 3x3 block is not Hurwitz at some frequency.
    """
    if not spec.controller.is_dapi:
        raise InvalidVariant("density_dapi needs a distributed integral controller")
    d = spec.shape.d
    fh, gh, ah = _symbols(spec, theta)
    eps = spec.epsilon
    if eps > 0 and np.any(ah == 0):
        raise ZeroAveraging("noise density is infinite where a(theta) = 0",
                            theta=_theta_at(theta, d, np.argmax(ah == 0)))
    ok = _dapi_hurwitz(fh, gh, ah, spec.c0)
    if not ok.all():
        raise UnstableBlock("integral-control block is not Hurwitz", theta=_theta_at(theta, d, np.argmin(ok)))
    ph = np.atleast_1d(phi(theta, spec))
    lh = _local(theta, d, output)
    p_w = lh / (2.0 * fh * (ph + gh))
    if eps == 0.0:
        p_eta = np.zeros_like(p_w)
    else:
        # 1 / (1 + g / phi) written as phi / (phi + g) to stay finite at phi = 0
        p_eta = eps**2 * spec.c0 * lh * ph / (2.0 * ah * fh * (ph + gh))
    return _unscalar(theta, d, p_w), _unscalar(theta, d, p_eta)


def per_site_variance(spec: SystemSpec, output=Output.GLOBAL, per_theta: bool = False) -> VarianceReport:
    """Per-site variance as the grid average of the H2 density over nonzero frequencies."""
    output = Output(output)
    grid = dft_grid(spec.shape)
    N = spec.N
    if spec.controller.is_dapi:
        p_w, p_eta = density_dapi(grid.points, spec, output)
    else:
        if spec.controller is Controller.CENTRALIZED:
            _check_mean_block(spec)
        p_w = density_static(grid.points, spec.f, spec.g, output)
        p_eta = np.zeros_like(p_w)
    V_w = math.fsum(p_w) / N
    V_eta = math.fsum(p_eta) / N
    table = np.column_stack([grid.points, p_w, p_eta]) if per_theta else None
    return VarianceReport(V_N=V_w + V_eta, V_w=V_w, V_eta=V_eta, output=output,
                          N=N, d=spec.shape.d, per_theta=table)


def _mean_block(spec: SystemSpec) -> np.ndarray:
    # (v_mean, z) dynamics of the centralized controller
    g0 = spec.g.absolute_gain
    return np.array([[-g0, 1.0], [-spec.c0, 0.0]])


def _check_mean_block(spec: SystemSpec) -> None:
    if not (spec.g.absolute_gain > 0 and spec.c0 > 0):
        raise UnstableBlock("centralized integral state is unstable (needs c0 > 0)", theta=[0.0] * spec.shape.d)


def _block(spec: SystemSpec, fh, gh, ah):
    if spec.controller.is_dapi:
        return np.array([[ah, 0.0, -spec.c0], [0.0, 0.0, 1.0], [1.0, fh, gh]])
    return np.array([[0.0, 1.0], [fh, gh]])


def is_stable(spec: SystemSpec):
    """Check every nonzero-frequency block for the Hurwitz property.

    The decision uses the Routh-Hurwitz coefficient conditions, which stay
    exact for the nearly marginal modes next to ``theta = 0``. The reported
    ``worst_real_part`` is the largest eigenvalue real part over the grid.

    Returns
    -------
    ok : bool
    worst_real_part : float
    worst_theta : list of float
    """
    grid = dft_grid(spec.shape)
    fh, gh, ah = _symbols(spec, grid.points)
    if spec.controller.is_dapi:
        ok = _dapi_hurwitz(fh, gh, ah, spec.c0)
    else:
        ok = (fh < 0) & (gh < 0)
    blocks = np.stack([_block(spec, fh[i], gh[i], None if ah is None else ah[i]) for i in range(len(fh))])
    re = np.linalg.eigvals(blocks).real.max(axis=1)
    worst = int(np.argmax(re))
    worst_re, worst_theta = float(re[worst]), grid.points[worst].tolist()
    all_ok = bool(ok.all())
    if not all_ok:
        bad = int(np.argmin(ok))
        worst_re, worst_theta = float(re[bad]), grid.points[bad].tolist()
    if spec.controller is Controller.CENTRALIZED:
        mean_re = float(np.linalg.eigvals(_mean_block(spec)).real.max())
        if not (spec.g.absolute_gain > 0 and spec.c0 > 0):
            all_ok = False
            worst_re, worst_theta = mean_re, [0.0] * spec.shape.d
    return all_ok, worst_re, worst_theta
