"""Network-size sweeps, exponent fits and size-dependent controller tuning."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .densities import Output, SystemSpec, VarianceReport, per_site_variance
from .errors import InsufficientData, LatticeH2Error, WindowTooLarge
from .lattice import LatticeShape, window_kernel
from .spectral import symbol

__all__ = [
    "Strategy",
    "TuneReference",
    "SweepRow",
    "ScalingFit",
    "comm_window",
    "tune",
    "tuned_spec",
    "sweep_variance",
    "fit_exponent",
    "log_ratio_spread",
    "Lemma5Row",
    "lemma5_check",
]

LOG_SLOPE_MAX = 0.15


class Strategy(str, enum.Enum):
    SHRINK_INTEGRAL_GAIN = "shrink_integral_gain"
    GROW_AVERAGING_GAIN = "grow_averaging_gain"
    GROW_COMM_WINDOW = "grow_comm_window"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "_").lower()
        aliases = {"shrinkintegralgain": cls.SHRINK_INTEGRAL_GAIN,
                   "growaveraginggain": cls.GROW_AVERAGING_GAIN,
                   "growcommwindow": cls.GROW_COMM_WINDOW}
        return aliases.get(key.replace("_", ""), None) or cls(key)


@dataclass(frozen=True)
class TuneReference:
    """Reference tuning at lattice size ``L_ref``.

    ``abar_ref`` is the infinity norm of the averaging kernel at ``L_ref``;
    ``cbar`` and ``a_min`` parameterize the communication window rule.
    """

    L_ref: int
    c0_ref: float = 1.0
    abar_ref: float = 1.0
    cbar: float = 1.0
    a_min: float = 1.0


def comm_window(L: int, cbar: float) -> int:
    """``ceil(cbar * L^(2/3))``, robust to round-off when the product is an integer."""
    if not cbar > 0:
        raise ValueError("cbar must be positive")
    raw = cbar * L ** (2.0 / 3.0)
    nearest = round(raw)
    return int(nearest) if abs(raw - nearest) < 1e-9 * max(1.0, raw) else int(math.ceil(raw))


def tune(strategy, L: int, reference: TuneReference) -> dict:
    """Size-dependent parameters for one of the three re-tuning rules.

    Returns
    -------
    dict
        ``{"c0": ...}``, ``{"abar": ...}`` or ``{"q_A": ..., "a_min": ...}``.
    """
    strategy = Strategy.parse(strategy)
    if not L >= reference.L_ref >= 2:
        raise ValueError(f"need L >= L_ref >= 2, got L={L}, L_ref={reference.L_ref}")
    if strategy is Strategy.SHRINK_INTEGRAL_GAIN:
        return {"c0": reference.c0_ref * (reference.L_ref / L) ** 2}
    if strategy is Strategy.GROW_AVERAGING_GAIN:
        return {"abar": reference.abar_ref * (L / reference.L_ref) ** 2}
    q = comm_window(L, reference.cbar)
    if 2 * q + 1 > L:
        raise WindowTooLarge(f"communication window q_A={q} does not fit L={L}")
    return {"q_A": q, "a_min": reference.a_min}


def tuned_spec(template: SystemSpec, strategy, L: int, reference: TuneReference) -> SystemSpec:
    """``template`` on the ``L``-torus with the tuning rule applied."""
    params = tune(strategy, L, reference)
    spec = template.with_shape(LatticeShape(template.shape.d, L))
    if "c0" in params:
        return spec.replace(c0=params["c0"])
    if "abar" in params:
        return spec.replace(a=spec.a.scaled(params["abar"] / spec.a.beta))
    return spec.replace(a=window_kernel(spec.shape.d, params["q_A"], params["a_min"]))


@dataclass
class SweepRow:
    L: int
    report: VarianceReport
    controller: str

    @property
    def N(self) -> int:
        return self.report.N

    def as_dict(self) -> dict:
        r = self.report
        return {"N": r.N, "d": r.d, "L": self.L, "controller": self.controller,
                "output": r.output.value, "V_N": r.V_N, "V_w": r.V_w, "V_eta": r.V_eta}


SWEEP_COLUMNS = ("N", "d", "L", "controller", "output", "V_N", "V_w", "V_eta")


def sweep_variance(template: SystemSpec, L_list, output=Output.GLOBAL, strategy=None,
                   reference: TuneReference | None = None) -> list:
    """Per-site variance of ``template`` over a ladder of side lengths.

    Kernels are held fixed across sizes unless a tuning ``strategy`` is given.
    Model errors are re-raised with the failing ``L`` attached as ``exc.L``.
    """
    rows = []
    for L in sorted(int(L) for L in L_list):
        try:
            if strategy is not None:
                spec = tuned_spec(template, strategy, L, reference)
            else:
                spec = template.with_shape(LatticeShape(template.shape.d, L))
            report = per_site_variance(spec, output)
        except LatticeH2Error as exc:
            exc.L = L
            exc.args = (f"L={L}: {exc}",)
            raise
        rows.append(SweepRow(L=L, report=report, controller=spec.controller.value))
    return rows


@dataclass
class ScalingFit:
    sizes: list
    values: list
    slope: float
    slope_stderr: float
    log_classified: bool
    intercept: float = 0.0
    fit_sizes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"sizes": list(map(int, self.sizes)), "values": list(map(float, self.values)),
                "slope": self.slope, "slope_stderr": self.slope_stderr,
                "log_classified": self.log_classified, "fit_sizes": list(map(int, self.fit_sizes))}


def _spread(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.ptp(values) / np.mean(values))


def log_ratio_spread(sizes, values) -> float:
    """Relative spread ``(max - min) / mean`` of ``V / log N``."""
    return _spread(np.asarray(values, dtype=float) / np.log(np.asarray(sizes, dtype=float)))


def _upper_half(sizes, values):
    k = max(2, math.ceil(len(sizes) / 2))
    return np.asarray(sizes[-k:], dtype=float), np.asarray(values[-k:], dtype=float)


def fit_exponent(sizes, values=None) -> ScalingFit:
    """Least-squares slope of ``log V`` against ``log N`` on the upper half of the ladder.

    ``sizes`` may also be a list of :class:`SweepRow` (then ``values`` are the
    rows' ``V_N``), or ``values`` may be a callable mapping a row to a value.

    The fit is flagged ``log_classified`` when its slope lies in
    ``(0, 0.15)`` and ``V / log N`` is flatter than ``V / N^slope``.
    """
    if len(sizes) and isinstance(sizes[0], SweepRow):
        rows = sizes
        sizes = [r.N for r in rows]
        pick = values if callable(values) else (lambda r: r.report.V_N)
        values = [pick(r) for r in rows]
    sizes = [float(s) for s in sizes]
    values = [float(v) for v in values]
    if len(sizes) != len(values):
        raise InsufficientData("sizes and values differ in length")
    if len(sizes) < 4:
        raise InsufficientData(f"need at least 4 sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InsufficientData("sizes must be strictly increasing")
    if any(not v > 0 for v in values):
        raise InsufficientData("values must be positive for a log-log fit")

    n_fit, v_fit = _upper_half(sizes, values)
    x, y = np.log(n_fit), np.log(v_fit)
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = len(x) - 2
    if dof > 0:
        resid = y - X @ coef
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        stderr = 0.0
    log_like = 0.0 < slope < LOG_SLOPE_MAX and (
        log_ratio_spread(n_fit, v_fit) < _spread(v_fit / n_fit**slope))
    return ScalingFit(sizes=sizes, values=values, slope=slope, slope_stderr=stderr,
                      log_classified=bool(log_like), intercept=intercept, fit_sizes=n_fit.tolist())


@dataclass
class Lemma5Row:
    L: int
    q_A: int
    symbol_at_thetamin: float
    lower_bound: float
    delta: float
    ok: bool
    fixed_window_symbol: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


LEMMA5_COLUMNS = ("L", "q_A", "symbol_at_thetamin", "lower_bound", "delta", "ok", "fixed_window_symbol")


def lemma5_check(a_min: float, cbar: float, L_list, fixed_q: int = 1) -> list:
    """Check the growing-window lower bound on ``|a(2 pi / L)|``.

    For each ``L`` the uniform kernel ``a_k = a_min`` on ``|k| <= q_A``,
    ``q_A = ceil(cbar L^(2/3))``, is evaluated exactly at the smallest nonzero
    frequency and compared with the bound
    ``16 a_min q (q + 1) (2 q + 1) / (6 L^2)`` and with
    ``delta = 32 cbar^3 a_min / 6``. The last column holds ``|a(2 pi / L)|``
    for a window fixed at ``fixed_q`` for comparison.
    """
    if not a_min > 0:
        raise ValueError("a_min must be positive")
    if not cbar > 0:
        raise ValueError("cbar must be positive")
    delta = 32.0 * cbar**3 * a_min / 6.0
    fixed = window_kernel(1, fixed_q, a_min)
    rows = []
    for L in L_list:
        L = int(L)
        q = comm_window(L, cbar)
        # the quadratic cosine bound needs 2 pi q / L <= pi
        if 2 * q > L:
            raise WindowTooLarge(f"q_A={q} exceeds L/2 for L={L}")
        theta = 2.0 * np.pi / L
        exact = abs(symbol(window_kernel(1, q, a_min), theta))
        bound = 16.0 * a_min / L**2 * q * (q + 1) * (2 * q + 1) / 6.0
        rows.append(Lemma5Row(L=L, q_A=q, symbol_at_thetamin=exact, lower_bound=bound, delta=delta,
                              ok=bool(exact >= bound >= delta), fixed_window_symbol=abs(symbol(fixed, theta))))
    return rows
