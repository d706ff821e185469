"""Brute-force H2 evaluation from assembled state-space matrices.

Nothing here uses the closed-form densities. Two independent routes are
provided:

* the full ``N``-site system is assembled from circulant matrices, the
  marginal network-average position mode is deflated, and a dense Lyapunov
  equation is solved;
* each nonzero frequency gets its own 2x2 or 3x3 block built from scalar
  symbols, and the small Lyapunov equation is solved numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .densities import Controller, Output, SystemSpec
from .errors import InvalidVariant, SingularLyapunov, UnstableBlock
from .lattice import LatticeShape, circulant_matrix
from .spectral import dft_grid, local_error_symbol, symbol

__all__ = [
    "StateSpace",
    "build_full_system",
    "global_error_matrix",
    "local_error_matrix",
    "solve_lyapunov",
    "lyapunov_residual",
    "deflate",
    "h2_per_site",
    "per_theta_block_h2",
    "per_theta_variance",
]

KRON_MAX = 16


@dataclass
class StateSpace:
    """``psi' = A psi + B w``, ``y = C psi``.

    ``labels`` maps block names (``"z"``, ``"x"``, ``"v"``) to slices of the
    state vector; ``n_sites`` is the number of network nodes used for the
    per-site normalization.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    labels: dict = field(default_factory=dict)
    n_sites: int = 0

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def average_position_mode(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[self.labels["x"]] = 1.0
        return e / np.linalg.norm(e)


def global_error_matrix(n: int) -> np.ndarray:
    """Centering projector ``I - 11^T / n``."""
    return np.eye(n) - np.full((n, n), 1.0 / n)


def local_error_matrix(shape: LatticeShape) -> np.ndarray:
    """Stacked ``x_k - x_{k - e_i}`` for every axis ``i`` (``d N`` rows)."""
    sites = shape.sites()
    rows = np.arange(shape.N)
    blocks = []
    for axis in range(shape.d):
        step = np.zeros(shape.d, dtype=int)
        step[axis] = 1
        D = np.eye(shape.N)
        D[rows, shape.flat_index(sites - step)] -= 1.0
        blocks.append(D)
    return np.vstack(blocks)


def _output_rows(output: Output, shape: LatticeShape) -> np.ndarray:
    if Output(output) is Output.GLOBAL:
        return global_error_matrix(shape.N)
    return local_error_matrix(shape)


def build_full_system(spec: SystemSpec, output=Output.GLOBAL) -> StateSpace:
    """Assemble ``(A, B, C)`` for the whole torus.

    State ordering is ``[z; x; v]`` (``z`` absent for static feedback and a
    single scalar for the centralized controller). Noise inputs, when
    present, follow the ``N`` disturbance channels.
    """
    shape = spec.shape
    N = shape.N
    F = circulant_matrix(spec.f, shape)
    G = circulant_matrix(spec.g, shape)
    I = np.eye(N)
    Z = np.zeros((N, N))
    Cx = _output_rows(output, shape)
    ctrl = spec.controller
    c0, eps = spec.c0, spec.epsilon

    if ctrl is Controller.STATIC:
        A = np.block([[Z, I], [F, G]])
        B = np.vstack([Z, I])
        C = np.hstack([Cx, np.zeros_like(Cx)])
        labels = {"x": slice(0, N), "v": slice(N, 2 * N)}
    elif ctrl.is_dapi:
        Am = circulant_matrix(spec.a, shape)
        A = np.block([[Am, Z, -c0 * I], [Z, Z, I], [I, F, G]])
        B = np.vstack([Z, Z, I])
        if ctrl is Controller.DAPI_NOISY:
            B = np.hstack([B, np.vstack([-c0 * eps * I, Z, Z])])
        C = np.hstack([np.zeros_like(Cx), Cx, np.zeros_like(Cx)])
        labels = {"z": slice(0, N), "x": slice(N, 2 * N), "v": slice(2 * N, 3 * N)}
    elif ctrl is Controller.CENTRALIZED:
        n = 2 * N + 1
        A = np.zeros((n, n))
        A[0, 1 + N:] = -c0 / N
        A[1:1 + N, 1 + N:] = I
        A[1 + N:, 1:1 + N] = F
        A[1 + N:, 1 + N:] = G
        A[1 + N:, 0] = 1.0
        B = np.zeros((n, N))
        B[1 + N:, :] = I
        if eps > 0:
            noise = np.zeros((n, N))
            noise[0, :] = -c0 * eps / N
            B = np.hstack([B, noise])
        C = np.hstack([np.zeros((Cx.shape[0], 1)), Cx, np.zeros_like(Cx)])
        labels = {"z": slice(0, 1), "x": slice(1, 1 + N), "v": slice(1 + N, n)}
    else:  # pragma: no cover
        raise InvalidVariant(f"unknown controller {ctrl!r}")
    return StateSpace(A=A, B=B, C=C, labels=labels, n_sites=N)


def lyapunov_residual(A, P, Q) -> float:
    return float(np.linalg.norm(A.T @ P + P @ A + Q))


def _kron_solve(A, Q):
    n = A.shape[0]
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    if np.linalg.cond(K) > 1e14:
        raise SingularLyapunov("linearized Lyapunov operator is numerically singular")
    p = np.linalg.solve(K, -np.asarray(Q, dtype=float).reshape(-1, order="F"))
    return p.reshape(n, n, order="F")


class _SchurLyapunov:
    """Bartels-Stewart solver for ``A^T P + P A = -Q`` with a cached Schur form."""

    def __init__(self, A):
        self.T, self.U = sla.schur(A, output="real")
        ev = np.diag(self.T)
        # sub-diagonal entries of 2x2 blocks do not change real parts
        if np.any(np.abs(ev[:, None] + ev[None, :]) < 1e-14 * max(1.0, np.abs(ev).max())):
            raise SingularLyapunov("A has eigenvalues summing to zero; unhandled marginal modes")
        self._trsyl = sla.get_lapack_funcs("trsyl", (self.T,))

    def __call__(self, Q):
        F = self.U.T @ Q @ self.U
        Y, scale, info = self._trsyl(self.T, self.T, -F, trana="T", tranb="N", isgn=1)
        if info < 0:  # pragma: no cover
            raise SingularLyapunov(f"trsyl failed with info={info}")
        return self.U @ (Y / scale) @ self.U.T


def solve_lyapunov(A, Q, method: str = "auto", refine: bool = True) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` for symmetric ``P``.

    Parameters
    ----------
    A : (n, n) array
    Q : (n, n) symmetric array
    method : {"auto", "kron", "schur"}
        ``"kron"`` solves the linearized ``n^2 x n^2`` system directly;
        ``"schur"`` is Bartels-Stewart on the real Schur form. ``"auto"``
        picks ``"kron"`` for ``n <= 16``.
    refine : bool
        Apply one step of iterative refinement on the residual.

    Raises
    ------
    SingularLyapunov
        If the Lyapunov operator is (numerically) singular.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square and of equal size")
    if method == "auto":
        method = "kron" if n <= KRON_MAX else "schur"
    if method == "kron":
        solve = lambda R: _kron_solve(A, R)  # noqa: E731
    elif method == "schur":
        solve = _SchurLyapunov(A)
    else:
        raise ValueError(f"unknown method {method!r}")
    try:
        P = solve(Q)
        if refine:
            R = A.T @ P + P @ A + Q
            P = P + solve(0.5 * (R + R.T))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunov(str(exc)) from exc
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise SingularLyapunov("Lyapunov solution is not finite")
    return P


def deflate(ss: StateSpace, basis=None) -> StateSpace:
    """Remove the network-average position mode.

    That mode satisfies ``A e = 0`` and ``C e = 0`` for relative position
    feedback, so it is invariant and unobservable; quotienting it out leaves
    the input-output map unchanged while making ``A`` Hurwitz.

    Parameters
    ----------
    basis : (n, n-1) array, optional
        Any basis of a complement of ``span{e}``. Defaults to an orthonormal
        basis of the orthogonal complement.
    """
    e = ss.average_position_mode()
    scale = max(1.0, np.abs(ss.A).max())
    if np.abs(ss.A @ e).max() > 1e-12 * scale or np.abs(ss.C @ e).max() > 1e-12 * max(1.0, np.abs(ss.C).max()):
        raise InvalidVariant("average position mode is not an unobservable invariant direction")
    if basis is None:
        U = sla.null_space(e[None, :])
        W = U.T
    else:
        U = np.asarray(basis, dtype=float)
        W = np.linalg.inv(np.column_stack([U, e]))[:-1]
    return StateSpace(A=W @ ss.A @ U, B=W @ ss.B, C=ss.C @ U, labels={}, n_sites=ss.n_sites)


def h2_per_site(ss: StateSpace, shape=None, deflate_mode: bool = True, basis=None,
                return_residual: bool = False):
    """Squared H2 norm divided by the number of sites, ``tr(B^T P B) / N``.

    ``P`` is the observability Gramian of the (deflated) system.
    """
    n_sites = shape.N if isinstance(shape, LatticeShape) else (shape or ss.n_sites)
    red = deflate(ss, basis) if deflate_mode else ss
    Q = red.C.T @ red.C
    P = solve_lyapunov(red.A, Q)
    value = float(np.trace(red.B.T @ P @ red.B)) / n_sites
    if return_residual:
        rel = lyapunov_residual(red.A, P, Q) / (np.linalg.norm(red.A) * np.linalg.norm(P) + np.linalg.norm(Q))
        return value, rel
    return value


def per_theta_block_h2(spec: SystemSpec, theta, output=Output.GLOBAL) -> float:
    """``tr(B* P B)`` of the single-frequency block, solved numerically."""
    d = spec.shape.d
    th = np.asarray(theta, dtype=float).reshape(d)
    fh = symbol(spec.f, th if d > 1 else float(th[0]))
    gh = symbol(spec.g, th if d > 1 else float(th[0]))
    lh = local_error_symbol(th if d > 1 else float(th[0]), d) if Output(output) is Output.LOCAL else 1.0
    if spec.controller.is_dapi:
        ah = symbol(spec.a, th if d > 1 else float(th[0]))
        A = np.array([[ah, 0.0, -spec.c0], [0.0, 0.0, 1.0], [1.0, fh, gh]])
        B = np.array([[0.0, -spec.c0 * spec.epsilon], [0.0, 0.0], [1.0, 0.0]])
        Q = np.diag([0.0, lh, 0.0])
    else:
        A = np.array([[0.0, 1.0], [fh, gh]])
        B = np.array([[0.0], [1.0]])
        Q = np.diag([lh, 0.0])
    if np.linalg.eigvals(A).real.max() >= 0:
        raise UnstableBlock("frequency block is not Hurwitz", theta=th.tolist())
    P = solve_lyapunov(A, Q, method="kron")
    return float(np.trace(B.T @ P @ B))


def per_theta_variance(spec: SystemSpec, output=Output.GLOBAL) -> float:
    """Grid average of :func:`per_theta_block_h2` over nonzero frequencies."""
    grid = dft_grid(spec.shape)
    values = [per_theta_block_h2(spec, t, output) for t in grid.points]
    return float(np.sum(np.sort(values))) / spec.N
