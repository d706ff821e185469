"""Time-domain simulation on tori, open chains (platoons) and general graphs.

White-noise runs use fixed-step Euler-Maruyama,

    psi[t + dt] = psi[t] + dt * A psi[t] + sqrt(dt) * B xi[t],

with one independent random substream per input channel: the run seed feeds
``numpy.random.SeedSequence(seed).spawn(n_channels)`` and each channel draws
its own PCG64 standard normals in blocks. The block size therefore does not
affect the result, and the same seed reproduces a run bit for bit.

Initial-condition runs draw ``psi_0 = B xi`` (covariance ``B B^T``) and then
propagate ``psi' = A psi`` exactly with ``expm(A dt)``.
"""

from __future__ import annotations

import enum
import math
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .densities import Controller, Output, SystemSpec
from .errors import (InsufficientSamples, NegativeWeight, NotConnectedWarning, ParseError,
                     UnstableStep)
from .oracle import StateSpace, build_full_system, deflate, global_error_matrix

__all__ = [
    "InputMode",
    "GraphSystem",
    "Platoon",
    "Trajectory",
    "state_space_of",
    "platoon_system",
    "parse_graph",
    "load_graph",
    "simulate_sde",
    "empirical_variance",
    "output_energy",
    "POWER_INERTIA",
    "POWER_DAMPING",
]

POWER_INERTIA = 20.0 / (2.0 * math.pi * 60.0)
POWER_DAMPING = 10.0 / (2.0 * math.pi * 60.0)
NOISE_BLOCK = 4096


class InputMode(str, enum.Enum):
    WHITE_NOISE = "white_noise"
    INITIAL_CONDITION = "initial_condition"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_").lower())


def _laplacian(n, edges):
    Lm = np.zeros((n, n))
    for i, j, w in edges:
        Lm[i, j] -= w
        Lm[j, i] -= w
        Lm[i, i] += w
        Lm[j, j] += w
    return Lm


def _assemble(Kx, Kv, Kz, controller, c0, epsilon, u_gain, Cx):
    """Second-order network with optional integral controller.

    ``v' = Kx x + Kv v + u_gain (u + w)``; the distributed controller is
    ``z' = Kz z - c0 (v + eps eta)``, the centralized one
    ``z' = -(c0 / N) sum_k (v_k + eps eta_k)``.
    """
    N = Kx.shape[0]
    I, Z = np.eye(N), np.zeros((N, N))
    Cz = np.zeros_like(Cx)
    controller = Controller(controller)
    if controller is Controller.STATIC:
        A = np.block([[Z, I], [Kx, Kv]])
        B = np.vstack([Z, u_gain * I])
        C = np.hstack([Cx, Cz])
        labels = {"x": slice(0, N), "v": slice(N, 2 * N)}
    elif controller.is_dapi:
        A = np.block([[Kz, Z, -c0 * I], [Z, Z, I], [u_gain * I, Kx, Kv]])
        B = np.vstack([Z, Z, u_gain * I])
        if controller is Controller.DAPI_NOISY and epsilon > 0:
            B = np.hstack([B, np.vstack([-c0 * epsilon * I, Z, Z])])
        C = np.hstack([Cz, Cx, Cz])
        labels = {"z": slice(0, N), "x": slice(N, 2 * N), "v": slice(2 * N, 3 * N)}
    else:
        n = 2 * N + 1
        A = np.zeros((n, n))
        A[0, 1 + N:] = -c0 / N
        A[1:1 + N, 1 + N:] = I
        A[1 + N:, 1:1 + N] = Kx
        A[1 + N:, 1 + N:] = Kv
        A[1 + N:, 0] = u_gain
        B = np.zeros((n, N))
        B[1 + N:] = u_gain * I
        if epsilon > 0:
            noise = np.zeros((n, N))
            noise[0] = -c0 * epsilon / N
            B = np.hstack([B, noise])
        C = np.hstack([np.zeros((Cx.shape[0], 1)), Cx, Cz])
        labels = {"z": slice(0, 1), "x": slice(1, 1 + N), "v": slice(1 + N, n)}
    return StateSpace(A=A, B=B, C=C, labels=labels, n_sites=N)


def _edge_difference_matrix(n, edges):
    D = np.zeros((len(edges), n))
    for r, (i, j, _) in enumerate(edges):
        D[r, i], D[r, j] = 1.0, -1.0
    return D


@dataclass
class GraphSystem:
    """Swing-equation network ``m x'' + dmp x' = -sum b_kj (x_k - x_j) + u_k + w_k``.

    Edge lists hold ``(i, j, weight)`` triples with ``i < j``. The integral
    controller averages over ``comm_edges``; the local error is measured
    across every physical edge.
    """

    n_nodes: int
    phys_edges: list
    comm_edges: list = None
    m: float = POWER_INERTIA
    dmp: float = POWER_DAMPING
    c0: float = 1.0
    epsilon: float = 0.0
    controller: Controller = Controller.STATIC

    def __post_init__(self):
        self.controller = Controller(self.controller)
        if self.comm_edges is None:
            self.comm_edges = list(self.phys_edges)
        if not (self.m > 0 and self.dmp > 0):
            raise ValueError("inertia and damping must be positive")

    def is_connected(self) -> bool:
        adj = np.abs(_laplacian(self.n_nodes, self.phys_edges)) > 0
        return connected_components(adj, directed=False)[0] == 1

    def with_controller(self, controller, **changes) -> "GraphSystem":
        params = dict(self.__dict__, controller=Controller(controller))
        params.update(changes)
        return GraphSystem(**params)

    def state_space(self, output=Output.GLOBAL) -> StateSpace:
        n = self.n_nodes
        Lb = _laplacian(n, self.phys_edges)
        Kx = -Lb / self.m
        Kv = -(self.dmp / self.m) * np.eye(n)
        Kz = -_laplacian(n, self.comm_edges)
        if Output(output) is Output.GLOBAL:
            Cx = global_error_matrix(n)
        else:
            Cx = _edge_difference_matrix(n, self.phys_edges)
        return _assemble(Kx, Kv, Kz, self.controller, self.c0, self.epsilon, 1.0 / self.m, Cx)


@dataclass
class Platoon:
    """Open chain of ``N`` vehicles with heterogeneous nearest-neighbor gains.

    ``f_plus[k]`` multiplies ``x_{k+1} - x_k`` and ``f_minus[k]`` multiplies
    ``x_{k-1} - x_k`` (zero at the chain ends); likewise for the velocity
    gains. The integral states are averaged with weight ``a_min`` between
    every pair of vehicles at most ``q_A`` apart.
    """

    f_plus: np.ndarray
    f_minus: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    g_o: float = 1.0
    controller: Controller = Controller.STATIC
    c0: float = 1.0
    epsilon: float = 0.0
    q_A: int = 1
    a_min: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.controller = Controller(self.controller)

    @property
    def n_nodes(self) -> int:
        return len(self.f_plus)

    def with_controller(self, controller, **changes) -> "Platoon":
        params = dict(self.__dict__, controller=Controller(controller))
        params.update(changes)
        return Platoon(**params)

    def gains(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("f_plus", "f_minus", "g_plus", "g_minus")}

    @staticmethod
    def _coupling(plus, minus):
        K = np.diag(plus[:-1], 1) + np.diag(minus[1:], -1)
        return K - np.diag(K.sum(axis=1))

    def comm_edges(self) -> list:
        n = self.n_nodes
        return [(i, j, self.a_min) for i in range(n) for j in range(i + 1, min(n, i + self.q_A + 1))]

    def state_space(self, output=Output.GLOBAL) -> StateSpace:
        n = self.n_nodes
        Kx = self._coupling(self.f_plus, self.f_minus)
        Kv = self._coupling(self.g_plus, self.g_minus) - self.g_o * np.eye(n)
        Kz = -_laplacian(n, self.comm_edges())
        if Output(output) is Output.GLOBAL:
            Cx = global_error_matrix(n)
        else:
            Cx = _edge_difference_matrix(n, [(k, k - 1, 1.0) for k in range(1, n)])
        return _assemble(Kx, Kv, Kz, self.controller, self.c0, self.epsilon, 1.0, Cx)


def platoon_system(N: int, gain_low: float = 0.5, gain_high: float = 1.5, g_o: float = 1.0,
                   seed: int = 0, **controller_params) -> Platoon:
    """Random heterogeneous platoon; gains ``~ U[gain_low, gain_high]`` per link and direction."""
    if N < 2:
        raise ValueError("a platoon needs at least 2 vehicles")
    if not 0 < gain_low <= gain_high:
        raise ValueError("need 0 < gain_low <= gain_high")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(gain_low, gain_high, size=(4, N - 1))
    f_plus, g_plus = np.append(draws[0], 0.0), np.append(draws[2], 0.0)
    f_minus, g_minus = np.insert(draws[1], 0, 0.0), np.insert(draws[3], 0, 0.0)
    return Platoon(f_plus=f_plus, f_minus=f_minus, g_plus=g_plus, g_minus=g_minus,
                   g_o=g_o, seed=seed, **controller_params)


def parse_graph(text: str, **params) -> GraphSystem:
    """Parse an edge list ``i j [weight]`` with an optional ``#comm`` section.

    Lines starting with ``#`` (other than the ``#comm`` marker) are comments.
    Nodes are zero-based; the node count is inferred from the largest index.
    """
    sections = {"phys": {}, "comm": {}}
    current = "phys"
    saw_comm = False
    max_node = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().lower() == "comm":
                current, saw_comm = "comm", True
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'i j weight', got {line!r}", line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if i < 0 or j < 0:
            raise ParseError("node indices must be nonnegative", line=lineno)
        if i == j:
            raise ParseError(f"self-loop at node {i}", line=lineno)
        if w < 0 or not math.isfinite(w):
            raise NegativeWeight(f"invalid weight {w}", line=lineno)
        key = (min(i, j), max(i, j))
        table = sections[current]
        if key in table and table[key] != w:
            raise ParseError(f"edge {key} listed twice with weights {table[key]} and {w}", line=lineno)
        table[key] = w
        max_node = max(max_node, i, j)
    if max_node < 0:
        raise ParseError("no edges found")
    phys = [(i, j, w) for (i, j), w in sorted(sections["phys"].items())]
    comm = [(i, j, w) for (i, j), w in sorted(sections["comm"].items())] if saw_comm else list(phys)
    system = GraphSystem(n_nodes=max_node + 1, phys_edges=phys, comm_edges=comm, **params)
    if not system.is_connected():
        warnings.warn("physical graph is not connected", NotConnectedWarning, stacklevel=2)
    return system


def load_graph(source, **params) -> GraphSystem:
    """Read an edge list from a path, or parse ``source`` directly if it is not a file."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and os.path.isfile(source)):
        return parse_graph(Path(source).read_text(), **params)
    return parse_graph(str(source), **params)


def state_space_of(system, output=Output.GLOBAL) -> StateSpace:
    if isinstance(system, SystemSpec):
        return build_full_system(system, output)
    return system.state_space(output)


@dataclass
class Trajectory:
    """Sampled states of one simulation run.

    ``states[i]`` is the full state vector at ``times[i]``; ``dt`` is the
    sample spacing and ``step`` the integration step (``dt`` is a multiple of
    ``step``).
    """

    times: np.ndarray
    states: np.ndarray
    labels: dict
    n_sites: int
    seed: int
    dt: float
    step: float
    mode: InputMode
    outputs: dict = field(default_factory=dict, repr=False)
    time_constant: float = float("nan")

    def block(self, name) -> np.ndarray | None:
        sl = self.labels.get(name)
        return None if sl is None else self.states[:, sl]

    @property
    def x(self):
        return self.block("x")

    @property
    def v(self):
        return self.block("v")

    @property
    def z(self):
        return self.block("z")

    def node_table(self) -> np.ndarray:
        """``(samples, nodes, 3)`` array of ``(z, x, v)``; ``z`` is NaN without a controller."""
        S, N = len(self.times), self.n_sites
        out = np.full((S, N, 3), np.nan)
        z = self.z
        if z is not None:
            out[:, :, 0] = z if z.shape[1] == N else np.repeat(z, N, axis=1)
        out[:, :, 1] = self.x
        out[:, :, 2] = self.v
        return out

    def write_csv(self, path, comments=()) -> None:
        """Long-format CSV ``time,node,z,x,v``, preceded by ``# `` lines for each comment."""
        table = self.node_table().tolist()
        with open(path, "w") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            fh.write("time,node,z,x,v\n")
            for t, rows in zip(self.times.tolist(), table):
                for node, (z, x, v) in enumerate(rows):
                    fh.write(f"{t!r},{node},{z!r},{x!r},{v!r}\n")

    def write_binary(self, path) -> None:
        """Little-endian: u64 nodes, u64 samples, f64 dt, then ``(samples, nodes, 3)`` f64 row-major."""
        table = self.node_table()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQd", self.n_sites, len(self.times), self.dt))
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())

    @staticmethod
    def read_binary(path):
        """Return ``(dt, table)`` from a file written by :meth:`write_binary`."""
        data = Path(path).read_bytes()
        nodes, samples, dt = struct.unpack_from("<QQd", data)
        table = np.frombuffer(data, dtype="<f8", offset=24).reshape(samples, nodes, 3)
        return dt, table


def _slowest_time_constant(ss: StateSpace) -> float:
    try:
        red = deflate(ss)
    except Exception:
        red = ss
    re = np.linalg.eigvals(red.A).real
    stable = re[re < 0]
    return float(1.0 / np.abs(stable).min()) if stable.size else float("inf")


IC_CHANNELS = ("all", "disturbance", "noise")


def simulate_sde(system, dt: float, T: float, seed: int = 0, input_mode=InputMode.WHITE_NOISE,
                 record_every: int = 1, psi0=None, ic_channels: str = "all") -> Trajectory:
    """Simulate a torus spec, platoon or graph system.

    Parameters
    ----------
    system : SystemSpec, Platoon or GraphSystem
    dt : float
        Integration step.
    T : float
        Final time.
    seed : int
    input_mode : InputMode
    record_every : int
        Keep every ``record_every``-th state.
    psi0 : array, optional
        Initial state (default zero for white-noise runs, random for
        initial-condition runs).
    ic_channels : {"all", "disturbance", "noise"}
        Input channels whose columns of ``B`` shape the random initial state
        of an initial-condition run. ``"noise"`` keeps only the measurement
        noise channels (an initial error in the integral states).

    Raises
    ------
    UnstableStep
        ``dt * max|eig(A)| >= 1`` for a white-noise run.
    """
    mode = InputMode.parse(input_mode)
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    ss = state_space_of(system, Output.GLOBAL)
    A, B = ss.A, ss.B
    n, m = B.shape
    n_steps = int(round(T / dt))
    record_every = max(1, int(record_every))
    n_rec = n_steps // record_every + 1
    states = np.empty((n_rec, n))
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(m)]

    if mode is InputMode.WHITE_NOISE:
        rho = float(np.abs(np.linalg.eigvals(A)).max())
        if dt * rho >= 1.0:
            raise UnstableStep(f"dt={dt} too large: dt * max|eig| = {dt * rho:.3g} >= 1",
                               suggested_dt=0.5 / rho)
        M = np.eye(n) + dt * A
        Bs = math.sqrt(dt) * B
        psi = np.zeros(n) if psi0 is None else np.array(psi0, dtype=float)
        states[0] = psi
        rec = 1
        step = 0
        while step < n_steps:
            k = min(NOISE_BLOCK, n_steps - step)
            xi = np.stack([g.standard_normal(k) for g in streams])
            forcing = (Bs @ xi).T
            for j in range(k):
                psi = M @ psi + forcing[j]
                step += 1
                if step % record_every == 0:
                    states[rec] = psi
                    rec += 1
    else:
        if ic_channels not in IC_CHANNELS:
            raise ValueError(f"ic_channels must be one of {IC_CHANNELS}")
        xi0 = np.array([g.standard_normal() for g in streams])
        n_dist = ss.n_sites
        if ic_channels == "disturbance":
            xi0[n_dist:] = 0.0
        elif ic_channels == "noise":
            if m == n_dist:
                raise ValueError("system has no measurement noise channels")
            xi0[:n_dist] = 0.0
        psi = B @ xi0 if psi0 is None else np.array(psi0, dtype=float)
        Phi = sla.expm(A * dt * record_every)
        states[0] = psi
        for r in range(1, n_rec):
            psi = Phi @ psi
            states[r] = psi

    outputs = {Output.GLOBAL: ss.C, Output.LOCAL: state_space_of(system, Output.LOCAL).C}
    sample_dt = dt * record_every
    return Trajectory(times=np.arange(n_rec) * sample_dt, states=states, labels=ss.labels,
                      n_sites=ss.n_sites, seed=seed, dt=sample_dt, step=dt, mode=mode,
                      outputs=outputs, time_constant=_slowest_time_constant(ss))


def output_energy(traj: Trajectory, output=Output.GLOBAL) -> np.ndarray:
    """Per-site output energy ``|y(t)|^2 / N`` at every sample."""
    y = traj.states @ traj.outputs[Output(output)].T
    return np.einsum("ij,ij->i", y, y) / traj.n_sites


def empirical_variance(traj: Trajectory, output=Output.GLOBAL, burn_in: float | None = None,
                       min_time_constants: float = 10.0) -> float:
    """Time and site average of ``y_k^T y_k`` after ``burn_in`` (default 20% of the run).

    Raises
    ------
    InsufficientSamples
        Fewer than two retained samples, or the retained window is shorter
        than ``min_time_constants`` times the slowest decay time.
    """
    T = float(traj.times[-1])
    if burn_in is None:
        burn_in = 0.2 * T
    keep = traj.times >= burn_in
    if keep.sum() < 2:
        raise InsufficientSamples("fewer than two samples after burn-in")
    window = T - burn_in
    if window < min_time_constants * traj.time_constant:
        raise InsufficientSamples(
            f"window {window:.4g} covers fewer than {min_time_constants} time constants "
            f"({traj.time_constant:.4g} each)")
    e = output_energy(traj, output)[keep]
    return float(np.mean(e))
