"""Networked control of a series RLC circuit.

The plant (capacitor voltage as output) runs on one node, a proportional
controller on another, and the loop is closed through a simulated
transport while a bulk flow competes with the feedback path.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .core import SessionConfig
from .flows import FlowSpec, SampleLog, payload_for
from .netsim import LinkModel, Network, Simulator, Topology, TransportParams

CONTROL_HEADER = ("k", "time_ms", "vc_volts", "u_volts", "y_received")

CONTROLLER_NODE = 0
PLANT_NODE = 1
Y_FLOW = 10
U_FLOW = 11
SAMPLE = struct.Struct("<Id")  # (k, value)


@dataclass(frozen=True)
class PlantParams:
    R: float = 1.0
    L: float = 0.1
    C: float = 0.1
    T_us: int = 20_000
    vi: float = 1.0

    def __post_init__(self):
        if min(self.R, self.L, self.C, self.T_us) <= 0:
            raise ValueError("R, L, C and T must be positive")

    @property
    def T(self) -> float:
        return self.T_us / 1e6


def continuous_matrices(p: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """State x = (inductor current, capacitor voltage), input = source voltage."""
    A = np.array([[-p.R / p.L, -1.0 / p.L],
                  [1.0 / p.C, 0.0]])
    B = np.array([[1.0 / p.L], [0.0]])
    return A, B


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(norm))) + 4) if norm > 0 else 0
    X = M / (2 ** s)
    term = np.eye(len(M))
    out = term.copy()
    for k in range(1, 40):
        term = term @ X / k
        out = out + term
        if np.linalg.norm(term, 1) <= 1e-18 * np.linalg.norm(out, 1):
            break
    for _ in range(s):
        out = out @ out
    return out


@dataclass(frozen=True)
class DiscretePlant:
    Ad: np.ndarray
    Bd: np.ndarray
    C_out: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))

    def output(self, x: np.ndarray) -> float:
        return float(self.C_out @ x)


def discretize(p: PlantParams) -> DiscretePlant:
    """Zero-order-hold discretization via the exponential of [[A, B], [0, 0]]·T."""
    A, B = continuous_matrices(p)
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * p.T)
    return DiscretePlant(E[:n, :n], E[:n, n:].ravel())


def plant_step(dp: DiscretePlant, x: np.ndarray, u: float) -> np.ndarray:
    return dp.Ad @ x + dp.Bd * u


def controller_step(vi: float, y: float, K: float = 1.0) -> float:
    return K * (vi - y)


@dataclass(frozen=True)
class ControlSample:
    k: int
    time_ms: float
    vc: float
    u: float
    fresh: bool


def local_loop(p: PlantParams, steps: int, K: float = 1.0) -> list[ControlSample]:
    """Controller and plant in one place: every command is applied on time."""
    dp = discretize(p)
    x = np.zeros(2)
    u = 0.0
    out = [ControlSample(0, 0.0, 0.0, 0.0, True)]
    for k in range(1, steps + 1):
        u = controller_step(p.vi, dp.output(x), K)
        x = plant_step(dp, x, u)
        out.append(ControlSample(k, k * p.T_us / 1000, dp.output(x), u, True))
    return out


def run_closed_loop(transport: str, perturbing: FlowSpec | None, duration_us: int,
                    p: PlantParams = PlantParams(), seed: int = 0,
                    link: LinkModel | None = None, params: TransportParams | None = None,
                    K: float = 1.0, y_priority: int = 7, u_priority: int = 7,
                    log: SampleLog | None = None) -> list[ControlSample]:
    """Closed loop over the simulated 2-node network.

    Each period the plant advances one step with the most recently received
    command (held if the fresh one is late or lost), then publishes its
    output. The controller answers every output it receives. The perturbing
    flow, if any, uses the same transport as the loop. Deliveries of all
    three flows go to `log` when one is given.
    """
    dp = discretize(p)
    sim = Simulator(Topology.chain(2, link or LinkModel()), seed, record_trace=False)
    net = Network(sim, params or TransportParams(session=SessionConfig()))
    steps = duration_us // p.T_us
    state = {"x": np.zeros(2), "u": 0.0, "u_k": -1}
    trace: list[ControlSample] = []

    if log is None:
        log = SampleLog()

    def logged(name, fn=None):
        log.sent[name] = 0

        def deliver(msg, t):
            log.record(name, msg.seq, msg.publish_time, t, len(msg.payload))
            if fn is not None:
                fn(msg, t)
        return deliver

    def published(name, handle, payload):
        log.sent[name] += 1
        handle.publish(payload)

    def on_u(msg, _t):
        k, u = SAMPLE.unpack(msg.payload)
        if k > state["u_k"]:
            state["u"], state["u_k"] = u, k

    def on_y(msg, _t):
        k, y = SAMPLE.unpack(msg.payload)
        published("u", u_flow, SAMPLE.pack(k, controller_step(p.vi, y, K)))

    y_flow = net.open_flow(Y_FLOW, PLANT_NODE, CONTROLLER_NODE, transport, logged("y", on_y),
                           y_priority, p.T_us)
    u_flow = net.open_flow(U_FLOW, CONTROLLER_NODE, PLANT_NODE, transport, logged("u", on_u),
                           u_priority, p.T_us)

    if perturbing is not None:
        if perturbing.flow_id in (Y_FLOW, U_FLOW):
            raise ValueError(f"flow_id {perturbing.flow_id} is reserved for the control loop")
        pert = net.open_flow(perturbing.flow_id, perturbing.src, perturbing.dst, transport,
                             logged(perturbing.name), perturbing.priority, perturbing.period_us)
        for seq, t in enumerate(perturbing.publish_times()):
            if t >= duration_us:
                break
            sim.at(t, published, perturbing.name, pert,
                   payload_for(seed, perturbing.flow_id, seq, perturbing.message_size))

    def tick(k):
        if k > 0:
            state["x"] = plant_step(dp, state["x"], state["u"])
        vc = dp.output(state["x"])
        trace.append(ControlSample(k, sim.now / 1000, vc, state["u"], state["u_k"] == k - 1 or k == 0))
        published("y", y_flow, SAMPLE.pack(k, vc))

    for k in range(steps + 1):
        sim.at(k * p.T_us, tick, k)
    sim.run(until=steps * p.T_us)
    return trace


def max_deviation(a: list[ControlSample], b: list[ControlSample]) -> float:
    n = min(len(a), len(b))
    return max(abs(a[i].vc - b[i].vc) for i in range(n))


def write_control_csv(trace: list[ControlSample], fp: TextIO) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(CONTROL_HEADER)
    for s in trace:
        w.writerow([s.k, f"{s.time_ms:.3f}", f"{s.vc:.6f}", f"{s.u:.6f}", int(s.fresh)])
