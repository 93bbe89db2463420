"""Dense modified-nodal-analysis solver.

DC operating points use damped Newton iteration with a source-stepping
continuation fallback; sweeps warm-start each point from the last; transient
runs fixed-step backward Euler (default) or trapezoidal companions for the
capacitors.  Unknown ordering is named nodes first, in netlist first-use
order, then one branch current per voltage source.  Extended vectors carry a
trailing ground slot pinned at zero so every stamp writes unconditionally.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .devices import TechnologyParams, derive_tech_params
from .kernels import COL_VTH0, N_PAR, mos_stamp, pack_device
from .netlist import (
    GROUND,
    CapElement,
    MosElement,
    Netlist,
    Node,
    ResElement,
    SourceElement,
    with_elements,
)

ABSTOL = 1e-9  # A, node-row residual
RELTOL = 1e-3
VNTOL = 1e-6  # V
MAX_STEP = 0.3  # V per unknown per Newton iteration
MAX_ITER = 100


class EngineError(Exception):
    pass


class ConvergenceError(EngineError):
    pass


class FloatingNodeError(EngineError):
    pass


@dataclass
class DcSolution:
    voltages: dict[str, float]
    branch_currents: dict[str, float]
    iterations: int
    continuation: bool
    max_residual: float  # A, worst node KCL residual at the solution

    def voltage(self, name: str) -> float:
        if name == GROUND:
            return 0.0
        return self.voltages[name]


@dataclass
class SweepResult:
    source_id: str
    values: np.ndarray
    nodes: dict[str, np.ndarray]
    branch_currents: dict[str, np.ndarray]

    def node(self, name: str) -> np.ndarray:
        if name == GROUND:
            return np.zeros_like(self.values)
        return self.nodes[name]


@dataclass
class TransientResult:
    time: np.ndarray
    nodes: dict[str, np.ndarray]
    branch_currents: dict[str, np.ndarray]
    # Source drive values sampled at each time point (volts or amps);
    # empty when the result was loaded back from CSV.
    drives: dict[str, np.ndarray] = field(default_factory=dict)

    def node(self, name: str) -> np.ndarray:
        if name == GROUND:
            return np.zeros_like(self.time)
        return self.nodes[name]


# The transient result is the package's waveform container.
Waveform = TransientResult


class MnaSystem:
    """Equation assembly for one netlist against one technology card.

    vth_shift maps element ids to additive V_th0 perturbations; degenerate
    elements (zero geometry or placeholder terminals) are left unstamped.
    """

    def __init__(
        self,
        net: Netlist,
        tech: TechnologyParams | None = None,
        vth_shift: dict[str, float] | None = None,
    ):
        self.net = net
        self.tech = derive_tech_params(tech if tech is not None else TechnologyParams.default())
        self.vt = self.tech.v_t

        self.nodes = net.named_nodes()
        self.node_index = {name: i for i, name in enumerate(self.nodes)}
        self.n_nodes = len(self.nodes)

        live = [e for e in net.elements if not e.degenerate]
        self.vsources = [e for e in live if isinstance(e, SourceElement) and not e.is_current]
        self.isources = [e for e in live if isinstance(e, SourceElement) and e.is_current]
        self.caps = [e for e in live if isinstance(e, CapElement)]
        resistors = [e for e in live if isinstance(e, ResElement)]
        mos = [e for e in live if isinstance(e, MosElement)]

        self.n_branch = len(self.vsources)
        self.size = self.n_nodes + self.n_branch
        self.ground = self.size  # trailing extended slot
        self.branch_index = {e.id: self.n_nodes + k for k, e in enumerate(self.vsources)}

        shift = vth_shift or {}
        self.mos_idx = np.zeros((len(mos), 4), dtype=np.int64)
        self.mos_par = np.zeros((len(mos), N_PAR))
        for k, m in enumerate(mos):
            row = pack_device(self.tech.device(m.polarity), m.polarity, m.w, m.l, self.vt)
            row[COL_VTH0] += shift.get(m.id, 0.0)
            self.mos_par[k] = row
            self.mos_idx[k] = (
                self._slot(m.drain),
                self._slot(m.gate),
                self._slot(m.source),
                self._slot(m.bulk),
            )

        g = np.zeros((self.size + 1, self.size + 1))
        for r in resistors:
            if r.value <= 0:
                raise EngineError(f"resistor {r.id} needs a positive value")
            a, b = self._slot(r.n1), self._slot(r.n2)
            gg = 1.0 / r.value
            g[a, a] += gg
            g[a, b] -= gg
            g[b, b] += gg
            g[b, a] -= gg
        for e in self.vsources:
            k = self.branch_index[e.id]
            a, b = self._slot(e.n_plus), self._slot(e.n_minus)
            g[a, k] += 1.0
            g[b, k] -= 1.0
            g[k, a] += 1.0
            g[k, b] -= 1.0
        self.g_static = g
        self._overrides: dict[str, float] = {}

    def _slot(self, node: Node) -> int:
        if node.is_ground:
            return self.ground
        return self.node_index[node.name]

    # -- source drive -------------------------------------------------

    def set_source(self, source_id: str, value: float) -> None:
        """Override one source's drive, replacing its card waveform."""
        if source_id not in self.branch_index and all(
            e.id != source_id for e in self.isources
        ):
            raise EngineError(f"no stamped source named {source_id!r}")
        self._overrides[source_id] = float(value)

    def _source_value(self, e: SourceElement, t: float) -> float:
        if e.id in self._overrides:
            return self._overrides[e.id]
        return e.value_at(t)

    def rhs(self, t: float = 0.0, scale: float = 1.0) -> np.ndarray:
        b = np.zeros(self.size + 1)
        for e in self.vsources:
            b[self.branch_index[e.id]] -= scale * self._source_value(e, t)
        for e in self.isources:
            val = scale * self._source_value(e, t)
            b[self._slot(e.n_plus)] += val
            b[self._slot(e.n_minus)] -= val
        return b

    # -- solving ------------------------------------------------------

    def residual(self, x: np.ndarray, b: np.ndarray, g_dyn: np.ndarray | None = None) -> np.ndarray:
        g = self.g_static if g_dyn is None else g_dyn
        x_ext = np.append(x, 0.0)
        jac = g.copy()
        res = g @ x_ext + b
        mos_stamp(x_ext, self.mos_idx, self.mos_par, self.vt, jac, res)
        return res

    def _worst_node(self, res: np.ndarray) -> str:
        if self.n_nodes == 0:
            return "<none>"
        return self.nodes[int(np.argmax(np.abs(res[: self.n_nodes])))]

    def _newton(self, x0: np.ndarray, b: np.ndarray, g_dyn: np.ndarray) -> tuple[np.ndarray, int]:
        x = x0.copy()
        res = np.zeros(self.size + 1)
        step_small = False
        for it in range(1, MAX_ITER + 1):
            x_ext = np.append(x, 0.0)
            jac = g_dyn.copy()
            res = g_dyn @ x_ext + b
            mos_stamp(x_ext, self.mos_idx, self.mos_par, self.vt, jac, res)
            if not np.all(np.isfinite(res)):
                raise ConvergenceError("residual evaluation produced non-finite values")
            node_ok = np.abs(res[: self.n_nodes]).max(initial=0.0) < ABSTOL
            branch_ok = np.abs(res[self.n_nodes : self.size]).max(initial=0.0) < VNTOL
            if node_ok and branch_ok and step_small:
                return x, it
            try:
                delta = np.linalg.solve(jac[: self.size, : self.size], -res[: self.size])
            except np.linalg.LinAlgError as exc:
                raise FloatingNodeError(
                    "singular system matrix; some node has no conductive path to ground"
                ) from exc
            if not np.all(np.isfinite(delta)):
                raise ConvergenceError("Newton step produced non-finite values")
            applied = np.clip(delta, -MAX_STEP, MAX_STEP)
            x_new = x + applied
            tol = RELTOL * np.maximum(np.abs(x_new), np.abs(x)) + VNTOL
            step_small = bool(np.all(np.abs(applied) <= tol))
            x = x_new
        raise ConvergenceError(
            f"no convergence within {MAX_ITER} Newton iterations; "
            f"worst residual at node {self._worst_node(res)}"
        )

    def _gmin_stepping(self, x0: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, int]:
        # Decade-relaxed shunt from every node to ground.  Near a bistable
        # trip point the exact Jacobian is close to singular and plain
        # Newton wanders; the shunted system stays well conditioned and the
        # warm start keeps the walk inside the caller's intended basin.
        x = x0.copy()
        total = 0
        gmin = 1e-3
        d = np.arange(self.n_nodes)
        while gmin > 1e-12:
            g = self.g_static.copy()
            g[d, d] += gmin
            x, its = self._newton(x, b, g)
            total += its
            gmin *= 0.1
        x, its = self._newton(x, b, self.g_static)
        return x, total + its

    def _continuation(self, t: float) -> tuple[np.ndarray, int]:
        # Source stepping: at zero drive the all-off state solves exactly,
        # then the drive is walked up with an adaptive step.
        x = np.zeros(self.size)
        lam = 0.0
        step = 0.1
        total = 0
        for _ in range(100):
            target = min(1.0, lam + step)
            try:
                x_try, its = self._newton(x, self.rhs(t, scale=target), self.g_static)
            except ConvergenceError:
                step *= 0.5
                if step < 1e-4:
                    raise ConvergenceError(
                        "source stepping stalled below the minimum step"
                    ) from None
                continue
            x = x_try
            lam = target
            total += its
            if lam >= 1.0:
                return x, total
            step *= 1.5
        raise ConvergenceError("source stepping exceeded 100 steps")

    def solve_dc_vector(
        self, x0: np.ndarray | None = None, t: float = 0.0
    ) -> tuple[np.ndarray, int, bool]:
        b = self.rhs(t)
        start = np.zeros(self.size) if x0 is None else x0
        try:
            x, its = self._newton(start, b, self.g_static)
            return x, its, False
        except FloatingNodeError:
            raise
        except ConvergenceError:
            pass
        try:
            x, its = self._gmin_stepping(start, b)
            return x, its, True
        except ConvergenceError:
            x, its = self._continuation(t)
            return x, its, True

    # -- state packing ------------------------------------------------

    def pack_state(self, volts: dict[str, float] | None) -> np.ndarray:
        x = np.zeros(self.size)
        for name, v in (volts or {}).items():
            if name == GROUND:
                continue
            if name not in self.node_index:
                raise EngineError(f"unknown node {name!r} in initial state")
            x[self.node_index[name]] = v
        return x

    def solution(self, x: np.ndarray, iterations: int, continuation: bool, t: float = 0.0) -> DcSolution:
        volts = {name: float(x[i]) for name, i in self.node_index.items()}
        currents = {sid: float(x[k]) for sid, k in self.branch_index.items()}
        res = self.residual(x, self.rhs(t))
        worst = float(np.abs(res[: self.n_nodes]).max(initial=0.0))
        return DcSolution(volts, currents, iterations, continuation, worst)


def solve_dc(
    net: Netlist,
    tech: TechnologyParams | None = None,
    vth_shift: dict[str, float] | None = None,
    initial: dict[str, float] | None = None,
) -> DcSolution:
    sys = MnaSystem(net, tech, vth_shift)
    x0 = sys.pack_state(initial) if initial else None
    x, its, cont = sys.solve_dc_vector(x0=x0)
    return sys.solution(x, its, cont)


def sweep_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive uniform grid; the last point lands on `stop` exactly."""
    if step <= 0:
        raise ValueError("sweep step must be positive")
    n = max(1, int(round((stop - start) / step)))
    values = start + step * np.arange(n + 1)
    values[-1] = stop
    return values


def dc_sweep(
    net: Netlist,
    source_id: str,
    start: float,
    stop: float,
    step: float,
    tech: TechnologyParams | None = None,
    vth_shift: dict[str, float] | None = None,
    initial: dict[str, float] | None = None,
) -> SweepResult:
    """Sweep one source's drive over an inclusive grid, warm-starting each
    point from the previous solution."""
    sys = MnaSystem(net, tech, vth_shift)
    values = sweep_grid(start, stop, step)
    xs = np.zeros((values.size, sys.size))
    x = sys.pack_state(initial) if initial else None
    for i, v in enumerate(values):
        sys.set_source(source_id, v)
        try:
            x, _, _ = sys.solve_dc_vector(x0=x)
        except EngineError as exc:
            raise type(exc)(f"{exc} (sweeping {source_id}={v:g})") from exc
        xs[i] = x
    nodes = {name: xs[:, k].copy() for name, k in sys.node_index.items()}
    currents = {sid: xs[:, k].copy() for sid, k in sys.branch_index.items()}
    return SweepResult(source_id, values, nodes, currents)


def transient(
    net: Netlist,
    t_stop: float,
    dt: float,
    tech: TechnologyParams | None = None,
    method: str = "be",
    ics: dict[str, float] | None = None,
    vth_shift: dict[str, float] | None = None,
) -> TransientResult:
    """Fixed-step transient; `method` is "be" or "trap".

    `ics` pins the named nodes with temporary voltage sources for the t=0
    solve only; the pins are absent from the time stepping itself.
    """
    if dt <= 0 or t_stop <= 0:
        raise ValueError("t_stop and dt must be positive")
    if method not in ("be", "trap"):
        raise ValueError(f"unknown integration method {method!r}")

    sys = MnaSystem(net, tech, vth_shift)
    for e in sys.vsources + sys.isources:
        if e.kind == "PULSE" and (dt > e.params[3] or dt > e.params[4]):
            warnings.warn(
                f"time step {dt:g} s exceeds a rise/fall time of source {e.id}; "
                "edges will be under-resolved",
                stacklevel=2,
            )

    if ics:
        pins = [
            SourceElement(f"VIC{i}", Node(name), Node(GROUND), "DC", (float(v),))
            for i, (name, v) in enumerate(ics.items())
        ]
        pinned = solve_dc(with_elements(net, pins), tech, vth_shift=vth_shift)
        x0 = sys.pack_state({n: pinned.voltages[n] for n in sys.nodes})
        for sid, k in sys.branch_index.items():
            x0[k] = pinned.branch_currents[sid]
    else:
        x0, _, _ = sys.solve_dc_vector(t=0.0)

    n_steps = int(round(t_stop / dt))
    times = np.arange(n_steps + 1) * dt
    xs = np.zeros((n_steps + 1, sys.size))
    xs[0] = x0

    cap_slots = [(sys._slot(c.n1), sys._slot(c.n2), c.value) for c in sys.caps]

    def companion_matrix(factor: float) -> np.ndarray:
        g = sys.g_static.copy()
        for a, b, cval in cap_slots:
            geq = factor * cval
            g[a, a] += geq
            g[a, b] -= geq
            g[b, b] += geq
            g[b, a] -= geq
        return g

    factor = 2.0 / dt if method == "trap" else 1.0 / dt
    g_dyn = companion_matrix(factor)
    # The trapezoidal companion needs each capacitor's branch current from
    # the previous step, which the t = 0 solve does not provide; the first
    # step runs backward Euler to seed it.  One first-order step leaves the
    # global order at two.
    g_start = companion_matrix(1.0 / dt) if method == "trap" else g_dyn

    i_hist = np.zeros(len(cap_slots))  # trapezoidal branch-current history
    x = x0.copy()
    for k in range(1, n_steps + 1):
        startup = method == "trap" and k == 1
        fac_k = 1.0 / dt if startup else factor
        b_vec = sys.rhs(times[k])
        x_ext_prev = np.append(x, 0.0)
        for j, (a, b, cval) in enumerate(cap_slots):
            hist = fac_k * cval * (x_ext_prev[a] - x_ext_prev[b])
            if method == "trap" and not startup:
                hist += i_hist[j]
            b_vec[a] -= hist
            b_vec[b] += hist
        try:
            x, _ = sys._newton(x, b_vec, g_start if startup else g_dyn)
        except ConvergenceError as exc:
            raise ConvergenceError(f"{exc} (at t={times[k]:g} s)") from exc
        if method == "trap":
            x_ext = np.append(x, 0.0)
            for j, (a, b, cval) in enumerate(cap_slots):
                dv = (x_ext[a] - x_ext[b]) - (x_ext_prev[a] - x_ext_prev[b])
                if startup:
                    i_hist[j] = cval * dv / dt
                else:
                    i_hist[j] = factor * cval * dv - i_hist[j]
        xs[k] = x

    nodes = {name: xs[:, i].copy() for name, i in sys.node_index.items()}
    currents = {sid: xs[:, i].copy() for sid, i in sys.branch_index.items()}
    drives = {
        e.id: np.array([sys._source_value(e, t) for t in times])
        for e in sys.vsources + sys.isources
    }
    return TransientResult(times, nodes, currents, drives)


# -- CSV export -------------------------------------------------------


def _write_columns(out, first_name: str, first_col: np.ndarray, result) -> None:
    writer = csv.writer(out)
    writer.writerow(
        [first_name]
        + [f"V({n})" for n in result.nodes]
        + [f"I({s})" for s in result.branch_currents]
    )
    cols = list(result.nodes.values()) + list(result.branch_currents.values())
    for i in range(first_col.size):
        writer.writerow([repr(float(first_col[i]))] + [repr(float(c[i])) for c in cols])


def _open_for(dest):
    if isinstance(dest, (str,)) or hasattr(dest, "__fspath__"):
        return open(dest, "w", newline=""), True
    return dest, False


def sweep_to_csv(result: SweepResult, dest) -> None:
    out, owned = _open_for(dest)
    try:
        _write_columns(out, result.source_id, result.values, result)
    finally:
        if owned:
            out.close()


def waveform_to_csv(result: TransientResult, dest) -> None:
    out, owned = _open_for(dest)
    try:
        _write_columns(out, "time", result.time, result)
    finally:
        if owned:
            out.close()


def waveform_from_csv(src) -> TransientResult:
    """Read back a waveform CSV written by waveform_to_csv."""
    if isinstance(src, (str,)) or hasattr(src, "__fspath__"):
        with open(src, newline="") as fh:
            text = fh.read()
    else:
        text = src.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, data = rows[0], np.array([[float(v) for v in row] for row in rows[1:]])
    nodes: dict[str, np.ndarray] = {}
    currents: dict[str, np.ndarray] = {}
    for j, name in enumerate(header[1:], start=1):
        if name.startswith("V(") and name.endswith(")"):
            nodes[name[2:-1]] = data[:, j]
        elif name.startswith("I(") and name.endswith(")"):
            currents[name[2:-1]] = data[:, j]
        else:
            nodes[name] = data[:, j]
    return TransientResult(data[:, 0], nodes, currents)
