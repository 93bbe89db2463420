"""Storage-cell stability analyses: butterfly curves with inscribed-square
noise margins, retention-voltage estimates (closed form and bisection),
write margin, and threshold-variation Monte Carlo.

Cells are located by their role annotations (Q, QBAR, BL, BLB, WL, VDD);
bias and drive sources are appended to a copy of the netlist, never to the
caller's object.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .devices import TechnologyParams, derive_tech_params, leakage_current
from .engine import EngineError, dc_sweep, solve_dc
from .netlist import GROUND, Netlist, NetlistError, Node, SourceElement, with_elements

SQRT2 = math.sqrt(2.0)

# Ids given to the bias sources appended around a cell under analysis.
_BIAS_IDS = ("VSNMVDD", "VSNMWL", "VSNMBL", "VSNMBLB", "VSNMIN")


class NonWritableError(Exception):
    pass


@dataclass(frozen=True)
class TransferCurve:
    """One inverter's DC transfer curve in its own frame."""

    v_in: np.ndarray
    v_out: np.ndarray


@dataclass(frozen=True)
class SnmResult:
    snm_high: float
    snm_low: float
    # Diagonal corner points of each inscribed square, as (V1, V2) pairs on
    # curve A and mirrored curve B; None when the lobes do not close.
    anchors_high: tuple[tuple[float, float], tuple[float, float]] | None
    anchors_low: tuple[tuple[float, float], tuple[float, float]] | None

    @property
    def snm(self) -> float:
        return min(self.snm_high, self.snm_low)


@dataclass
class ButterflyData:
    lobe_a: TransferCurve  # input V1 = V(Q), output V2 = V(QBAR)
    lobe_b: TransferCurve  # input V2 = V(QBAR), output V1 = V(Q)
    snm_high: float
    snm_low: float
    anchors_high: tuple[tuple[float, float], tuple[float, float]] | None
    anchors_low: tuple[tuple[float, float], tuple[float, float]] | None
    mode: str
    v_dd: float
    grid: float

    @property
    def snm(self) -> float:
        return min(self.snm_high, self.snm_low)


def _rotated(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """45-degree frame: abscissa u along the falling diagonal, ordinate w."""
    u = (x - y) / SQRT2
    w = (x + y) / SQRT2
    order = np.argsort(u, kind="stable")
    u, w = u[order], w[order]
    keep = np.concatenate(([True], np.diff(u) > 0))
    return u[keep], w[keep]


def inscribed_square_snm(curve_a: TransferCurve, curve_b: TransferCurve) -> SnmResult:
    """Side of the largest square inscribed in each butterfly lobe.

    Curve A is taken as V2 = f_A(V1); curve B (given in its own frame,
    V1 = f_B(V2)) is mirrored across the V1 = V2 diagonal.  In coordinates
    rotated 45 degrees both branches are single-valued over the shared
    abscissa, vertical separation equals the square's diagonal, and linear
    interpolation is exact for any segment of either polyline.

    The cell is bistable only when the separation changes sign from
    positive to negative along the abscissa; then each extreme of the
    separation, divided by sqrt(2), is one lobe's margin.  Otherwise both
    margins are zero.
    """
    ua, wa = _rotated(np.asarray(curve_a.v_in, float), np.asarray(curve_a.v_out, float))
    ub, wb = _rotated(np.asarray(curve_b.v_out, float), np.asarray(curve_b.v_in, float))
    lo = max(ua[0], ub[0])
    hi = min(ua[-1], ub[-1])
    grid_u = np.unique(np.concatenate((ua, ub)))
    grid_u = grid_u[(grid_u >= lo) & (grid_u <= hi)]
    if grid_u.size == 0:
        return SnmResult(0.0, 0.0, None, None)

    wa_i = np.interp(grid_u, ua, wa)
    wb_i = np.interp(grid_u, ub, wb)
    gap = wa_i - wb_i
    imax = int(np.argmax(gap))
    imin = int(np.argmin(gap))
    if not (gap[imax] > 0.0 > gap[imin]) or imax >= imin:
        return SnmResult(0.0, 0.0, None, None)

    def anchors(i: int):
        u = grid_u[i]
        pa = ((wa_i[i] + u) / SQRT2, (wa_i[i] - u) / SQRT2)
        pb = ((wb_i[i] + u) / SQRT2, (wb_i[i] - u) / SQRT2)
        return (
            (float(pa[0]), float(pa[1])),
            (float(pb[0]), float(pb[1])),
        )

    return SnmResult(
        snm_high=float(gap[imax] / SQRT2),
        snm_low=float(-gap[imin] / SQRT2),
        anchors_high=anchors(imax),
        anchors_low=anchors(imin),
    )


def _cell_ports(cell: Netlist) -> dict[str, str]:
    ports = {}
    for role in ("Q", "QBAR", "BL", "BLB", "WL", "VDD"):
        try:
            ports[role] = cell.role_node(role)
        except NetlistError as exc:
            raise ConfigError(str(exc)) from None
    return ports


def _bias_sources(
    ports: dict[str, str], v_dd: float, wl: float, drive_node: str | None
) -> list[SourceElement]:
    gnd = Node(GROUND)
    out = [
        SourceElement("VSNMVDD", Node(ports["VDD"]), gnd, "DC", (v_dd,)),
        SourceElement("VSNMWL", Node(ports["WL"]), gnd, "DC", (wl,)),
        SourceElement("VSNMBL", Node(ports["BL"]), gnd, "DC", (v_dd,)),
        SourceElement("VSNMBLB", Node(ports["BLB"]), gnd, "DC", (v_dd,)),
    ]
    if drive_node is not None:
        out.append(SourceElement("VSNMIN", Node(drive_node), gnd, "DC", (0.0,)))
    return out


def _augment(cell: Netlist, extra: list[SourceElement]) -> Netlist:
    present = {e.id.upper() for e in cell.elements}
    for src in extra:
        if src.id.upper() in present:
            raise ConfigError(f"cell already contains an element named {src.id}")
    return with_elements(cell, extra)


def butterfly(
    cell: Netlist,
    tech: TechnologyParams | None = None,
    mode: str = "hold",
    v_dd: float = 1.8,
    grid: float = 1e-3,
    vth_shift: dict[str, float] | None = None,
) -> ButterflyData:
    """Open-loop transfer curves of both cell inverters and their noise
    margins.  Hold mode turns the access devices off; read mode drives the
    wordline at v_dd.  Both bitlines stay clamped at v_dd (precharged).
    """
    if mode not in ("hold", "read"):
        raise ValueError(f"unknown butterfly mode {mode!r}")
    if grid <= 0:
        raise ValueError("grid must be positive")
    ports = _cell_ports(cell)
    wl = v_dd if mode == "read" else 0.0

    lobes = []
    for drive, probe in ((ports["Q"], ports["QBAR"]), (ports["QBAR"], ports["Q"])):
        aug = _augment(cell, _bias_sources(ports, v_dd, wl, drive))
        sweep = dc_sweep(aug, "VSNMIN", 0.0, v_dd, grid, tech, vth_shift)
        lobes.append(TransferCurve(sweep.values, sweep.node(probe)))

    result = inscribed_square_snm(lobes[0], lobes[1])
    return ButterflyData(
        lobe_a=lobes[0],
        lobe_b=lobes[1],
        snm_high=result.snm_high,
        snm_low=result.snm_low,
        anchors_high=result.anchors_high,
        anchors_low=result.anchors_low,
        mode=mode,
        v_dd=v_dd,
        grid=grid,
    )


def butterfly_to_csv(data: ButterflyData, dest) -> None:
    """Columns V1, Vout_A, Vout_B_mirrored share the input grid; plot the
    third column with its axes exchanged to draw the second lobe.  Summary
    lines follow the data as `# name=value` comments."""
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    out = open(dest, "w", newline="") if own else dest
    try:
        writer = csv.writer(out)
        writer.writerow(["V1", "Vout_A", "Vout_B_mirrored"])
        for i in range(data.lobe_a.v_in.size):
            writer.writerow(
                [
                    repr(float(data.lobe_a.v_in[i])),
                    repr(float(data.lobe_a.v_out[i])),
                    repr(float(data.lobe_b.v_out[i])),
                ]
            )
        out.write(f"# snm_high={data.snm_high!r}\n")
        out.write(f"# snm_low={data.snm_low!r}\n")
        out.write(f"# snm={data.snm!r}\n")
        out.write(f"# mode={data.mode} v_dd={data.v_dd!r} grid={data.grid!r}\n")
    finally:
        if own:
            out.close()


def snm_macro(v_dd: float, drv: float, n: float) -> float:
    """Linear margin model 2/(3+n)*(v_dd - drv); valid only at or above the
    retention voltage."""
    if v_dd < drv:
        raise ValueError("supply below retention voltage")
    return 2.0 / (3.0 + n) * (v_dd - drv)


# ---------------------------------------------------------------------
# Retention voltage


# The retention expressions index the six cell transistors 1..6.  The cell
# is assumed to hold Q low: 1, 2 = left pull-down/pull-up (the inverter
# driving Q), 3, 4 = right pull-down/pull-up, 5, 6 = access devices on the
# Q and QBAR sides.  Permute here if a different hold state is wanted.
TRANSISTOR_INDEX_MAP: dict[int, str] = {
    1: "MPDL",
    2: "MPUL",
    3: "MPDR",
    4: "MPUR",
    5: "MPGL",
    6: "MPGR",
}


@dataclass(frozen=True)
class DrvInputs:
    """Per-transistor zero-bias leakages and subthreshold factors, indexed
    1..6 as in TRANSISTOR_INDEX_MAP, plus the thermal voltage."""

    i_off: tuple[float, float, float, float, float, float]
    n: tuple[float, float, float, float, float, float]
    v_t: float

    def __post_init__(self):
        if len(self.i_off) != 6 or len(self.n) != 6:
            raise ValueError("six leakage and six slope values required")
        if any(i <= 0 for i in self.i_off):
            raise ValueError("leakage currents must be positive")
        if any(n < 1 for n in self.n):
            raise ValueError("subthreshold factors must be at least 1")
        if self.v_t <= 0:
            raise ValueError("thermal voltage must be positive")


def drv_ideal(v_t: float, n: float = 1.0) -> float:
    """Retention floor of a matched ideal technology: 2*v_T*ln(1+n)."""
    return 2.0 * v_t * math.log(1.0 + n)


def _is_ideal(d: DrvInputs) -> bool:
    if any(n != 1.0 for n in d.n):
        return False
    lo, hi = min(d.i_off), max(d.i_off)
    return hi / lo - 1.0 < 1e-9


def drv_closed_form(d: DrvInputs, ideal_shortcut: bool = True) -> float:
    """Data-retention voltage from per-transistor leakage ratios.

    The general expression stack (a zeroth-order balance plus two
    first-order corrections, weighted by n2) does not collapse to the
    matched-technology floor 2*v_T*ln(1+n) when every n_i is 1 and the
    leakages are equal; that documented limit is returned directly for the
    exactly matched case.  Pass ideal_shortcut=False to evaluate the
    general expressions regardless of the inputs.
    """
    if ideal_shortcut and _is_ideal(d):
        return drv_ideal(d.v_t, 1.0)
    i1, i2, i3, i4, i5, _ = d.i_off
    n1, n2, n3, n4, _, _ = d.n
    vt = d.v_t
    try:
        # i2 * i3 can underflow to zero for denormal-range leakages.
        arg = (1.0 / n3 + 1.0 / n4) * (i4 / (i2 * i3)) * (
            i5 / n2 + i1 * (1.0 / n1 + 1.0 / n2)
        )
    except ZeroDivisionError:
        arg = math.inf
    if not math.isfinite(arg) or arg <= 0.0:
        raise ValueError(f"log argument of the zeroth-order term is {arg!r}")
    drv0 = vt / (1.0 / n2 + 1.0 / n3) * math.log(arg)
    v1 = vt * (i1 + i5) / i2 * math.exp(-drv0 / (n2 * vt))
    v2 = drv0 - vt * (i4 / i3) * math.exp(-drv0 / (n3 * vt))
    return drv0 + v1 / 2.0 + (drv0 - v2) * n2 / 2.0


def drv_inputs_from_cell(
    cell: Netlist, tech: TechnologyParams | None = None
) -> DrvInputs:
    """Extract DrvInputs from a role-annotated cell at a technology point."""
    tech = derive_tech_params(tech if tech is not None else TechnologyParams.default())
    v_t = tech.v_t
    i_off, n = [], []
    for index in sorted(TRANSISTOR_INDEX_MAP):
        element_id = TRANSISTOR_INDEX_MAP[index]
        try:
            m = cell.element(element_id)
        except KeyError:
            raise ConfigError(
                f"cell lacks transistor {element_id} (index {index})"
            ) from None
        dev = tech.device(m.polarity)
        i_off.append(leakage_current(dev, m.w, m.l, v_t))
        n.append(dev.n)
    return DrvInputs(tuple(i_off), tuple(n), v_t)


def drv_bruteforce(
    cell: Netlist,
    tech: TechnologyParams | None = None,
    resolution: float = 1e-3,
    v_max: float = 1.8,
) -> float:
    """Smallest supply (to `resolution`) at which the hold-mode butterfly
    still closes with positive margin; bisection against full DC sweeps."""

    def holds(v_dd: float) -> bool:
        grid = max(v_dd / 200.0, 1e-4)
        return butterfly(cell, tech, "hold", v_dd, grid).snm > 0.0

    lo, hi = 0.0, v_max
    if not holds(hi):
        raise EngineError(f"cell is not bistable even at v_dd={v_max} V")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------
# Write margin


def write_margin(
    cell: Netlist,
    tech: TechnologyParams | None = None,
    v_dd: float = 1.8,
    wl_voltage: float | None = None,
    resolution: float = 1e-3,
) -> float:
    """Highest BL voltage (within `resolution`) that flips a cell holding
    Q high, with BLB held at v_dd and the wordline driven (default v_dd)."""
    ports = _cell_ports(cell)
    wl = v_dd if wl_voltage is None else wl_voltage
    held = {ports["Q"]: v_dd, ports["QBAR"]: 0.0}

    def flips(bl_v: float) -> bool:
        sources = [
            SourceElement(s.id, s.n_plus, s.n_minus, "DC", (bl_v,))
            if s.id == "VSNMBL"
            else s
            for s in _bias_sources(ports, v_dd, wl, None)
        ]
        aug = _augment(cell, sources)
        sol = solve_dc(aug, tech, initial=held)
        return sol.voltage(ports["Q"]) < sol.voltage(ports["QBAR"])

    if not flips(0.0):
        raise NonWritableError(
            f"state does not flip even at BL=0 V (WL={wl:g} V); "
            "cell is not writable under these drives"
        )
    if flips(v_dd):
        return v_dd
    lo, hi = 0.0, v_dd  # flips at lo, holds at hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if flips(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------
# Threshold variation


def sigma_vth(a_vth: float, w: float, l: float) -> float:
    """Pelgrom-style threshold spread A_Vth/sqrt(W*L)."""
    if w * l <= 0:
        raise ValueError("device area must be positive")
    return a_vth * math.sqrt(1.0 / (w * l))


@dataclass(frozen=True)
class VariationModel:
    """Mismatch coefficient plus sampling plan; per-device W and L are read
    from the cell netlist when sampling."""

    a_vth: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if self.a_vth < 0:
            raise ValueError("a_vth must be nonnegative")


@dataclass
class McSummary:
    samples: np.ndarray  # per-sample SNM in draw order; NaN where failed
    mean: float
    stddev: float
    minimum: float
    histogram: tuple[np.ndarray, np.ndarray]  # counts, bin edges
    failures: int


def monte_carlo_snm(
    cell: Netlist,
    tech: TechnologyParams | None = None,
    vm: VariationModel | None = None,
    mode: str = "hold",
    v_dd: float = 1.8,
    grid: float = 1e-2,
    bins: int = 20,
) -> McSummary:
    """Butterfly SNM under independent per-device V_th0 perturbations.

    All draws come from one seeded generator up front, so results are
    byte-identical for a given (seed, N, cell, grid) regardless of how
    samples would be scheduled.  Failed samples count toward `failures`
    and are fatal only beyond 10% of N.
    """
    if vm is None:
        raise ValueError("a VariationModel is required")
    mos = [m for m in cell.mos_elements if not m.degenerate]
    if not mos:
        raise ConfigError("cell has no transistors to perturb")
    sig = np.array([sigma_vth(vm.a_vth, m.w, m.l) for m in mos])
    rng = np.random.default_rng(vm.seed)
    draws = rng.standard_normal((vm.n_samples, len(mos)))

    samples = np.full(vm.n_samples, np.nan)
    failures = 0
    for k in range(vm.n_samples):
        shift = {m.id: float(draws[k, j] * sig[j]) for j, m in enumerate(mos)}
        try:
            samples[k] = butterfly(cell, tech, mode, v_dd, grid, vth_shift=shift).snm
        except EngineError:
            failures += 1
    if failures > 0.1 * vm.n_samples:
        raise EngineError(
            f"{failures} of {vm.n_samples} Monte Carlo samples failed to solve"
        )
    clean = samples[np.isfinite(samples)]
    counts, edges = np.histogram(clean, bins=bins)
    return McSummary(
        samples=samples,
        mean=float(clean.mean()),
        stddev=float(clean.std()),
        minimum=float(clean.min()),
        histogram=(counts, edges),
        failures=failures,
    )


# ---------------------------------------------------------------------
# Read current (for bitline delay estimates)


def read_current(
    cell: Netlist, tech: TechnologyParams | None = None, v_dd: float = 1.8
) -> float:
    """Cell current pulled from the BL clamp during a read of a stored 0
    (Q low); this is the discharge current a bitline capacitance sees."""
    ports = _cell_ports(cell)
    aug = _augment(cell, _bias_sources(ports, v_dd, v_dd, None))
    sol = solve_dc(aug, tech, initial={ports["Q"]: 0.0, ports["QBAR"]: v_dd})
    return abs(sol.branch_currents["VSNMBL"])
