"""Netlist generators: the 6T storage cell, cell arrays, and the column
periphery (precharge, sense amplifier, write driver, row decoder).

Generated netlists carry role annotations naming their ports and the usual
node/element count trailer, so they round-trip through the parser and drop
straight into the analysis routines.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netlist import (
    GROUND,
    CapElement,
    MosElement,
    Netlist,
    Node,
)
from .numbers import parse_spice_number


@dataclass(frozen=True)
class DeviceSize:
    w: float  # m
    l: float  # m

    @property
    def ratio(self) -> float:
        return self.w / self.l


@dataclass(frozen=True)
class CellGeometry:
    """Drawn sizes of the three transistor pairs in a 6T cell."""

    pu: DeviceSize = DeviceSize(10.5e-6, 2.0e-6)
    pd: DeviceSize = DeviceSize(6.0e-6, 2.0e-6)
    pg: DeviceSize = DeviceSize(10.5e-6, 2.5e-6)


# Lumped wiring capacitance per port of a laid-out single cell.  The
# extraction reports only four: the complement bitline and the supply came
# back with zero nodal capacitance.
DEFAULT_CELL_PARASITICS: dict[str, float] = {
    "WL": parse_spice_number("97.083f"),
    "BL": parse_spice_number("12.392f"),
    "Q": parse_spice_number("35.838f"),
    "QBAR": parse_spice_number("35.338f"),
}


def _mos(mid: str, d: Node, g: Node, s: Node, b: Node, polarity: str, size: DeviceSize):
    return MosElement(mid, d, g, s, b, polarity, l=size.l, w=size.w)


def _finish(net: Netlist, roles: dict[str, str]) -> Netlist:
    net.set_roles(roles)
    net.add_trailer()
    return net


def build_6t_cell(
    geom: CellGeometry | None = None,
    parasitics: dict[str, float] | None = None,
    suffix: str = "",
) -> Netlist:
    """Single 6T cell.  `parasitics` maps node names to farads; None picks
    the extracted defaults, an empty dict omits them.  `suffix` decorates
    node and element ids so cells can tile into an array."""
    geom = geom or CellGeometry()
    if parasitics is None:
        parasitics = DEFAULT_CELL_PARASITICS

    gnd = Node(GROUND)
    names = {base: base + suffix for base in ("Q", "QBAR", "BL", "BLB", "WL")}
    names["VDD"] = "VDD"
    n = {base: Node(name) for base, name in names.items()}

    net = Netlist(title="6T SRAM cell" + (f" {suffix}" if suffix else ""))
    for base, name in names.items():
        cap = parasitics.get(base, 0.0)
        if cap > 0.0:
            net.entries.append(CapElement(f"C{name}", n[base], gnd, cap))
    vdd = n["VDD"]
    net.entries.extend(
        [
            _mos(f"MPUL{suffix}", n["Q"], n["QBAR"], vdd, vdd, "PMOS", geom.pu),
            _mos(f"MPUR{suffix}", n["QBAR"], n["Q"], vdd, vdd, "PMOS", geom.pu),
            _mos(f"MPDL{suffix}", n["Q"], n["QBAR"], gnd, gnd, "NMOS", geom.pd),
            _mos(f"MPDR{suffix}", n["QBAR"], n["Q"], gnd, gnd, "NMOS", geom.pd),
            _mos(f"MPGL{suffix}", n["BL"], n["WL"], n["Q"], gnd, "NMOS", geom.pg),
            _mos(f"MPGR{suffix}", n["BLB"], n["WL"], n["QBAR"], gnd, "NMOS", geom.pg),
        ]
    )
    return _finish(net, names)


def build_array(
    rows: int,
    cols: int,
    geom: CellGeometry | None = None,
    parasitics: dict[str, float] | None = None,
) -> Netlist:
    """Tile rows x cols cells sharing word lines per row and bit lines per
    column.  A 1x1 array is exactly the single cell."""
    if rows < 1 or cols < 1:
        raise ValueError("array needs at least one row and one column")
    if rows == 1 and cols == 1:
        return build_6t_cell(geom, parasitics)
    geom = geom or CellGeometry()
    if parasitics is None:
        parasitics = DEFAULT_CELL_PARASITICS

    gnd = Node(GROUND)
    vdd = Node("VDD")
    net = Netlist(title=f"{rows}x{cols} SRAM cell array")
    roles = {"VDD": "VDD"}

    def cap(name: str, node: Node, base: str) -> None:
        value = parasitics.get(base, 0.0)
        if value > 0.0:
            net.entries.append(CapElement(f"C{name}", node, gnd, value))

    wl = []
    for r in range(rows):
        node = Node(f"WL{r}")
        wl.append(node)
        roles[f"WL{r}"] = node.name
        cap(node.name, node, "WL")
    bl, blb = [], []
    for c in range(cols):
        node_t, node_b = Node(f"BL{c}"), Node(f"BLB{c}")
        bl.append(node_t)
        blb.append(node_b)
        roles[f"BL{c}"] = node_t.name
        roles[f"BLB{c}"] = node_b.name
        cap(node_t.name, node_t, "BL")
        cap(node_b.name, node_b, "BLB")

    for r in range(rows):
        for c in range(cols):
            tag = f"_{r}_{c}"
            q, qb = Node(f"Q{tag}"), Node(f"QBAR{tag}")
            cap(q.name, q, "Q")
            cap(qb.name, qb, "QBAR")
            net.entries.extend(
                [
                    _mos(f"MPUL{tag}", q, qb, vdd, vdd, "PMOS", geom.pu),
                    _mos(f"MPUR{tag}", qb, q, vdd, vdd, "PMOS", geom.pu),
                    _mos(f"MPDL{tag}", q, qb, gnd, gnd, "NMOS", geom.pd),
                    _mos(f"MPDR{tag}", qb, q, gnd, gnd, "NMOS", geom.pd),
                    _mos(f"MPGL{tag}", bl[c], wl[r], q, gnd, "NMOS", geom.pg),
                    _mos(f"MPGR{tag}", blb[c], wl[r], qb, gnd, "NMOS", geom.pg),
                ]
            )
    return _finish(net, roles)


def build_precharge(geom: CellGeometry | None = None) -> Netlist:
    """Bitline precharge: two pull-ups plus an equalizer, all gated by PC
    (active low)."""
    geom = geom or CellGeometry()
    vdd, bl, blb, pc = Node("VDD"), Node("BL"), Node("BLB"), Node("PC")
    net = Netlist(title="bitline precharge")
    net.entries.extend(
        [
            _mos("MPCL", bl, pc, vdd, vdd, "PMOS", geom.pu),
            _mos("MPCR", blb, pc, vdd, vdd, "PMOS", geom.pu),
            _mos("MPCEQ", bl, pc, blb, vdd, "PMOS", geom.pu),
        ]
    )
    return _finish(net, {"BL": "BL", "BLB": "BLB", "PC": "PC", "VDD": "VDD"})


def build_sense_amp(geom: CellGeometry | None = None) -> Netlist:
    """Latch sense amplifier on the bitline pair: cross-coupled inverters
    between virtual rails, an SE-gated tail to ground and an SEB-gated
    header to VDD."""
    geom = geom or CellGeometry()
    gnd = Node(GROUND)
    vdd, bl, blb = Node("VDD"), Node("BL"), Node("BLB")
    se, seb = Node("SE"), Node("SEB")
    vp, vn = Node("SAP"), Node("SAN")
    net = Netlist(title="latch sense amplifier")
    net.entries.extend(
        [
            _mos("MSAPL", bl, blb, vp, vdd, "PMOS", geom.pu),
            _mos("MSAPR", blb, bl, vp, vdd, "PMOS", geom.pu),
            _mos("MSANL", bl, blb, vn, gnd, "NMOS", geom.pd),
            _mos("MSANR", blb, bl, vn, gnd, "NMOS", geom.pd),
            _mos("MSAHD", vp, seb, vdd, vdd, "PMOS", geom.pu),
            _mos("MSATL", vn, se, gnd, gnd, "NMOS", geom.pd),
        ]
    )
    return _finish(
        net, {"BL": "BL", "BLB": "BLB", "SE": "SE", "SEB": "SEB", "VDD": "VDD"}
    )


def build_write_driver(geom: CellGeometry | None = None) -> Netlist:
    """Data inverter feeding the bitline through a WE-gated pass device."""
    geom = geom or CellGeometry()
    gnd = Node(GROUND)
    vdd, d, we, bl, dint = Node("VDD"), Node("D"), Node("WE"), Node("BL"), Node("DINT")
    net = Netlist(title="write driver")
    net.entries.extend(
        [
            _mos("MWDP", dint, d, vdd, vdd, "PMOS", geom.pu),
            _mos("MWDN", dint, d, gnd, gnd, "NMOS", geom.pd),
            _mos("MWDG", bl, we, dint, gnd, "NMOS", geom.pg),
        ]
    )
    return _finish(net, {"D": "D", "WE": "WE", "BL": "BL", "VDD": "VDD"})


def build_decoder_2to4(geom: CellGeometry | None = None) -> Netlist:
    """Two-bit row decoder: input inverters, four NAND2 gates, and output
    inverters driving WL0..WL3 (one-hot, WLk high when A1 A0 encode k)."""
    geom = geom or CellGeometry()
    gnd = Node(GROUND)
    vdd = Node("VDD")
    a0, a1 = Node("A0"), Node("A1")
    a0b, a1b = Node("A0B"), Node("A1B")
    net = Netlist(title="2-to-4 row decoder")

    def inverter(tag: str, inp: Node, out: Node) -> None:
        net.entries.append(_mos(f"M{tag}P", out, inp, vdd, vdd, "PMOS", geom.pu))
        net.entries.append(_mos(f"M{tag}N", out, inp, gnd, gnd, "NMOS", geom.pd))

    def nand2(tag: str, x: Node, y: Node, out: Node) -> None:
        mid = Node(f"{tag}M")
        net.entries.append(_mos(f"M{tag}PA", out, x, vdd, vdd, "PMOS", geom.pu))
        net.entries.append(_mos(f"M{tag}PB", out, y, vdd, vdd, "PMOS", geom.pu))
        net.entries.append(_mos(f"M{tag}NA", out, x, mid, gnd, "NMOS", geom.pd))
        net.entries.append(_mos(f"M{tag}NB", mid, y, gnd, gnd, "NMOS", geom.pd))

    inverter("INV0", a0, a0b)
    inverter("INV1", a1, a1b)
    selects = [(a1b, a0b), (a1b, a0), (a1, a0b), (a1, a0)]
    roles = {"A0": "A0", "A1": "A1", "VDD": "VDD"}
    for k, (hi, lo) in enumerate(selects):
        nand_out = Node(f"N{k}")
        wl = Node(f"WL{k}")
        nand2(f"ND{k}", hi, lo, nand_out)
        inverter(f"OUT{k}", nand_out, wl)
        roles[f"WL{k}"] = wl.name
    return _finish(net, roles)


_PERIPHERY_BUILDERS = {
    "sense_amp": build_sense_amp,
    "precharge": build_precharge,
    "write_driver": build_write_driver,
    "decoder_2to4": build_decoder_2to4,
}


def build_periphery(kind: str, geom: CellGeometry | None = None) -> Netlist:
    """Dispatch to one of the peripheral-circuit generators by kind name
    (sense_amp, precharge, write_driver, decoder_2to4)."""
    try:
        builder = _PERIPHERY_BUILDERS[kind]
    except KeyError:
        known = ", ".join(sorted(_PERIPHERY_BUILDERS))
        raise ValueError(f"unknown periphery kind {kind!r} (expected one of {known})")
    return builder(geom)
