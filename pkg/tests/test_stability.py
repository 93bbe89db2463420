import io
import math

import mpmath as mp
import numpy as np
import pytest

from sramlab.config import ConfigError
from sramlab.devices import (
    TechnologyParams,
    derive_tech_params,
    leakage_current,
)
from sramlab.engine import solve_dc
from sramlab.genlib import CellGeometry, DeviceSize, build_6t_cell
from sramlab.netlist import GROUND, Node, SourceElement, parse_netlist, print_netlist, with_elements
from sramlab.stability import (
    DrvInputs,
    NonWritableError,
    TransferCurve,
    VariationModel,
    butterfly,
    butterfly_to_csv,
    drv_bruteforce,
    drv_closed_form,
    drv_ideal,
    drv_inputs_from_cell,
    inscribed_square_snm,
    monte_carlo_snm,
    read_current,
    sigma_vth,
    snm_macro,
    write_margin,
)

mp.mp.dps = 50

TECH = derive_tech_params(TechnologyParams.default())
VT = TECH.v_t


# ---------------------------------------------------------------------
# Inscribed-square geometry


def step_inverter(v_dd):
    """Ideal infinitely steep transfer curve as a 4-point polyline."""
    half = v_dd / 2.0
    return TransferCurve(
        v_in=np.array([0.0, half, half, v_dd]),
        v_out=np.array([v_dd, v_dd, 0.0, 0.0]),
    )


def smooth_inverter(v_dd, steepness, offset, n=201):
    v = np.linspace(0.0, v_dd, n)
    out = v_dd / 2.0 * (1.0 - np.tanh(steepness * (v - v_dd / 2.0 - offset)))
    return TransferCurve(v, out)


def pair_oracle(curve_a, curve_b, n_fine=2000):
    """Largest axis-parallel square between the curves, by brute force.

    Both boundaries decrease, so a square spanning [a, b] horizontally has
    its tightest vertical room at upper(b) - lower(a); maximizing
    min(b - a, room) over all pairs on a dense grid bounds each lobe's
    margin to within one fine-grid spacing.
    """
    fa_x = np.asarray(curve_a.v_in, float)
    fa_y = np.asarray(curve_a.v_out, float)
    order = np.argsort(curve_b.v_out, kind="stable")
    gb_x = np.asarray(curve_b.v_out, float)[order]
    gb_y = np.asarray(curve_b.v_in, float)[order]

    lo = max(fa_x.min(), gb_x.min())
    hi = min(fa_x.max(), gb_x.max())
    xs = np.linspace(lo, hi, n_fine + 1)
    fa = np.interp(xs, fa_x, fa_y)
    gb = np.interp(xs, gb_x, gb_y)

    dx = xs[None, :] - xs[:, None]  # extent of the pair (a=row, b=col)
    upper = np.where(dx > 0, np.minimum(dx, fa[None, :] - gb[:, None]), -np.inf)
    lower = np.where(dx > 0, np.minimum(dx, gb[None, :] - fa[:, None]), -np.inf)
    return max(upper.max(), 0.0), max(lower.max(), 0.0), (hi - lo) / n_fine


def test_ideal_step_inverters_give_half_vdd():
    for v_dd in (1.0, 1.8):
        r = inscribed_square_snm(step_inverter(v_dd), step_inverter(v_dd))
        assert math.isclose(r.snm_high, v_dd / 2.0, rel_tol=1e-12)
        assert math.isclose(r.snm_low, v_dd / 2.0, rel_tol=1e-12)
        assert r.snm == min(r.snm_high, r.snm_low)
        assert r.anchors_high is not None and r.anchors_low is not None


def test_inscribed_square_matches_pair_oracle():
    # Deliberately asymmetric pair so the two lobes differ.
    a = smooth_inverter(1.8, 6.0, 0.12)
    b = smooth_inverter(1.8, 9.0, -0.07)
    r = inscribed_square_snm(a, b)
    oracle_high, oracle_low, spacing = pair_oracle(a, b)
    assert abs(r.snm_high - oracle_high) <= 2.0 * spacing
    assert abs(r.snm_low - oracle_low) <= 2.0 * spacing
    assert r.snm_high != pytest.approx(r.snm_low, rel=1e-3)


def test_swapping_curves_exchanges_lobes():
    a = smooth_inverter(1.8, 6.0, 0.12)
    b = smooth_inverter(1.8, 9.0, -0.07)
    fwd = inscribed_square_snm(a, b)
    rev = inscribed_square_snm(b, a)
    assert math.isclose(fwd.snm_high, rev.snm_low, rel_tol=1e-9)
    assert math.isclose(fwd.snm_low, rev.snm_high, rel_tol=1e-9)


def test_coincident_anti_diagonals_are_not_bistable():
    line = TransferCurve(np.array([0.0, 1.8]), np.array([1.8, 0.0]))
    r = inscribed_square_snm(line, line)
    assert r.snm_high == 0.0 and r.snm_low == 0.0
    assert r.anchors_high is None and r.anchors_low is None


def test_separated_curves_are_not_bistable():
    a = TransferCurve(np.array([0.0, 1.8]), np.array([1.8, 0.0]))
    b = TransferCurve(np.array([0.0, 1.9]), np.array([1.9, 0.0]))
    r = inscribed_square_snm(a, b)
    assert r.snm_high == 0.0 and r.snm_low == 0.0


def test_anchor_points_lie_on_the_gap_extremes():
    a = smooth_inverter(1.8, 6.0, 0.0)
    r = inscribed_square_snm(a, a)
    (pa, pb) = r.anchors_high
    # Anchor pairs share a falling diagonal: V1 + V2 differs, V1 - V2 equal.
    assert math.isclose(pa[0] - pa[1], pb[0] - pb[1], abs_tol=1e-9)
    diag = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    assert math.isclose(diag, r.snm_high * math.sqrt(2.0), rel_tol=1e-9)


# ---------------------------------------------------------------------
# Cell butterfly


@pytest.fixture(scope="module")
def cell():
    return build_6t_cell()


def test_hold_butterfly_symmetric_lobes(cell):
    data = butterfly(cell, mode="hold", v_dd=1.8, grid=0.01)
    assert data.snm > 0.3
    # The cell is mirror symmetric, so the lobes must match exactly.
    assert math.isclose(data.snm_high, data.snm_low, rel_tol=1e-9)
    assert data.mode == "hold" and data.v_dd == 1.8


def test_read_margin_below_hold_margin(cell):
    hold = butterfly(cell, mode="hold", v_dd=1.8, grid=0.01).snm
    read = butterfly(cell, mode="read", v_dd=1.8, grid=0.01).snm
    assert 0.0 < read < hold


def test_butterfly_lobe_curves_are_inverters(cell):
    data = butterfly(cell, mode="hold", v_dd=1.8, grid=0.01)
    out = data.lobe_a.v_out
    assert out[0] > 1.7 and out[-1] < 0.1
    assert all(b <= a + 1e-9 for a, b in zip(out, out[1:]))


def test_butterfly_validation(cell):
    with pytest.raises(ValueError, match="mode"):
        butterfly(cell, mode="write")
    with pytest.raises(ValueError, match="grid"):
        butterfly(cell, grid=0.0)
    bare = parse_netlist("* no roles\nR1 a 0 1k\n.END")
    with pytest.raises(ConfigError):
        butterfly(bare)


def test_butterfly_rejects_bias_id_collision(cell):
    taken = with_elements(
        cell, [SourceElement("VSNMBL", Node("QBAR"), Node(GROUND), "DC", (0.0,))]
    )
    with pytest.raises(ConfigError, match="VSNMBL"):
        butterfly(taken)


def test_butterfly_leaves_cell_untouched(cell):
    before = print_netlist(cell)
    butterfly(cell, mode="hold", v_dd=1.8, grid=0.05)
    assert print_netlist(cell) == before


def test_butterfly_csv(cell):
    data = butterfly(cell, mode="hold", v_dd=1.8, grid=0.05)
    buf = io.StringIO()
    butterfly_to_csv(data, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "V1,Vout_A,Vout_B_mirrored"
    body = [l for l in lines[1:] if not l.startswith("#")]
    tail = [l for l in lines[1:] if l.startswith("#")]
    assert len(body) == data.lobe_a.v_in.size
    assert any(l.startswith("# snm_high=") for l in tail)
    assert any(l.startswith("# snm=") for l in tail)
    assert any("mode=hold" in l for l in tail)


def test_snm_grows_with_supply(cell):
    margins = [
        butterfly(cell, mode="hold", v_dd=v, grid=0.01).snm for v in (0.9, 1.35, 1.8)
    ]
    assert margins[0] < margins[1] < margins[2]


def test_snm_macro_values():
    assert math.isclose(snm_macro(1.8, 0.036, 1.0), 2.0 / 4.0 * 1.764, rel_tol=1e-12)
    assert snm_macro(0.5, 0.5, 1.0) == 0.0
    with pytest.raises(ValueError):
        snm_macro(0.4, 0.5, 1.0)


# ---------------------------------------------------------------------
# Retention voltage


def oracle_drv_general(i_off, n, v_t):
    i1, i2, i3, i4, i5, _ = map(mp.mpf, i_off)
    n1, n2, n3, n4, _, _ = map(mp.mpf, n)
    vt = mp.mpf(v_t)
    arg = (1 / n3 + 1 / n4) * (i4 / (i2 * i3)) * (i5 / n2 + i1 * (1 / n1 + 1 / n2))
    drv0 = vt / (1 / n2 + 1 / n3) * mp.log(arg)
    v1 = vt * (i1 + i5) / i2 * mp.e ** (-drv0 / (n2 * vt))
    v2 = drv0 - vt * (i4 / i3) * mp.e ** (-drv0 / (n3 * vt))
    return drv0 + v1 / 2 + (drv0 - v2) * n2 / 2


def ideal_inputs(v_t=0.026, i=1e-12):
    return DrvInputs((i,) * 6, (1.0,) * 6, v_t)


def test_drv_ideal_value():
    assert drv_ideal(0.026, 1.0) == 2.0 * 0.026 * math.log(2.0)
    assert abs(drv_ideal(0.026) - 0.036) < 1e-4


def test_matched_inputs_take_the_ideal_floor():
    d = ideal_inputs()
    assert drv_closed_form(d) == drv_ideal(0.026, 1.0)
    # The general stack lands elsewhere (near 39 mV), which is exactly why
    # the matched case dispatches to the floor.
    general = drv_closed_form(d, ideal_shortcut=False)
    expected = float(oracle_drv_general(d.i_off, d.n, d.v_t))
    assert math.isclose(general, expected, rel_tol=1e-12)
    assert 0.038 < general < 0.041
    assert general != drv_closed_form(d)


def test_general_expression_against_oracle():
    d = DrvInputs(
        i_off=(2e-12, 1e-12, 2.5e-12, 1.2e-12, 3e-12, 3e-12),
        n=(1.3, 1.25, 1.3, 1.25, 1.4, 1.4),
        v_t=0.0259,
    )
    got = drv_closed_form(d)
    assert math.isclose(got, float(oracle_drv_general(d.i_off, d.n, d.v_t)), rel_tol=1e-12)
    # Not matched, so the shortcut flag must not matter.
    assert got == drv_closed_form(d, ideal_shortcut=False)


def test_drv_inputs_validation():
    with pytest.raises(ValueError):
        DrvInputs((1e-12,) * 5, (1.0,) * 6, 0.026)
    with pytest.raises(ValueError):
        DrvInputs((1e-12,) * 5 + (0.0,), (1.0,) * 6, 0.026)
    with pytest.raises(ValueError):
        DrvInputs((1e-12,) * 6, (1.0,) * 5 + (0.9,), 0.026)
    with pytest.raises(ValueError):
        DrvInputs((1e-12,) * 6, (1.0,) * 6, 0.0)


def test_overflowing_leakage_ratio_rejected():
    d = DrvInputs((1e-308,) * 6, (1.25,) * 6, 0.026)
    with pytest.raises(ValueError, match="log argument"):
        drv_closed_form(d)


def test_drv_inputs_from_cell(cell):
    d = drv_inputs_from_cell(cell)
    assert d.v_t == VT
    assert d.n == (1.25,) * 6
    assert d.i_off[0] == leakage_current(TECH.nmos, 6e-6, 2e-6, VT)  # MPDL
    assert d.i_off[1] == leakage_current(TECH.pmos, 10.5e-6, 2e-6, VT)  # MPUL
    assert d.i_off[4] == leakage_current(TECH.nmos, 10.5e-6, 2.5e-6, VT)  # MPGL


def test_drv_inputs_require_all_six(cell):
    text = "\n".join(
        line for line in print_netlist(cell).splitlines() if not line.startswith("MPGR")
    )
    with pytest.raises(ConfigError, match="MPGR"):
        drv_inputs_from_cell(parse_netlist(text))


def test_bruteforce_drv_sits_on_the_bistability_edge(cell):
    resolution = 4e-3
    drv = drv_bruteforce(cell, resolution=resolution)

    def holds(v_dd):
        grid = max(v_dd / 200.0, 1e-4)
        return butterfly(cell, mode="hold", v_dd=v_dd, grid=grid).snm > 0.0

    assert 0.0 < drv < 0.2
    assert holds(drv)
    assert not holds(drv - 1.5 * resolution)


# ---------------------------------------------------------------------
# Write margin


def probe_write(cell, bl_v, v_dd=1.8, wl=1.8):
    """Independent write probe: bias the cell directly and ask which way
    the latch settled from the held state."""
    ports = {r: cell.role_node(r) for r in ("Q", "QBAR", "BL", "BLB", "WL", "VDD")}
    gnd = Node(GROUND)
    aug = with_elements(
        cell,
        [
            SourceElement("VWVDD", Node(ports["VDD"]), gnd, "DC", (v_dd,)),
            SourceElement("VWWL", Node(ports["WL"]), gnd, "DC", (wl,)),
            SourceElement("VWBL", Node(ports["BL"]), gnd, "DC", (bl_v,)),
            SourceElement("VWBLB", Node(ports["BLB"]), gnd, "DC", (v_dd,)),
        ],
    )
    sol = solve_dc(aug, initial={ports["Q"]: v_dd, ports["QBAR"]: 0.0})
    return sol.voltage(ports["Q"]) < sol.voltage(ports["QBAR"])


def test_write_margin_matches_independent_probe(cell):
    wm = write_margin(cell, resolution=1e-3)
    assert 0.0 < wm < 1.8
    assert probe_write(cell, wm)
    assert not probe_write(cell, wm + 2e-3)


def test_write_margin_single_transition(cell):
    wm = write_margin(cell, resolution=1e-3)
    flips = [probe_write(cell, bl) for bl in np.linspace(0.0, 1.8, 19)]
    k = sum(flips)
    assert flips == [True] * k + [False] * (19 - k)
    # wm must fall between the last flipping and first holding coarse probe.
    assert np.linspace(0.0, 1.8, 19)[k - 1] <= wm <= np.linspace(0.0, 1.8, 19)[k]


def test_wordline_off_is_not_writable(cell):
    with pytest.raises(NonWritableError, match="not writable"):
        write_margin(cell, wl_voltage=0.0)


def test_wider_access_device_eases_writes(cell):
    strong = build_6t_cell(
        CellGeometry(pg=DeviceSize(21e-6, 2.5e-6)), parasitics={}
    )
    assert write_margin(strong, resolution=2e-3) >= write_margin(cell, resolution=2e-3)


# ---------------------------------------------------------------------
# Threshold variation


def test_sigma_vth_values():
    assert sigma_vth(3e-9, 1.0, 1.0) == 3e-9
    assert sigma_vth(3e-9, 2.0, 2.0) == sigma_vth(3e-9, 1.0, 1.0) / 2.0
    # 3 mV*um on a 1 um^2 device is 3 mV.
    assert math.isclose(sigma_vth(3e-9, 1e-6, 1e-6), 3e-3, rel_tol=1e-12)
    # Sixteenfold area quarters the spread, exactly.
    assert sigma_vth(3e-9, 4e-6, 8e-6) == sigma_vth(3e-9, 1e-6, 2e-6) / 4.0
    with pytest.raises(ValueError):
        sigma_vth(3e-9, 0.0, 1e-6)


def test_variation_model_validation():
    with pytest.raises(ValueError):
        VariationModel(a_vth=3e-9, n_samples=0, seed=1)
    with pytest.raises(ValueError):
        VariationModel(a_vth=-1e-9, n_samples=10, seed=1)
    with pytest.raises(ValueError):
        monte_carlo_snm(build_6t_cell(), vm=None)


def test_monte_carlo_is_seed_deterministic(cell):
    vm = VariationModel(a_vth=3e-9, n_samples=6, seed=123)
    a = monte_carlo_snm(cell, vm=vm, grid=0.05)
    b = monte_carlo_snm(cell, vm=vm, grid=0.05)
    assert np.array_equal(a.samples, b.samples)
    assert a.mean == b.mean and a.stddev == b.stddev
    c = monte_carlo_snm(cell, vm=VariationModel(3e-9, 6, 124), grid=0.05)
    assert not np.array_equal(a.samples, c.samples)


def test_monte_carlo_zero_mismatch_is_nominal(cell):
    vm = VariationModel(a_vth=0.0, n_samples=4, seed=9)
    mc = monte_carlo_snm(cell, vm=vm, grid=0.05)
    nominal = butterfly(cell, mode="hold", v_dd=1.8, grid=0.05).snm
    assert np.all(mc.samples == nominal)
    assert mc.stddev == 0.0
    assert mc.failures == 0


def test_monte_carlo_summary_shape(cell):
    vm = VariationModel(a_vth=3e-9, n_samples=8, seed=5)
    mc = monte_carlo_snm(cell, vm=vm, grid=0.05, bins=4)
    counts, edges = mc.histogram
    assert counts.sum() == 8 - mc.failures
    assert edges.size == 5
    assert mc.minimum <= mc.mean
    assert mc.samples.size == 8


def test_read_current_positive_and_grows_with_supply(cell):
    lo = read_current(cell, v_dd=1.2)
    hi = read_current(cell, v_dd=1.8)
    assert 0.0 < lo < hi
