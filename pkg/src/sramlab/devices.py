"""Compact MOSFET model: body-effect/DIBL threshold, subthreshold conduction,
and a level-1 square law, blended C0-continuously between the two regimes.

Scalar functions here are the readable reference path; `kernels` carries the
vectorized twin used inside the solver loop and is cross-checked against this
module by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

K_BOLTZMANN = 1.380649e-23  # J/K
Q_ELECTRON = 1.602176634e-19  # C

# Width of the blending band above threshold, in units of n*v_T.
BLEND_SPAN = 3.0

# Working defaults for a generic long-channel process.  alpha is sized so
# that alpha*L = 10 at the 2 um minimum drawn length used by the bundled
# cell geometry, making drain-induced barrier lowering a small correction.
DEFAULT_VTH0 = 0.4  # V
DEFAULT_KP_NMOS = 100e-6  # A/V^2
DEFAULT_KP_PMOS = 40e-6  # A/V^2
DEFAULT_GAMMA = 0.3  # sqrt(V)
DEFAULT_PHI_F_NMOS = -0.35  # V
DEFAULT_PHI_F_PMOS = 0.35  # V
DEFAULT_LAMBDA = 0.05  # 1/V
DEFAULT_N = 1.25
DEFAULT_I0 = 1e-12  # A
DEFAULT_ALPHA = 10.0 / 2e-6  # 1/m
DEFAULT_A_VTH = 3e-9  # V*m (3 mV*um) mismatch coefficient
DEFAULT_T_OX = 20e-9  # m
DEFAULT_EPS_OX = 3.5e-11  # F/m
DEFAULT_EPS_SI = 1.04e-10  # F/m
DEFAULT_TEMPERATURE = 300.15  # K


def thermal_voltage(temperature: float) -> float:
    """kT/q in volts."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return K_BOLTZMANN * temperature / Q_ELECTRON


@dataclass(frozen=True)
class ThermalContext:
    v_t: float

    @classmethod
    def from_temperature(cls, temperature: float) -> "ThermalContext":
        return cls(v_t=thermal_voltage(temperature))


@dataclass
class DeviceParams:
    """Per-polarity model card.  All voltages are magnitudes in the device's
    own frame; the engine reflects PMOS terminals before evaluating.

    Fields left as None are filled by derive_tech_params() when the physical
    inputs (oxide, doping, charge terms) allow it; explicit values always win.
    """

    vth0: float | None = DEFAULT_VTH0
    kp: float = DEFAULT_KP_NMOS
    gamma: float | None = DEFAULT_GAMMA
    phi_f: float = DEFAULT_PHI_F_NMOS
    lam: float = DEFAULT_LAMBDA
    n: float = DEFAULT_N
    i0: float = DEFAULT_I0
    alpha: float = DEFAULT_ALPHA
    a_vth: float = DEFAULT_A_VTH
    t_ox: float = DEFAULT_T_OX
    eps_ox: float = DEFAULT_EPS_OX
    eps_si: float = DEFAULT_EPS_SI
    n_a: float | None = None  # 1/m^3
    c_ox: float | None = None  # F/m^2
    phi_ms: float | None = None
    q_b0: float | None = None  # C/m^2
    q_ox: float | None = None
    q_i: float | None = None


@dataclass
class TechnologyParams:
    nmos: DeviceParams
    pmos: DeviceParams
    temperature: float = DEFAULT_TEMPERATURE

    @classmethod
    def default(cls) -> "TechnologyParams":
        return cls(
            nmos=DeviceParams(),
            pmos=DeviceParams(kp=DEFAULT_KP_PMOS, phi_f=DEFAULT_PHI_F_PMOS),
        )

    @property
    def v_t(self) -> float:
        return thermal_voltage(self.temperature)

    def device(self, polarity: str) -> DeviceParams:
        polarity = polarity.upper()
        if polarity == "NMOS":
            return self.nmos
        if polarity == "PMOS":
            return self.pmos
        raise ValueError(f"unknown polarity {polarity!r}")


@dataclass(frozen=True)
class BiasPoint:
    v_gs: float
    v_ds: float
    v_sb: float = 0.0
    w: float = 10.5e-6
    l: float = 2e-6


@dataclass(frozen=True)
class MosOperatingPoint:
    """Drain current and its partials wrt (v_gs, v_ds, v_sb).

    g_mb is d(i_d)/d(v_sb), i.e. negative for an NMOS whose source rides
    above bulk; the node-frame stamp code derives all four terminal
    derivatives from these three.
    """

    i_d: float
    g_m: float
    g_ds: float
    g_mb: float


def _derive_device(dev: DeviceParams) -> DeviceParams:
    out = replace(dev)
    if out.c_ox is None:
        if out.t_ox <= 0:
            raise ValueError("t_ox must be positive")
        out.c_ox = out.eps_ox / out.t_ox
    if out.gamma is None:
        if out.n_a is None:
            raise ValueError("gamma derivation needs n_a")
        out.gamma = math.sqrt(2.0 * Q_ELECTRON * out.eps_si * out.n_a) / out.c_ox
    if out.vth0 is None:
        charges = (out.q_b0, out.q_ox, out.q_i)
        if out.phi_ms is None or any(q is None for q in charges):
            raise ValueError("vth0 derivation needs phi_ms and the charge terms")
        out.vth0 = out.phi_ms - 2.0 * out.phi_f - sum(charges) / out.c_ox
    return out


def derive_tech_params(params: TechnologyParams) -> TechnologyParams:
    """Fill C_ox, gamma, and V_th0 from physical inputs where absent."""
    return TechnologyParams(
        nmos=_derive_device(params.nmos),
        pmos=_derive_device(params.pmos),
        temperature=params.temperature,
    )


def threshold_voltage(dev: DeviceParams, bias: BiasPoint) -> float:
    """Threshold with body effect and exponential channel-length DIBL."""
    if bias.l <= 0:
        raise ValueError("channel length must be positive")
    body = math.sqrt(abs(-2.0 * dev.phi_f + bias.v_sb)) - math.sqrt(abs(-2.0 * dev.phi_f))
    return dev.vth0 + dev.gamma * body - bias.v_ds * math.exp(-dev.alpha * bias.l)


def subthreshold_current(
    dev: DeviceParams, bias: BiasPoint, thermal: ThermalContext | None = None
) -> float:
    """Weak-inversion drain current for V_DS >= 0."""
    if bias.w <= 0 or bias.l <= 0:
        raise ValueError("device geometry must be positive")
    if bias.v_ds < 0:
        raise ValueError("subthreshold form needs V_DS >= 0")
    v_t = thermal.v_t if thermal is not None else thermal_voltage(DEFAULT_TEMPERATURE)
    beta = bias.w / bias.l
    vth = threshold_voltage(dev, bias)
    i_off = beta * dev.i0 * math.exp(-vth / (dev.n * v_t))
    return i_off * math.exp(bias.v_gs / (dev.n * v_t)) * (1.0 - math.exp(-bias.v_ds / v_t))


def leakage_current(dev: DeviceParams, w: float, l: float, v_t: float) -> float:
    """I_off at V_GS = 0 and zero back/drain bias: (W/L) I_0 exp(-Vth0/(n vT))."""
    if w <= 0 or l <= 0:
        raise ValueError("device geometry must be positive")
    return (w / l) * dev.i0 * math.exp(-dev.vth0 / (dev.n * v_t))


# Core evaluated in the forward NMOS frame (v_ds >= 0).  Returns drain
# current plus d(i)/d(v_gs), d(i)/d(v_ds), d(i)/d(v_sb).
def _core(dev: DeviceParams, v_gs: float, v_ds: float, v_sb: float, w: float, l: float, v_t: float):
    beta = w / l
    dibl = math.exp(-dev.alpha * l)
    arg = -2.0 * dev.phi_f + v_sb
    sq = math.sqrt(abs(arg))
    sq0 = math.sqrt(abs(-2.0 * dev.phi_f))
    dsq = 0.0 if abs(arg) < 1e-12 else math.copysign(0.5 / sq, arg)
    vth = dev.vth0 + dev.gamma * (sq - sq0) - v_ds * dibl
    dvth_dvsb = dev.gamma * dsq
    vov = v_gs - vth  # d/dvgs = 1, d/dvds = dibl, d/dvsb = -dvth_dvsb
    nvt = dev.n * v_t
    wlim = BLEND_SPAN * nvt

    if v_ds < 1e-12:
        if vov <= 0.0:
            g0 = beta * dev.i0 * math.exp(vov / nvt) / v_t
        elif vov >= wlim:
            g0 = dev.kp * beta * vov
        else:
            frac = vov / wlim
            g0 = (beta * dev.i0 / v_t) ** (1.0 - frac) * (dev.kp * beta * wlim) ** frac
        return 0.0, 0.0, g0, 0.0

    emv = math.exp(-v_ds / v_t)
    f_ds = 1.0 - emv

    if vov <= 0.0:
        i = beta * dev.i0 * math.exp(vov / nvt) * f_ds
        return i, i / nvt, i * (dibl / nvt + emv / (v_t * f_ds)), -i * dvth_dvsb / nvt

    lam_term = 1.0 + dev.lam * v_ds
    if v_ds < vov:  # triode; (1 + lam*v_ds) kept for continuity at the seam
        p = vov * v_ds - 0.5 * v_ds * v_ds
        i_sq = dev.kp * beta * p * lam_term
        dln_sq_g = v_ds / p
        dln_sq_d = (vov - v_ds + v_ds * dibl) / p + dev.lam / lam_term
        dln_sq_b = -v_ds * dvth_dvsb / p
    else:
        i_sq = 0.5 * dev.kp * beta * vov * vov * lam_term
        dln_sq_g = 2.0 / vov
        dln_sq_d = 2.0 * dibl / vov + dev.lam / lam_term
        dln_sq_b = -2.0 * dvth_dvsb / vov

    if vov >= wlim:
        return i_sq, i_sq * dln_sq_g, i_sq * dln_sq_d, i_sq * dln_sq_b

    # Transition window: log current runs linearly in overdrive from the
    # weak-inversion value at vov = 0 to the square-law value at vov = wlim,
    # both taken at this v_ds.  The anchors carry no vth dependence (their
    # overdrives are pinned), so threshold shifts act only through frac.
    i_lo = beta * dev.i0 * f_ds
    dln_lo_d = emv / (v_t * f_ds)
    if v_ds < wlim:  # upper anchor still in triode
        p_hi = wlim * v_ds - 0.5 * v_ds * v_ds
        i_hi = dev.kp * beta * p_hi * lam_term
        dln_hi_d = (wlim - v_ds) / p_hi + dev.lam / lam_term
    else:
        i_hi = 0.5 * dev.kp * beta * wlim * wlim * lam_term
        dln_hi_d = dev.lam / lam_term
    frac = vov / wlim
    span = math.log(i_hi / i_lo)
    i = math.exp((1.0 - frac) * math.log(i_lo) + frac * math.log(i_hi))
    g_m = i * span / wlim
    g_ds = i * ((1.0 - frac) * dln_lo_d + frac * dln_hi_d + span * dibl / wlim)
    g_mb = -i * span * dvth_dvsb / wlim
    return i, g_m, g_ds, g_mb


def mos_operating_point(
    dev: DeviceParams,
    bias: BiasPoint,
    thermal: ThermalContext | None = None,
    polarity: str = "NMOS",
) -> MosOperatingPoint:
    """Drain current and small-signal conductances at a bias point.

    PMOS is handled by sign reflection: pass terminal-frame voltages (which
    are negative for a conducting PMOS) and magnitude parameters; the
    returned current carries the PMOS sign.
    """
    if bias.w <= 0 or bias.l <= 0:
        raise ValueError("device geometry must be positive")
    v_t = thermal.v_t if thermal is not None else thermal_voltage(DEFAULT_TEMPERATURE)
    sign = -1.0 if polarity.upper() == "PMOS" else 1.0
    v_gs = sign * bias.v_gs
    v_ds = sign * bias.v_ds
    v_sb = sign * bias.v_sb
    flipped = v_ds < 0.0
    if flipped:  # conduction with drain/source roles exchanged
        v_gs, v_ds, v_sb = v_gs - v_ds, -v_ds, v_sb + v_ds
    i, g_m, g_ds, g_mb = _core(dev, v_gs, v_ds, v_sb, bias.w, bias.l, v_t)
    if flipped:
        # Map partials back to the unswapped frame (current negates, the
        # swapped-frame terminal differences mix the conductances).
        g_m, g_ds, g_mb, i = -g_m, g_m + g_ds - g_mb, -g_mb, -i
    return MosOperatingPoint(i_d=sign * i, g_m=g_m, g_ds=g_ds, g_mb=g_mb)


def mos_current(
    dev: DeviceParams,
    bias: BiasPoint,
    thermal: ThermalContext | None = None,
    polarity: str = "NMOS",
) -> float:
    return mos_operating_point(dev, bias, thermal, polarity).i_d
