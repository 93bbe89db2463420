"""Hot-path MOS stamping for the nodal solver.

Two interchangeable backends evaluate the compact model over a whole device
array and scatter drain currents plus Jacobian conductances in place: a
numba @njit loop and a vectorized pure-numpy fallback.  Selection order:
an explicit set_backend() call, else the SRAMLAB_KERNEL environment
variable ("numba" or "numpy"), else numba whenever it imports.

The math here mirrors devices._core exactly; the test suite holds the two
paths together.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .devices import BLEND_SPAN, DeviceParams

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - only hit without numba installed
    HAVE_NUMBA = False

# Column layout of the per-device parameter matrix.
COL_SIGN = 0  # +1 NMOS, -1 PMOS
COL_BETA = 1  # W/L
COL_VTH0 = 2
COL_GAMMA = 3
COL_TWO_PHI = 4  # -2*phi_f
COL_SQRT0 = 5  # sqrt(|-2*phi_f|)
COL_DIBL = 6  # exp(-alpha*L)
COL_KP = 7
COL_LAM = 8
COL_NVT = 9  # n*v_T
COL_I0 = 10
COL_WLIM = 11  # blend span above threshold, BLEND_SPAN*n*v_T
N_PAR = 12

_forced_backend: str | None = None


def pack_device(dev: DeviceParams, polarity: str, w: float, l: float, v_t: float) -> np.ndarray:
    """One parameter-matrix row for a device instance."""
    if w <= 0 or l <= 0:
        raise ValueError("device geometry must be positive")
    row = np.empty(N_PAR)
    row[COL_SIGN] = -1.0 if polarity.upper() == "PMOS" else 1.0
    row[COL_BETA] = w / l
    row[COL_VTH0] = dev.vth0
    row[COL_GAMMA] = dev.gamma
    row[COL_TWO_PHI] = -2.0 * dev.phi_f
    row[COL_SQRT0] = math.sqrt(abs(2.0 * dev.phi_f))
    row[COL_DIBL] = math.exp(-dev.alpha * l)
    row[COL_KP] = dev.kp
    row[COL_LAM] = dev.lam
    row[COL_NVT] = dev.n * v_t
    row[COL_I0] = dev.i0
    row[COL_WLIM] = BLEND_SPAN * dev.n * v_t
    return row


def get_backend() -> str:
    """Name of the backend mos_stamp() will dispatch to right now."""
    if _forced_backend is not None:
        return _forced_backend
    env = os.environ.get("SRAMLAB_KERNEL", "").strip().lower()
    if env == "numpy":
        return "numpy"
    return "numba" if HAVE_NUMBA else "numpy"


def set_backend(name: str | None) -> None:
    """Pin the backend in-process; None restores environment-driven choice."""
    global _forced_backend
    if name is None:
        _forced_backend = None
        return
    name = name.strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _forced_backend = name


def _stamp_loop(x_ext, idx, par, vt, jac, res):
    n_dev = idx.shape[0]
    for k in range(n_dev):
        d = idx[k, 0]
        g = idx[k, 1]
        s_n = idx[k, 2]
        b = idx[k, 3]
        sgn = par[k, COL_SIGN]
        vgs = sgn * (x_ext[g] - x_ext[s_n])
        vds = sgn * (x_ext[d] - x_ext[s_n])
        vsb = sgn * (x_ext[s_n] - x_ext[b])
        flip = vds < 0.0
        if flip:
            vgs = vgs - vds
            vsb = vsb + vds
            vds = -vds

        beta = par[k, COL_BETA]
        dibl = par[k, COL_DIBL]
        nvt = par[k, COL_NVT]
        wlim = par[k, COL_WLIM]
        i0 = par[k, COL_I0]
        kp = par[k, COL_KP]
        lam = par[k, COL_LAM]

        arg = par[k, COL_TWO_PHI] + vsb
        absarg = abs(arg)
        sq = math.sqrt(absarg)
        if absarg < 1e-12:
            dsq = 0.0
        else:
            dsq = math.copysign(0.5 / sq, arg)
        vth = par[k, COL_VTH0] + par[k, COL_GAMMA] * (sq - par[k, COL_SQRT0]) - vds * dibl
        dvthb = par[k, COL_GAMMA] * dsq
        vov = vgs - vth

        if vds < 1e-12:
            im = 0.0
            gm = 0.0
            gmb = 0.0
            if vov <= 0.0:
                gds = beta * i0 * math.exp(vov / nvt) / vt
            elif vov >= wlim:
                gds = kp * beta * vov
            else:
                frac = vov / wlim
                gds = (beta * i0 / vt) ** (1.0 - frac) * (kp * beta * wlim) ** frac
        else:
            emv = math.exp(-vds / vt)
            fds = 1.0 - emv
            if vov <= 0.0:
                im = beta * i0 * math.exp(vov / nvt) * fds
                gm = im / nvt
                gds = im * (dibl / nvt + emv / (vt * fds))
                gmb = -im * dvthb / nvt
            else:
                lam_term = 1.0 + lam * vds
                if vds < vov:
                    p = vov * vds - 0.5 * vds * vds
                    i_sq = kp * beta * p * lam_term
                    dg_sq = vds / p
                    dd_sq = (vov - vds + vds * dibl) / p + lam / lam_term
                    db_sq = -vds * dvthb / p
                else:
                    i_sq = 0.5 * kp * beta * vov * vov * lam_term
                    dg_sq = 2.0 / vov
                    dd_sq = 2.0 * dibl / vov + lam / lam_term
                    db_sq = -2.0 * dvthb / vov
                if vov >= wlim:
                    im = i_sq
                    gm = i_sq * dg_sq
                    gds = i_sq * dd_sq
                    gmb = i_sq * db_sq
                else:
                    # Log-linear chord between the fixed-overdrive anchors.
                    i_lo = beta * i0 * fds
                    dd_lo = emv / (vt * fds)
                    if vds < wlim:
                        p_hi = wlim * vds - 0.5 * vds * vds
                        i_hi = kp * beta * p_hi * lam_term
                        dd_hi = (wlim - vds) / p_hi + lam / lam_term
                    else:
                        i_hi = 0.5 * kp * beta * wlim * wlim * lam_term
                        dd_hi = lam / lam_term
                    frac = vov / wlim
                    span = math.log(i_hi / i_lo)
                    im = math.exp((1.0 - frac) * math.log(i_lo) + frac * math.log(i_hi))
                    gm = im * span / wlim
                    gds = im * ((1.0 - frac) * dd_lo + frac * dd_hi + span * dibl / wlim)
                    gmb = -im * span * dvthb / wlim

        if flip:
            t_gm = -gm
            t_gds = gm + gds - gmb
            t_gmb = -gmb
            gm = t_gm
            gds = t_gds
            gmb = t_gmb
            im = -im

        i_term = sgn * im
        dd = gds
        dgv = gm
        dsv = -gm - gds + gmb
        dbv = -gmb

        res[d] += i_term
        res[s_n] -= i_term
        jac[d, d] += dd
        jac[d, g] += dgv
        jac[d, s_n] += dsv
        jac[d, b] += dbv
        jac[s_n, d] -= dd
        jac[s_n, g] -= dgv
        jac[s_n, s_n] -= dsv
        jac[s_n, b] -= dbv


if HAVE_NUMBA:
    _stamp_numba = njit(cache=True)(_stamp_loop)
else:  # pragma: no cover
    _stamp_numba = None


def _stamp_numpy(x_ext, idx, par, vt, jac, res):
    d = idx[:, 0]
    g = idx[:, 1]
    s_n = idx[:, 2]
    b = idx[:, 3]
    sgn = par[:, COL_SIGN]
    vgs = sgn * (x_ext[g] - x_ext[s_n])
    vds = sgn * (x_ext[d] - x_ext[s_n])
    vsb = sgn * (x_ext[s_n] - x_ext[b])
    flip = vds < 0.0
    vgs = np.where(flip, vgs - vds, vgs)
    vsb = np.where(flip, vsb + vds, vsb)
    vds = np.abs(vds)

    beta = par[:, COL_BETA]
    dibl = par[:, COL_DIBL]
    nvt = par[:, COL_NVT]
    wlim = par[:, COL_WLIM]
    i0 = par[:, COL_I0]
    kp = par[:, COL_KP]
    lam = par[:, COL_LAM]

    # Unused branch lanes are computed on clamped inputs and masked off, so
    # warnings are suppressed wholesale.
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        arg = par[:, COL_TWO_PHI] + vsb
        absarg = np.abs(arg)
        sq = np.sqrt(absarg)
        dsq = np.where(absarg < 1e-12, 0.0, np.copysign(0.5, arg) / np.where(sq > 0.0, sq, 1.0))
        vth = par[:, COL_VTH0] + par[:, COL_GAMMA] * (sq - par[:, COL_SQRT0]) - vds * dibl
        dvthb = par[:, COL_GAMMA] * dsq
        vov = vgs - vth

        tiny_ds = vds < 1e-12
        emv = np.exp(-vds / vt)
        fds = 1.0 - emv
        fds_safe = np.where(fds > 0.0, fds, 1.0)

        i_sub = beta * i0 * np.exp(vov / nvt) * fds
        dg_sub = 1.0 / nvt
        dd_sub = dibl / nvt + emv / (vt * fds_safe)
        db_sub = -dvthb / nvt

        vov_pos = np.maximum(vov, 1e-300)
        lam_term = 1.0 + lam * vds
        tri = vds < vov
        p = vov * vds - 0.5 * vds * vds
        p_safe = np.where(p > 0.0, p, 1.0)
        i_sq = np.where(
            tri, kp * beta * p * lam_term, 0.5 * kp * beta * vov_pos * vov_pos * lam_term
        )
        dg_sq = np.where(tri, vds / p_safe, 2.0 / vov_pos)
        dd_sq = np.where(tri, (vov - vds + vds * dibl) / p_safe, 2.0 * dibl / vov_pos)
        dd_sq = dd_sq + lam / lam_term
        db_sq = np.where(tri, -vds * dvthb / p_safe, -2.0 * dvthb / vov_pos)

        sub = vov <= 0.0
        sq_only = vov >= wlim
        frac = np.clip(vov / wlim, 0.0, 1.0)

        # Blend lanes: log-linear chord between the fixed-overdrive anchors.
        i_lo = beta * i0 * fds
        i_lo_safe = np.where(i_lo > 0.0, i_lo, 1.0)
        dd_lo = emv / (vt * fds_safe)
        tri_hi = vds < wlim
        p_hi = wlim * vds - 0.5 * vds * vds
        p_hi_safe = np.where(p_hi > 0.0, p_hi, 1.0)
        i_hi = np.where(
            tri_hi, kp * beta * p_hi * lam_term, 0.5 * kp * beta * wlim * wlim * lam_term
        )
        i_hi_safe = np.where(i_hi > 0.0, i_hi, 1.0)
        dd_hi = np.where(tri_hi, (wlim - vds) / p_hi_safe, 0.0) + lam / lam_term
        span = np.log(i_hi_safe / i_lo_safe)
        i_blend = np.exp((1.0 - frac) * np.log(i_lo_safe) + frac * np.log(i_hi_safe))

        im = np.where(sub, i_sub, np.where(sq_only, i_sq, i_blend))
        gm = np.where(
            sub,
            i_sub * dg_sub,
            np.where(sq_only, i_sq * dg_sq, i_blend * span / wlim),
        )
        gds = np.where(
            sub,
            i_sub * dd_sub,
            np.where(
                sq_only,
                i_sq * dd_sq,
                i_blend * ((1.0 - frac) * dd_lo + frac * dd_hi + span * dibl / wlim),
            ),
        )
        gmb = np.where(
            sub,
            i_sub * db_sub,
            np.where(sq_only, i_sq * db_sq, -i_blend * span * dvthb / wlim),
        )

        g0_sub = beta * i0 * np.exp(vov / nvt) / vt
        g0_sq = kp * beta * vov_pos
        g0_blend = (beta * i0 / vt) ** (1.0 - frac) * (kp * beta * wlim) ** frac
        g0 = np.where(sub, g0_sub, np.where(sq_only, g0_sq, g0_blend))
        im = np.where(tiny_ds, 0.0, im)
        gm = np.where(tiny_ds, 0.0, gm)
        gds = np.where(tiny_ds, g0, gds)
        gmb = np.where(tiny_ds, 0.0, gmb)

    im2 = np.where(flip, -im, im)
    gm2 = np.where(flip, -gm, gm)
    gds2 = np.where(flip, gm + gds - gmb, gds)
    gmb2 = np.where(flip, -gmb, gmb)

    i_term = sgn * im2
    dd = gds2
    dgv = gm2
    dsv = -gm2 - gds2 + gmb2
    dbv = -gmb2

    np.add.at(res, d, i_term)
    np.add.at(res, s_n, -i_term)
    np.add.at(jac, (d, d), dd)
    np.add.at(jac, (d, g), dgv)
    np.add.at(jac, (d, s_n), dsv)
    np.add.at(jac, (d, b), dbv)
    np.add.at(jac, (s_n, d), -dd)
    np.add.at(jac, (s_n, g), -dgv)
    np.add.at(jac, (s_n, s_n), -dsv)
    np.add.at(jac, (s_n, b), -dbv)


def mos_stamp(x_ext, idx, par, vt, jac, res) -> None:
    """Accumulate MOS drain currents and conductances in place.

    x_ext holds the solver unknowns plus one trailing slot pinned at 0.0 for
    ground; idx rows index (drain, gate, source, bulk) into it.  jac and res
    carry the same trailing slot, so stamps landing on ground are simply
    ignored by the caller.
    """
    if idx.shape[0] == 0:
        return
    if get_backend() == "numba":
        _stamp_numba(x_ext, idx, par, vt, jac, res)
    else:
        _stamp_numpy(x_ext, idx, par, vt, jac, res)
