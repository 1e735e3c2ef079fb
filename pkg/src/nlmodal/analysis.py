"""Closed-form predictions and post-processing of modal test campaigns.

Critical self-excitation levels and responding-mode maps for velocity
feedback, the phase-lag bias formulas for imperfect excitation, arc-length
interpolation of backbone data, and frequency-response synthesis from the
single nonlinear modal oscillator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator


class AnalysisError(Exception):
    pass


# ---------------------------------------------------------------------------
# critical self-excitation levels (linear regime)
# ---------------------------------------------------------------------------

@dataclass
class CriticalLevelTable:
    """Per-mode self-excitation thresholds of a velocity-feedback scheme."""

    levels: np.ndarray  # nu_crit per mode, inf where the projection vanishes
    projections: np.ndarray  # phi_i^T W phi_i
    scheme: str
    exciter_dof: int

    def ratio(self, mode_a: int, mode_b: int) -> float:
        return float(self.levels[mode_a - 1] / self.levels[mode_b - 1])


def critical_levels(basis, weighting) -> CriticalLevelTable:
    """nu_crit,i = 2 zeta_i omega_i / (phi_i^T W phi_i) where positive.

    Modes whose weighting projection vanishes (or is negative, i.e. the
    feedback damps them) carry an infinite critical level.
    """
    W = weighting.matrix
    n_modes = basis.n_modes
    proj = np.empty(n_modes)
    lev = np.empty(n_modes)
    for i in range(n_modes):
        phi = basis.shapes[:, i]
        proj[i] = phi @ (W @ phi)
        denom = proj[i]
        if denom > 1e-12 * max(abs(proj).max(), 1e-300):
            lev[i] = 2.0 * basis.damping_ratios[i] * basis.frequencies[i] / denom
        else:
            lev[i] = np.inf
    return CriticalLevelTable(
        levels=lev,
        projections=proj,
        scheme=weighting.scheme,
        exciter_dof=weighting.exciter_dof,
    )


def drive_point_mobility_peak(basis, mode_index: int, dof: int) -> float:
    """Resonant magnitude of the single-mode drive-point mobility FRF.

    |H_v(omega_i)| restricted to mode i equals phi_ik^2 / (2 zeta_i omega_i),
    the reciprocal of the sfb critical level.
    """
    phi_k = basis.shapes[dof, mode_index - 1]
    return float(
        phi_k**2
        / (2.0 * basis.damping_ratios[mode_index - 1] * basis.frequencies[mode_index - 1])
    )


def responding_mode_map(
    basis, exciter_dofs, n_dof: int, uniform_damping: bool = True
) -> list:
    """Which mode responds to sfb at each candidate exciter DOF.

    Per position the mode with the smallest critical level wins; a tie
    within 1e-9 relative reports both (lower index listed first).
    """
    from .rig import build_weighting

    out = []
    zetas = (
        np.full(basis.n_modes, basis.damping_ratios[0])
        if uniform_damping
        else basis.damping_ratios
    )
    for dof in exciter_dofs:
        W = build_weighting("sfb", int(dof), n_dof=n_dof)
        proj = np.array([basis.shapes[dof, i] ** 2 for i in range(basis.n_modes)])
        with np.errstate(divide="ignore"):
            lev = np.where(proj > 0, 2.0 * zetas * basis.frequencies / proj, np.inf)
        best = int(np.argmin(lev))
        ties = [
            i + 1
            for i in range(basis.n_modes)
            if i != best and lev[i] <= lev[best] * (1 + 1e-9)
        ]
        out.append(
            {
                "dof": int(dof),
                "mode": best + 1,
                "ties": ties,
                "critical_levels": lev,
            }
        )
    return out


# ---------------------------------------------------------------------------
# phase-lag bias of the extracted modal properties (linear analysis)
# ---------------------------------------------------------------------------

def phase_lag_bias(theta: float, omega0: float, zeta0: float) -> tuple:
    """(omega_err, zeta_err) extracted at a force/velocity phase lag theta.

    omega_err = omega0 (sqrt(zeta0^2 tan^2 theta + 1) - zeta0 tan theta) and
    zeta_err = zeta0 / (same factor); the product omega_err * zeta_err is
    invariant. Singular at theta = +-pi/2.
    """
    if abs(abs(theta) - np.pi / 2) < 1e-12:
        raise AnalysisError("phase lag of +-pi/2 is singular in the bias formulas")
    t = np.tan(theta)
    factor = np.sqrt(zeta0**2 * t**2 + 1.0) - zeta0 * t
    return omega0 * factor, zeta0 / factor


def phase_of_linear_frf(omega_drive: float, omega0: float, zeta0: float) -> float:
    """Phase lag of force behind drive-point velocity at frequency Omega."""
    return np.arctan(
        (omega0**2 - omega_drive**2) / (2.0 * zeta0 * omega0 * omega_drive)
    )


# ---------------------------------------------------------------------------
# backbone interpolation over arc length
# ---------------------------------------------------------------------------

class BackboneInterpolant:
    """Monotone cubic interpolation of backbone data over arc length.

    The arc length accumulates Euclidean distance in range-normalized
    (a, omega, zeta) space, which keeps the parametrization well behaved
    through turning points and through the near-vertical damping rise at
    slip onset. Shapes, when provided, interpolate componentwise.
    """

    def __init__(self, amplitudes, omegas, zetas, shapes=None, tip_amplitudes=None):
        a = np.asarray(amplitudes, dtype=float)
        w = np.asarray(omegas, dtype=float)
        z = np.asarray(zetas, dtype=float)
        keep = np.ones(len(a), dtype=bool)
        keep[1:] = (np.abs(np.diff(a)) > 1e-14 * np.abs(a[1:])) | (
            np.abs(np.diff(w)) > 1e-14 * np.abs(w[1:])
        )
        if not keep.all():
            import warnings

            warnings.warn("duplicate consecutive backbone points dropped")
        a, w, z = a[keep], w[keep], z[keep]
        if len(a) < 4:
            raise AnalysisError("need at least 4 distinct backbone points")
        self.a, self.w, self.z = a, w, z

        def span(v):
            s = np.max(v) - np.min(v)
            return s if s > 0 else max(abs(np.max(v)), 1.0)

        da, dw, dz = np.diff(a) / span(a), np.diff(w) / span(w), np.diff(z) / span(z)
        s = np.concatenate([[0.0], np.cumsum(np.sqrt(da**2 + dw**2 + dz**2))])
        self.s = s
        self._a = PchipInterpolator(s, a)
        self._w = PchipInterpolator(s, w)
        self._z = PchipInterpolator(s, z)
        self._s_of_a = PchipInterpolator(a, s) if np.all(np.diff(a) > 0) else None
        self._shape = None
        if shapes is not None:
            sh = np.asarray(shapes, dtype=complex)[keep]
            # pin each row's global phase to its largest component so
            # componentwise interpolation does not cancel magnitudes
            ref_col = int(np.argmax(np.abs(sh[0])))
            rot = np.exp(-1j * np.angle(sh[:, ref_col]))
            sh = sh * rot[:, None]
            self._shape_re = PchipInterpolator(s, sh.real, axis=0)
            self._shape_im = PchipInterpolator(s, sh.imag, axis=0)
            self._shape = True
        self._tip = None
        if tip_amplitudes is not None:
            tip = np.asarray(tip_amplitudes, dtype=float)[keep]
            self._tip = PchipInterpolator(s, tip)
            self._s_of_tip = (
                PchipInterpolator(tip, s) if np.all(np.diff(tip) > 0) else None
            )

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    def at_s(self, s):
        out = {
            "a": self._a(s),
            "omega": self._w(s),
            "zeta": self._z(s),
        }
        if self._shape:
            out["shape"] = self._shape_re(s) + 1j * self._shape_im(s)
        if self._tip is not None:
            out["tip_amplitude"] = self._tip(s)
        return out

    def at_amplitude(self, a):
        if self._s_of_a is None:
            raise AnalysisError("amplitude is not monotone; query by arc length")
        return self.at_s(self._s_of_a(np.clip(a, self.a[0], self.a[-1])))

    def at_tip_amplitude(self, tip):
        if self._tip is None or self._s_of_tip is None:
            raise AnalysisError("tip amplitude parametrization unavailable")
        lo, hi = self._tip(0.0), self._tip(self.s_max)
        return self.at_s(self._s_of_tip(np.clip(tip, lo, hi)))

    def in_range_tip(self, tip) -> bool:
        if self._tip is None:
            return False
        return bool(self._tip(0.0) <= tip <= self._tip(self.s_max))


def interpolate_backbone(curve) -> BackboneInterpolant:
    """Arc-length interpolant of a :class:`~nlmodal.epmc.BackboneCurve` or of
    identified modal points (anything exposing amplitudes/omegas/zetas)."""
    if hasattr(curve, "amplitudes"):
        shapes = np.array([p.shape for p in curve.points])
        return BackboneInterpolant(
            curve.amplitudes,
            curve.omegas,
            curve.zetas,
            shapes=shapes,
            tip_amplitudes=curve.tip_amplitudes,
        )
    pts = list(curve)
    return BackboneInterpolant(
        [p.amplitude for p in pts],
        [p.omega for p in pts],
        [p.zeta for p in pts],
        shapes=np.array([p.shape for p in pts]),
        tip_amplitudes=[p.tip_amplitude for p in pts],
    )


def schedule_from_reference(
    interp: BackboneInterpolant, tip_targets, drive_index: int, kind: str = "feedback"
) -> np.ndarray:
    """Excitation levels that spread steady amplitudes over ``tip_targets``.

    Uses the single-mode resonant balance 2 zeta(a) omega(a)^2 a =
    |psi_k(a)| f to predict the force per target tip amplitude; ``kind``
    "feedback" returns the RMS-normalized feedback level (force amplitude /
    sqrt(2)), "force" the plain force amplitude (PLL excitation).
    """
    levels = []
    for tgt in tip_targets:
        ref = interp.at_tip_amplitude(float(tgt))
        a = float(ref["a"])
        f_amp = 2.0 * float(ref["zeta"]) * float(ref["omega"]) ** 2 * a
        psi_k = abs(np.asarray(ref["shape"])[drive_index])
        f_amp /= max(psi_k, 1e-300)
        levels.append(f_amp / np.sqrt(2.0) if kind == "feedback" else f_amp)
    return np.array(levels)


# ---------------------------------------------------------------------------
# frequency-response synthesis from the single nonlinear modal oscillator
# ---------------------------------------------------------------------------

@dataclass
class SynthesizedFrf:
    """One forcing level of the synthesized frequency response.

    Every row satisfies the modal-oscillator equation exactly; the low- and
    high-frequency branch points of each amplitude bracket the backbone.
    """

    force_amplitude: float
    amplitude: np.ndarray  # modal amplitude a
    omega_low: np.ndarray  # lower branch Omega (NaN when unreachable)
    omega_high: np.ndarray
    phase_low: np.ndarray
    phase_high: np.ndarray
    tip_low: np.ndarray
    tip_high: np.ndarray

    def peak(self) -> tuple:
        """(Omega, tip amplitude) at the largest reachable response."""
        ok = np.isfinite(self.omega_low) | np.isfinite(self.omega_high)
        if not ok.any():
            raise AnalysisError("no reachable response at this force level")
        idx = np.where(ok)[0]
        top = idx[np.argmax(self.amplitude[idx])]
        w_lo, w_hi = self.omega_low[top], self.omega_high[top]
        omega = w_lo if np.isfinite(w_lo) else w_hi
        if np.isfinite(w_lo) and np.isfinite(w_hi):
            omega = 0.5 * (w_lo + w_hi)
        return float(omega), float(max(self.tip_low[top], self.tip_high[top]))


def synthesize_frf(
    interp: BackboneInterpolant,
    force_vector: np.ndarray,
    tip_index: int,
    n_points: int = 400,
) -> SynthesizedFrf:
    """Solve the nonlinear-modal-oscillator equation explicitly for Omega^2.

    For each backbone amplitude a the modal force F = |psi_1(a)^H f_1| is
    projected through the interpolated complex shape, and
    |(-Omega^2 + 2i Omega omega zeta + omega^2)| a = F is solved as a
    quadratic in Omega^2; amplitudes with no real positive root are omitted
    (they delimit the response envelope).
    """
    s_grid = np.linspace(0.0, interp.s_max, n_points)
    data = interp.at_s(s_grid)
    a = np.atleast_1d(data["a"])
    w = np.atleast_1d(data["omega"])
    z = np.atleast_1d(data["zeta"])
    shapes = data.get("shape")
    if shapes is None:
        raise AnalysisError("interpolant carries no shapes; cannot project the force")
    fproj = shapes.conj() @ np.asarray(force_vector)
    F = np.abs(fproj)
    tip_shape = np.abs(shapes[:, tip_index])

    w_lo = np.full_like(a, np.nan)
    w_hi = np.full_like(a, np.nan)
    ph_lo = np.full_like(a, np.nan)
    ph_hi = np.full_like(a, np.nan)
    half = w**2 * (1.0 - 2.0 * z**2)
    disc = (F / a) ** 2 - 4.0 * z**2 * w**4 * (1.0 - z**2)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    x_lo = half - sq
    x_hi = half + sq
    sel_lo = ok & (x_lo > 0)
    sel_hi = ok & (x_hi > 0)
    w_lo[sel_lo] = np.sqrt(x_lo[sel_lo])
    w_hi[sel_hi] = np.sqrt(x_hi[sel_hi])
    for sel, w_arr, ph_arr in ((sel_lo, w_lo, ph_lo), (sel_hi, w_hi, ph_hi)):
        denom = -w_arr[sel] ** 2 + 2j * w_arr[sel] * w[sel] * z[sel] + w[sel] ** 2
        ph_arr[sel] = np.angle(fproj[sel] / denom)
    return SynthesizedFrf(
        force_amplitude=float(np.linalg.norm(force_vector)),
        amplitude=a,
        omega_low=w_lo,
        omega_high=w_hi,
        phase_low=ph_lo,
        phase_high=ph_hi,
        tip_low=np.where(np.isfinite(w_lo), a * tip_shape, np.nan),
        tip_high=np.where(np.isfinite(w_hi), a * tip_shape, np.nan),
    )
