"""Time simulation of structure + exciter + excitation scheme, and the
experiment protocols (level stepping, steady-state detection, response
classification, stepped-sine sweeps).

The coupled linear part (beam in its elastic-stick configuration, damping,
armature and stinger) is propagated exactly through a precomputed matrix
exponential per substep; the Jenkins element and the excitation command are
held over each substep (the stick-spring contribution sits inside the
propagator, so pure-stick intervals are integrated exactly). Measurement,
feedback and control run at the substep rate; records are sampled at the
configured acquisition rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .identify import fourier_coeffs, mac, refine_frequency
from .rig import (
    ExciterParams,
    NoiseConfig,
    NoiseStream,
    PhaseLockedLoop,
    VelocityFeedback,
)


class SimulationError(Exception):
    """Divergence or setup failure of a time simulation."""


@dataclass
class TimeSeriesRecord:
    """Sampled channels of one capture window (or full run)."""

    dt: float
    channels: dict
    channel_map: dict
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def velocity_matrix(self, noisy: bool = True) -> np.ndarray:
        """(n_samples, n_sensors) array of measured velocities."""
        names = sorted(
            (k for k in self.channels if k.startswith("vel_")),
            key=lambda s: self.channel_map[s],
        )
        out = np.column_stack([self.channels[k] for k in names])
        if noisy:
            noise = [k.replace("vel_", "velnoise_") for k in names]
            if all(k in self.channels for k in noise):
                out = out + np.column_stack([self.channels[k] for k in noise])
        return out

    def force(self, noisy: bool = True) -> np.ndarray:
        f = self.channels["force"]
        if noisy and "forcenoise" in self.channels:
            f = f + self.channels["forcenoise"]
        return f


@dataclass
class SteadyStateRecord:
    """One excitation level: capture window plus its classification."""

    level: float
    window: TimeSeriesRecord
    omega: float
    classification: str  # periodic | quasi-periodic | mode-switched | not-converged
    responding_mode: int | None = None
    secondary_ratio: float = 0.0
    periods_waited: int = 0
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# plant: exact-propagator integrator
# ---------------------------------------------------------------------------

class Plant:
    """Discrete-time exact propagator of the coupled linear part.

    State layout: [x (N); v (N); x_a; v_a] with the armature states present
    only when an exciter is attached. Inputs held per substep: the drive
    command (force in ideal mode, excitation signal through the
    current-mode amplifier otherwise) and the friction deviation force.
    """

    def __init__(self, model, drive_dof, dt_sub, exciter: ExciterParams | None = None):
        self.model = model
        self.drive_dof = drive_dof
        self.h = dt_sub
        self.exciter = exciter
        n = model.n_dof
        self.n_dof = n
        nz = 2 * n + (2 if exciter else 0)
        self.nz = nz
        minv = np.linalg.inv(model.mass)
        A = np.zeros((nz, nz))
        A[:n, n : 2 * n] = np.eye(n)
        A[n : 2 * n, :n] = -minv @ model.stick_stiffness()
        A[n : 2 * n, n : 2 * n] = -minv @ model.damping
        b_drive = np.zeros(nz)
        if exciter is not None:
            ia, iv = 2 * n, 2 * n + 1
            kst = exciter.stinger_stiffness
            ma = exciter.armature_mass
            A[n : 2 * n, ia] += minv[:, drive_dof] * kst
            A[n : 2 * n, drive_dof] -= minv[:, drive_dof] * kst
            A[ia, iv] = 1.0
            A[iv, ia] = -(exciter.armature_stiffness + kst) / ma
            A[iv, iv] = -exciter.armature_damping / ma
            A[iv, drive_dof] = kst / ma
            b_drive[iv] = exciter.force_constant * exciter.signal_to_current / ma
        else:
            b_drive[n : 2 * n] = minv[:, drive_dof]
        b_fric = np.zeros(nz)
        if model.friction_dof is not None:
            b_fric[n : 2 * n] = -minv[:, model.friction_dof]

        blk = np.zeros((nz + 2, nz + 2))
        blk[:nz, :nz] = A * dt_sub
        blk[:nz, nz] = b_drive * dt_sub
        blk[:nz, nz + 1] = b_fric * dt_sub
        prop = expm(blk)
        self.Ad = prop[:nz, :nz]
        self.Bd_drive = prop[:nz, nz]
        self.Bd_fric = prop[:nz, nz + 1]

        self.z = np.zeros(nz)
        self.slider = 0.0
        self.energy = {
            "work_in": 0.0,
            "viscous": 0.0,
            "armature": 0.0,
            "slider": 0.0,
        }
        self._p_visc_prev = 0.0
        self._p_arm_prev = 0.0
        self._state_scale = None

    # -- state access -------------------------------------------------------
    @property
    def displacement(self) -> np.ndarray:
        return self.z[: self.n_dof]

    @property
    def velocity(self) -> np.ndarray:
        return self.z[self.n_dof : 2 * self.n_dof]

    @property
    def armature(self) -> tuple:
        if self.exciter is None:
            return (0.0, 0.0)
        return self.z[2 * self.n_dof], self.z[2 * self.n_dof + 1]

    def friction_force(self) -> float:
        model = self.model
        if model.friction_dof is None:
            return 0.0
        xf = self.z[model.friction_dof]
        trial = model.tangential_stiffness * (xf - self.slider)
        return float(np.clip(trial, -model.slip_limit, model.slip_limit))

    def applied_force(self, command: float) -> float:
        """Force currently transmitted to the structure at the drive DOF."""
        if self.exciter is None:
            return command
        x_a = self.z[2 * self.n_dof]
        return self.exciter.stinger_stiffness * (x_a - self.z[self.drive_dof])

    def mechanical_energy(self) -> float:
        model = self.model
        x, v = self.displacement, self.velocity
        e = 0.5 * v @ (model.mass @ v) + 0.5 * x @ (model.stiffness @ x)
        fj = self.friction_force()
        if model.tangential_stiffness > 0:
            e += fj**2 / (2.0 * model.tangential_stiffness)
        if self.exciter is not None:
            x_a, v_a = self.armature
            e += 0.5 * self.exciter.armature_mass * v_a**2
            e += 0.5 * self.exciter.armature_stiffness * x_a**2
            e += 0.5 * self.exciter.stinger_stiffness * (x_a - self.z[self.drive_dof]) ** 2
        return float(e)

    def perturb(self, rng, relative=1e-12):
        """Tiny seeded state kick (transverse-mode seed between levels)."""
        scale = max(np.linalg.norm(self.z), 1e-12)
        self.z = self.z + rng.standard_normal(self.nz) * relative * scale

    # -- stepping -----------------------------------------------------------
    def substep(self, command: float):
        model = self.model
        z = self.z
        f_dev = 0.0
        if model.friction_dof is not None and model.slip_limit > 0:
            xf = z[model.friction_dof]
            kt, mu = model.tangential_stiffness, model.slip_limit
            trial = kt * (xf - self.slider)
            if abs(trial) > mu:
                # spring energy released by the slider jump at frozen x is the
                # exact dissipation event of the discrete update
                self.energy["slider"] += (trial**2 - mu**2) / (2.0 * kt)
                trial = np.sign(trial) * mu
                self.slider = xf - trial / kt
            f_dev = trial - kt * xf

        x_drive_old = z[self.drive_dof]
        x_a_old = z[2 * self.n_dof] if self.exciter is not None else 0.0
        v = z[self.n_dof : 2 * self.n_dof]
        p_visc = v @ (model.damping @ v)
        if self.exciter is not None:
            p_arm = self.exciter.armature_damping * z[2 * self.n_dof + 1] ** 2
        else:
            p_arm = 0.0

        z_new = self.Ad @ z + self.Bd_drive * command + self.Bd_fric * f_dev
        self.z = z_new

        # exact ZOH work terms; viscous parts by trapezoid at substep rate
        if self.exciter is not None:
            x_a_new = z_new[2 * self.n_dof]
            coil_force = (
                self.exciter.force_constant
                * self.exciter.signal_to_current
                * command
            )
            self.energy["work_in"] += coil_force * (x_a_new - x_a_old)
        else:
            self.energy["work_in"] += command * (z_new[self.drive_dof] - x_drive_old)
        v_new = z_new[self.n_dof : 2 * self.n_dof]
        p_visc_new = v_new @ (model.damping @ v_new)
        self.energy["viscous"] += 0.5 * (p_visc + p_visc_new) * self.h
        if self.exciter is not None:
            p_arm_new = self.exciter.armature_damping * z_new[2 * self.n_dof + 1] ** 2
            self.energy["armature"] += 0.5 * (p_arm + p_arm_new) * self.h

        norm = np.linalg.norm(z_new)
        if not np.isfinite(norm):
            raise SimulationError("state norm diverged")
        if self._state_scale is None:
            self._state_scale = max(norm, 1e-9)
        else:
            # growth guard: 1e6 over the largest state seen so far, with an
            # absolute backstop far above any physical response of the rig
            if norm > max(1e6 * self._state_scale, 1e3):
                raise SimulationError("state norm diverged")
            self._state_scale = max(self._state_scale, norm)


# ---------------------------------------------------------------------------
# steady-state detection and response classification
# ---------------------------------------------------------------------------

def per_period_rms(signal: np.ndarray, samples_per_period: int) -> np.ndarray:
    n_p = len(signal) // samples_per_period
    if n_p == 0:
        return np.array([])
    trimmed = signal[len(signal) - n_p * samples_per_period :]
    blocks = trimmed.reshape(n_p, samples_per_period)
    return np.sqrt(np.mean(blocks**2, axis=1))


def detect_steady_state(
    drive_velocity_tail: np.ndarray,
    samples_per_period: int,
    rms_tol: float = 0.01,
    n_periods: int = 10,
    pll_phase_error: float | None = None,
    phase_tol: float = np.radians(1.0),
) -> bool:
    """Steady when per-period drive-velocity RMS varies < tol over the last
    ``n_periods`` periods (and, for PLL runs, the phase error is within
    ``phase_tol``)."""
    rms = per_period_rms(drive_velocity_tail, samples_per_period)
    if len(rms) < n_periods:
        return False
    recent = rms[-n_periods:]
    mean = np.mean(recent)
    if mean <= 0:
        return False
    if (np.max(recent) - np.min(recent)) / mean >= rms_tol:
        return False
    if pll_phase_error is not None and abs(pll_phase_error) >= phase_tol:
        return False
    return True


def _spectral_peaks(signal: np.ndarray, dt: float):
    """Hann-windowed amplitude spectrum and its local maxima."""
    n = len(signal)
    win = np.hanning(n)
    spec = np.abs(np.fft.rfft(signal * win))
    freqs = np.fft.rfftfreq(n, dt) * 2 * np.pi
    inner = (spec[1:-1] > spec[:-2]) & (spec[1:-1] >= spec[2:])
    peaks = np.where(inner)[0] + 1
    return freqs, spec, peaks


def classify_response(
    window: TimeSeriesRecord,
    basis,
    sensors,
    mode_of_interest: int,
    quasi_threshold: float = 0.10,
    mac_floor: float = 0.5,
):
    """Classify a steady window: responding mode, quasi-periodicity, or noise.

    The fundamental is the largest spectral peak of the tip velocity; the
    responding mode maximizes the MAC between the fitted fundamental shape
    and the linear modes, restricted to modes whose softening band
    [0.7, 1.05] * omega_stick contains the fundamental. A non-harmonic
    secondary peak above ``quasi_threshold`` of the fundamental flags a
    quasi-periodic response.
    """
    vel = window.velocity_matrix(noisy=True)
    tip_col = int(np.argmax(sensors.sensor_dofs))
    tip_vel = vel[:, tip_col]
    freqs, spec, peaks = _spectral_peaks(tip_vel, window.dt)
    if len(peaks) == 0 or np.max(spec[peaks]) <= 0:
        return {"classification": "not-converged", "omega": np.nan,
                "responding_mode": None, "secondary_ratio": 0.0}
    main = peaks[np.argmax(spec[peaks])]
    omega_est = freqs[main]
    if omega_est <= 0:
        return {"classification": "not-converged", "omega": np.nan,
                "responding_mode": None, "secondary_ratio": 0.0}
    times = window.times
    omega_ref = refine_frequency(tip_vel, times, omega_est, bracket=0.02)

    # secondary non-harmonic content
    dres = freqs[1] - freqs[0]
    tol = max(3 * dres, 0.03 * omega_ref)
    secondary = 0.0
    for p in peaks:
        w = freqs[p]
        if w <= 0 or p == main:
            continue
        harmonic = round(w / omega_ref)
        if harmonic >= 1 and abs(w - harmonic * omega_ref) < tol:
            continue
        secondary = max(secondary, spec[p] / spec[main])

    v_coef = fourier_coeffs(vel, times, omega_ref, 1)
    shape = v_coef[1]
    macs = np.array(
        [mac(shape, sensors.phi_exp[:, i]) for i in range(sensors.n_modes)]
    )
    in_band = [
        i
        for i in range(sensors.n_modes)
        if 0.70 * basis.frequencies[i] <= omega_ref <= 1.05 * basis.frequencies[i]
    ]
    if in_band:
        responding = 1 + in_band[int(np.argmax(macs[in_band]))]
    elif np.max(macs) >= mac_floor:
        responding = 1 + int(np.argmax(macs))
    else:
        responding = None

    if secondary >= quasi_threshold:
        classification = "quasi-periodic"
    elif responding is None:
        classification = "not-converged"
    elif responding != mode_of_interest:
        classification = "mode-switched"
    else:
        classification = "periodic"
    return {
        "classification": classification,
        "omega": omega_ref,
        "responding_mode": responding,
        "secondary_ratio": secondary,
        "mac": macs,
    }


# ---------------------------------------------------------------------------
# generic run loop
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    """Timing and protocol settings of the simulated experiment."""

    dt: float = 1e-4
    substeps: int = 2
    window_periods: int = 20
    max_periods: int = 500
    min_periods: int = 30
    check_periods: int = 10
    steady_rms_tol: float = 0.01
    init_periods: int = 50
    level_kick: float = 1e-10
    record_clean: bool = True
    pll_phase_tol: float = np.radians(0.25)


class Rig:
    """One wired-up virtual experiment: plant, sensors, noise, channels."""

    def __init__(
        self,
        model,
        drive_dof: int,
        sensor_dofs,
        sim: SimConfig,
        exciter: ExciterParams | None = None,
        noise: NoiseConfig | None = None,
        seed: int = 0,
    ):
        self.model = model
        self.drive_dof = drive_dof
        self.sensor_dofs = np.asarray(sensor_dofs)
        self.sim = sim
        self.h = sim.dt / sim.substeps
        self.plant = Plant(model, drive_dof, self.h, exciter)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.t = 0.0
        noise = noise or NoiseConfig()
        self.noise_cfg = noise
        self.vel_noise = [
            NoiseStream(noise.response_psd, noise.correlation_time, self.h,
                        seed=noise.seed + 101 * (i + 1))
            for i in range(len(self.sensor_dofs))
        ]
        self.force_noise = NoiseStream(
            noise.force_psd, noise.correlation_time, self.h, seed=noise.seed + 9001
        )
        self._drive_sensor = int(np.where(self.sensor_dofs == drive_dof)[0][0])

    def measured_velocities(self) -> np.ndarray:
        v = self.plant.velocity[self.sensor_dofs]
        return v + np.array([s.sample() for s in self.vel_noise])

    def run(
        self,
        n_samples: int,
        command_fn,
        record: bool = False,
    ):
        """Advance ``n_samples`` acquisition samples.

        ``command_fn(rig, measured_velocities, measured_force, h) -> float``
        is evaluated once per substep and returns the drive command held
        over that substep. With ``record`` the sampled channels are returned.
        """
        sim = self.sim
        plant = self.plant
        n_sensors = len(self.sensor_dofs)
        if record:
            chans = {
                "force": np.empty(n_samples),
                "excitation_signal": np.empty(n_samples),
                "drive_disp": np.empty(n_samples),
            }
            for i, dof in enumerate(self.sensor_dofs):
                chans[f"vel_s{i}"] = np.empty(n_samples)
                chans[f"disp_s{i}"] = np.empty(n_samples)
                chans[f"velnoise_s{i}"] = np.empty(n_samples)
            chans["forcenoise"] = np.empty(n_samples)
            chans["time"] = self.t + np.arange(n_samples) * sim.dt
            chans["pll_freq"] = np.empty(n_samples)
        drive_vel = np.empty(n_samples)
        last_cmd = 0.0
        for j in range(n_samples):
            # measurement + command at the sample instant (records are taken
            # before the state advances through the sample interval)
            v_noise = np.array([s.sample() for s in self.vel_noise])
            f_noise = self.force_noise.sample()
            v_meas = plant.velocity[self.sensor_dofs] + v_noise
            f_true = plant.applied_force(last_cmd)
            self._record_force = None
            cmd = command_fn(self, v_meas, f_true + f_noise, self.h)
            if record:
                # for ideal forcing the held command is the applied force; a
                # scheme may publish its instantaneous sample-time value to
                # avoid the half-substep hold skew (the PLL does)
                if plant.exciter is None:
                    f_rec = self._record_force if self._record_force is not None else cmd
                else:
                    f_rec = f_true
                chans["force"][j] = f_rec
                chans["forcenoise"][j] = f_noise
                chans["excitation_signal"][j] = cmd
                chans["drive_disp"][j] = plant.displacement[self.drive_dof]
                for i in range(n_sensors):
                    chans[f"vel_s{i}"][j] = plant.velocity[self.sensor_dofs[i]]
                    chans[f"velnoise_s{i}"][j] = v_noise[i]
                    chans[f"disp_s{i}"][j] = plant.displacement[self.sensor_dofs[i]]
                chans["pll_freq"][j] = getattr(self, "_pll_omega", np.nan)
            drive_vel[j] = v_meas[self._drive_sensor]
            plant.substep(cmd)
            last_cmd = cmd
            # remaining substeps of this sample
            for _ in range(sim.substeps - 1):
                v_noise = np.array([s.sample() for s in self.vel_noise])
                f_noise = self.force_noise.sample()
                v_meas = plant.velocity[self.sensor_dofs] + v_noise
                f_true = plant.applied_force(last_cmd)
                cmd = command_fn(self, v_meas, f_true + f_noise, self.h)
                plant.substep(cmd)
                last_cmd = cmd
            self.t += sim.dt
        if record:
            cmap = {f"vel_s{i}": int(d) for i, d in enumerate(self.sensor_dofs)}
            cmap.update({f"disp_s{i}": int(d) for i, d in enumerate(self.sensor_dofs)})
            rec = TimeSeriesRecord(
                dt=sim.dt,
                channels=chans,
                channel_map=cmap,
                metadata={"drive_dof": self.drive_dof, "t_start": float(chans["time"][0])},
            )
            return drive_vel, rec
        return drive_vel, None


# ---------------------------------------------------------------------------
# experiment protocols
# ---------------------------------------------------------------------------

def _estimate_period_samples(drive_vel: np.ndarray, dt: float, fallback: float):
    """Fundamental period (in samples) from the dominant spectral peak."""
    n = len(drive_vel)
    if n < 32:
        return fallback
    freqs, spec, peaks = _spectral_peaks(drive_vel - np.mean(drive_vel), dt)
    if len(peaks) == 0:
        return fallback
    main = peaks[np.argmax(spec[peaks])]
    if freqs[main] <= 0:
        return fallback
    return 2 * np.pi / freqs[main]


def run_backbone_experiment(
    rig: Rig,
    feedback_factory,
    levels,
    omega_init: float,
    basis,
    sensors,
    mode_of_interest: int,
    init_level: float | None = None,
    target_tip_amplitudes=None,
) -> list:
    """Velocity-feedback level sweep: initialize, switch to feedback, step levels.

    ``feedback_factory(level)`` builds the :class:`VelocityFeedback` for a
    level (the same moving-RMS state carries across levels: only the level
    scaling changes). Returns one :class:`SteadyStateRecord` per level;
    mode switches and quasi-periodic responses are recorded, not fatal.

    With ``target_tip_amplitudes`` the excitation level of each step is
    adapted (log-log secant on the measured force-to-amplitude map) so the
    captured points spread over the requested tip amplitudes instead of
    being dictated by a fixed force schedule; ``levels`` then only seeds the
    first step.
    """
    sim = rig.sim
    records = []
    period0 = 2 * np.pi / omega_init
    samples_per_period0 = max(int(round(period0 / sim.dt)), 8)

    adaptive = target_tip_amplitudes is not None
    n_steps = len(target_tip_amplitudes) if adaptive else len(levels)
    fb = feedback_factory(levels[0])
    amp_init = (init_level if init_level is not None else levels[0]) * np.sqrt(2.0)

    def init_command(rig_, v_meas, f_meas, h):
        # fixed-frequency drive at the linear modal frequency; the moving-RMS
        # state pre-warms on the same scalar the feedback will use afterwards
        fb.rms.update(fb.config.weighting.feedback_scalar(v_meas), h)
        rig_._init_phase += omega_init * h
        return amp_init * np.cos(rig_._init_phase + 0.5 * omega_init * h)

    rig._init_phase = 0.0
    rig.run(sim.init_periods * samples_per_period0, init_command)

    def feedback_command(rig_, v_meas, f_meas, h):
        return fb.update(v_meas, h)

    spp = samples_per_period0
    level = levels[0]
    history = []  # (log level, log measured tip amplitude) for adaptation
    for step in range(n_steps):
        if adaptive:
            target = target_tip_amplitudes[step]
            if len(history) >= 2:
                (l1, a1), (l2, a2) = history[-2], history[-1]
                slope = (l2 - l1) / (a2 - a1) if abs(a2 - a1) > 1e-6 else 1.0
                slope = float(np.clip(slope, 0.25, 4.0))
                proposal = np.exp(l2 + slope * (np.log(target) - a2))
                # clamp the per-step force growth: the force-to-amplitude map
                # is locally near-vertical at slip onset and a raw secant
                # extrapolation overshoots far past the targeted amplitudes
                level = float(np.clip(proposal, level / 3.0, level * 3.0))
            elif len(history) == 1:
                l1, a1 = history[-1]
                proposal = np.exp(l1 + (np.log(target) - a1))
                level = float(np.clip(proposal, level / 3.0, level * 3.0))
        else:
            level = levels[step]
        fb.level = level
        if sim.level_kick > 0:
            rig.plant.perturb(rig.rng, sim.level_kick)
        waited = 0
        tail = np.empty(0)
        diverged = False
        while waited < sim.max_periods:
            chunk = sim.check_periods * spp
            try:
                drive_vel, _ = rig.run(chunk, feedback_command)
            except SimulationError:
                diverged = True
                break
            waited += sim.check_periods
            tail = np.concatenate([tail, drive_vel])[-40 * spp :]
            period = _estimate_period_samples(tail, sim.dt, spp * sim.dt)
            spp_new = max(int(round(period / sim.dt)), 8)
            if spp_new != spp and waited >= sim.check_periods * 2:
                spp = spp_new
            if waited >= sim.min_periods and detect_steady_state(
                tail, spp, sim.steady_rms_tol
            ):
                break
        if diverged:
            records.append(
                SteadyStateRecord(
                    level=level,
                    window=None,
                    omega=np.nan,
                    classification="not-converged",
                    periods_waited=waited,
                    extras={"diverged": True},
                )
            )
            # restart from rest plus a fresh initialization phase
            rig.plant.z[:] = 0.0
            rig.plant.slider = 0.0
            rig._init_phase = 0.0
            rig.run(sim.init_periods * samples_per_period0, init_command)
            spp = samples_per_period0
            continue
        n_cap = sim.window_periods * spp
        _, window = rig.run(n_cap, feedback_command, record=True)
        info = classify_response(window, basis, sensors, mode_of_interest)
        records.append(
            SteadyStateRecord(
                level=level,
                window=window,
                omega=info["omega"],
                classification=info["classification"],
                responding_mode=info["responding_mode"],
                secondary_ratio=info["secondary_ratio"],
                periods_waited=waited,
                extras={"clip_count": fb.clip_count, "mac": info.get("mac")},
            )
        )
        if info["omega"] and np.isfinite(info["omega"]):
            spp = max(int(round(2 * np.pi / info["omega"] / sim.dt)), 8)
            if adaptive:
                tip_col = int(np.argmax(sensors.sensor_dofs))
                vel = window.velocity_matrix(noisy=True)[:, tip_col]
                v1 = fourier_coeffs(vel[:, None], window.times, info["omega"], 1)[1, 0]
                tip_amp = abs(v1) / info["omega"]
                if tip_amp > 0:
                    history.append((np.log(level), np.log(tip_amp)))
    return records


def run_pll_experiment(
    rig: Rig,
    pll: PhaseLockedLoop,
    levels,
    basis,
    sensors,
    mode_of_interest: int,
    level_attr: str = "amplitude",
) -> list:
    """Phase-resonance backbone: PLL holds the target phase while the
    excitation amplitude steps through ``levels``."""
    sim = rig.sim

    def pll_command(rig_, v_meas, f_meas, h):
        rig_._record_force = pll.output_at_sample()
        u = pll.step(rig_.plant.displacement[rig_.drive_dof], f_meas, h)
        rig_._pll_omega = pll.omega
        rig_._pll_err_max = max(rig_._pll_err_max, abs(pll.phase_error))
        return u

    records = []
    spp = max(int(round(2 * np.pi / pll.config.center_frequency / sim.dt)), 8)
    for level in levels:
        if level_attr == "amplitude":
            pll.amplitude = level
        else:
            pll.config.force_loop["target"] = level
        waited = 0
        tail = np.empty(0)
        while waited < sim.max_periods:
            rig._pll_err_max = 0.0
            drive_vel, _ = rig.run(sim.check_periods * spp, pll_command)
            waited += sim.check_periods
            tail = np.concatenate([tail, drive_vel])[-40 * spp :]
            spp = max(int(round(2 * np.pi / pll.omega / sim.dt)), 8)
            if waited >= sim.min_periods and detect_steady_state(
                tail,
                spp,
                sim.steady_rms_tol,
                pll_phase_error=rig._pll_err_max,
                phase_tol=sim.pll_phase_tol,
            ):
                break
        _, window = rig.run(sim.window_periods * spp, pll_command, record=True)
        info = classify_response(window, basis, sensors, mode_of_interest)
        records.append(
            SteadyStateRecord(
                level=level,
                window=window,
                omega=info["omega"],
                classification=info["classification"],
                responding_mode=info["responding_mode"],
                secondary_ratio=info["secondary_ratio"],
                periods_waited=waited,
                extras={
                    "pll_omega": pll.omega,
                    "pll_phase_error": pll.phase_error,
                    "lock_failed": pll.lock_failed,
                },
            )
        )
    return records


def run_stepped_sine(
    rig: Rig,
    pll: PhaseLockedLoop,
    phase_schedule,
    basis,
    sensors,
    mode_of_interest: int,
    force_tolerance: float = 0.01,
    warmup_theta: float = np.pi / 2,
) -> list:
    """Stepped-sine FRF acquisition: step the PLL target phase at fixed force.

    The loop first locks at ``warmup_theta`` (phase resonance, where the
    detector signal is strongest), then steps through ``phase_schedule``.
    Per step the controller locks, the outer loop brings the fundamental
    force amplitude within ``force_tolerance`` of its target, and one FRF
    point (frequency, response amplitude, phase) is captured. Lock failures
    are skipped and flagged; the failure flag reflects the settled state of
    a step, not start-up clamping transients.
    """
    sim = rig.sim
    target = pll.config.force_loop["target"]
    pll.prewarm_force_loop()

    def pll_command(rig_, v_meas, f_meas, h):
        rig_._record_force = pll.output_at_sample()
        u = pll.step(rig_.plant.displacement[rig_.drive_dof], f_meas, h)
        rig_._pll_omega = pll.omega
        rig_._pll_err_max = max(rig_._pll_err_max, abs(pll.phase_error))
        return u

    points = []
    spp = max(int(round(2 * np.pi / pll.config.center_frequency / sim.dt)), 8)

    def settle(theta, budget):
        nonlocal spp
        pll.config.target_phase = theta
        waited = 0
        tail = np.empty(0)
        while waited < budget:
            rig._pll_err_max = 0.0
            pll.lock_failed = False
            drive_vel, _ = rig.run(sim.check_periods * spp, pll_command)
            waited += sim.check_periods
            tail = np.concatenate([tail, drive_vel])[-40 * spp :]
            spp = max(int(round(2 * np.pi / pll.omega / sim.dt)), 8)
            force_ok = (
                abs(pll.measured_force_amplitude - target) <= force_tolerance * target
            )
            if (
                waited >= sim.min_periods
                and force_ok
                and not pll.lock_failed
                and detect_steady_state(
                    tail,
                    spp,
                    sim.steady_rms_tol,
                    pll_phase_error=rig._pll_err_max,
                    phase_tol=sim.pll_phase_tol,
                )
            ):
                return True, waited
        return False, waited

    if warmup_theta is not None:
        settle(warmup_theta, sim.max_periods)

    for theta in phase_schedule:
        locked, waited = settle(theta, sim.max_periods)
        if not locked or pll.lock_failed:
            points.append(
                SteadyStateRecord(
                    level=target,
                    window=None,
                    omega=pll.omega,
                    classification="not-converged",
                    extras={"theta": theta, "lock_failed": True},
                )
            )
            continue
        _, window = rig.run(sim.window_periods * spp, pll_command, record=True)
        info = classify_response(window, basis, sensors, mode_of_interest)
        points.append(
            SteadyStateRecord(
                level=target,
                window=window,
                omega=info["omega"],
                classification=info["classification"],
                responding_mode=info["responding_mode"],
                secondary_ratio=info["secondary_ratio"],
                periods_waited=waited,
                extras={"theta": theta, "pll_omega": pll.omega, "lock_failed": False},
            )
        )
    return points


def energy_balance(rig: Rig, e0: float = 0.0) -> dict:
    """Run-level energy ledger of the plant (see Plant energy accumulators)."""
    e = rig.plant.energy
    de = rig.plant.mechanical_energy() - e0
    total_diss = e["viscous"] + e["armature"] + e["slider"]
    residual = e["work_in"] - total_diss - de
    return {
        "work_in": e["work_in"],
        "dissipated": total_diss,
        "delta_mechanical": de,
        "residual": residual,
        "relative_residual": abs(residual) / max(abs(e["work_in"]), 1e-300),
    }
