"""Excitation strategies and instrumentation of the virtual test rig.

Three excitation schemes drive the specimen: single-velocity feedback (the
drive-point velocity fed back), multi-velocity feedback (a mass-weighted
modal-velocity estimate fed back), and a phase-locked loop holding a target
phase lag between drive-point displacement and force. The module also hosts
the electrodynamic exciter/stinger model, the moving-RMS amplitude
estimator used to self-normalize the feedback force, and the band-limited
measurement-noise generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class RigError(Exception):
    """Configuration or wiring problem in the excitation rig."""


# ---------------------------------------------------------------------------
# velocity-feedback weighting
# ---------------------------------------------------------------------------

@dataclass
class WeightingMatrix:
    """Spatial weighting of the velocity feedback force.

    ``matrix`` is the N x N weighting W (force = nu * W * xdot). For the
    mfb scheme ``sensor_row`` holds the weights applied to the measured
    velocity subset to form the scalar modal-velocity estimate.
    """

    matrix: np.ndarray
    scheme: str
    exciter_dof: int
    mode_index: int | None = None
    sensor_dofs: np.ndarray | None = None
    sensor_row: np.ndarray | None = None

    def feedback_scalar(self, measured_velocities: np.ndarray) -> float:
        """Scalar signal fed back: drive-point velocity (sfb) or modal estimate (mfb)."""
        if self.scheme == "sfb":
            k = int(np.where(self.sensor_dofs == self.exciter_dof)[0][0])
            return float(measured_velocities[k])
        return float(self.sensor_row @ measured_velocities)


def build_weighting(
    scheme: str,
    exciter_dof: int,
    phi_exp: np.ndarray | None = None,
    m_exp: np.ndarray | None = None,
    sensor_dofs: np.ndarray | None = None,
    mode_index: int | None = None,
    n_dof: int | None = None,
) -> WeightingMatrix:
    """Construct the sfb or mfb weighting matrix.

    sfb: W = e_k e_k^T. mfb: W = e_k phi_m^T M_exp C with the sign of phi_m
    flipped if needed so that (W)_kk > 0; the exciter DOF must be
    instrumented and must not be a vibration node of the target mode.
    """
    if scheme == "sfb":
        if n_dof is None:
            raise RigError("sfb weighting needs the model dimension")
        W = np.zeros((n_dof, n_dof))
        W[exciter_dof, exciter_dof] = 1.0
        if sensor_dofs is None:
            sensor_dofs = np.array([exciter_dof])
        if exciter_dof not in sensor_dofs:
            raise RigError("sfb requires a velocity sensor at the exciter DOF")
        return WeightingMatrix(
            matrix=W,
            scheme="sfb",
            exciter_dof=exciter_dof,
            sensor_dofs=np.asarray(sensor_dofs),
        )
    if scheme != "mfb":
        raise RigError(f"unknown weighting scheme: {scheme}")
    if phi_exp is None or m_exp is None or sensor_dofs is None or mode_index is None:
        raise RigError("mfb weighting needs phi_exp, m_exp, sensor_dofs and mode_index")
    sensor_dofs = np.asarray(sensor_dofs)
    if mode_index < 1 or mode_index > phi_exp.shape[1]:
        raise RigError("mode_index outside the identified modal set")
    where = np.where(sensor_dofs == exciter_dof)[0]
    if len(where) == 0:
        raise RigError("mfb requires the exciter DOF to be instrumented")
    phi_m = phi_exp[:, mode_index - 1].copy()
    row = phi_m @ m_exp
    if n_dof is None:
        n_dof = int(sensor_dofs.max()) + 1
    W = np.zeros((n_dof, n_dof))
    W[exciter_dof, sensor_dofs] = row
    if abs(W[exciter_dof, exciter_dof]) < 1e-12 * max(np.abs(row).max(), 1e-300):
        raise RigError(
            f"exciter DOF {exciter_dof} sits on a node of mode {mode_index}: "
            "mode cannot be isolated with mfb"
        )
    if W[exciter_dof, exciter_dof] < 0:
        row = -row
        W = -W
    return WeightingMatrix(
        matrix=W,
        scheme="mfb",
        exciter_dof=exciter_dof,
        mode_index=mode_index,
        sensor_dofs=sensor_dofs,
        sensor_row=row,
    )


# ---------------------------------------------------------------------------
# amplitude estimation and feedback law
# ---------------------------------------------------------------------------

RMS_FLOOR = 1e-30


class MovingRms:
    """First-order low-pass of the squared signal, square-rooted.

    Discrete update: state += dt/tau * (sample^2 - state). The floor on the
    filter state prevents division blow-up when the signal is silent.
    """

    def __init__(self, time_constant: float):
        if time_constant <= 0:
            raise RigError("RMS time constant must be positive")
        self.tau = time_constant
        self.state = 0.0

    def update(self, sample: float, dt: float) -> float:
        self.state += (dt / self.tau) * (sample * sample - self.state)
        return np.sqrt(max(self.state, RMS_FLOOR))

    @property
    def estimate(self) -> float:
        return np.sqrt(max(self.state, RMS_FLOOR))


def moving_rms(sample: float, state: float, tau: float, dt: float):
    """Functional single-step form of :class:`MovingRms`."""
    state = state + (dt / tau) * (sample * sample - state)
    return np.sqrt(max(state, RMS_FLOOR)), state


@dataclass
class FeedbackConfig:
    """Velocity-feedback excitation settings (one level)."""

    weighting: WeightingMatrix
    level: float  # nu-tilde, sets the force scale after RMS normalization
    rms_time_constant: float
    init_frequency: float  # rad/s
    init_duration: float  # s
    signal_cap_ratio: float = 10.0


class VelocityFeedback:
    """Self-normalizing velocity feedback: u = level * s / ||s||_rms.

    The scalar s is the drive-point velocity (sfb) or the weighted modal
    velocity estimate (mfb); its moving-RMS estimate keeps the excitation
    level pinned while the waveform follows the response. The normalized
    ratio is clamped at ``signal_cap_ratio`` (counted, not fatal).
    """

    def __init__(self, config: FeedbackConfig):
        self.config = config
        self.rms = MovingRms(config.rms_time_constant)
        self.level = config.level
        self.clip_count = 0

    def update(self, measured_velocities: np.ndarray, dt: float) -> float:
        s = self.config.weighting.feedback_scalar(measured_velocities)
        est = self.rms.update(s, dt)
        ratio = s / max(est, RMS_FLOOR**0.5)
        cap = self.config.signal_cap_ratio
        if abs(ratio) > cap:
            ratio = np.sign(ratio) * cap
            self.clip_count += 1
        return self.level * ratio


def feedback_signal(measured_velocities, feedback: VelocityFeedback, dt: float) -> float:
    return feedback.update(np.asarray(measured_velocities, float), dt)


# ---------------------------------------------------------------------------
# phase-locked loop
# ---------------------------------------------------------------------------

@dataclass
class PLLConfig:
    """PI-controlled phase-locked loop with synchronous detection.

    ``target_phase`` is the commanded lag of the drive-point displacement
    behind the excitation fundamental (pi/2 encodes phase resonance).
    The optional outer force loop trims ``excitation_amplitude`` until the
    fundamental force amplitude matches ``target_force``.
    """

    k_p: float = 5.0  # 1/s
    k_i: float = 15.0  # 1/s^2
    target_phase: float = np.pi / 2
    center_frequency: float = 0.0  # rad/s
    lowpass_time_constant: float = 2.0 / np.pi
    excitation_amplitude: float = 1.0
    force_loop: dict | None = None  # {"k_p": V/N, "k_i": V/(N s), "target": N}
    frequency_band: tuple = (0.5, 1.5)

    def __post_init__(self):
        if self.k_p <= 0 or self.k_i <= 0:
            raise RigError("PLL gains must be positive")
        if not 0 < self.target_phase < np.pi:
            raise RigError("target phase must lie in (0, pi)")
        if self.center_frequency <= 0:
            raise RigError("center frequency must be positive")


class PhaseLockedLoop:
    """Synchronous-detection PLL driving a controlled oscillator.

    The reference (drive-point displacement) and the measured force are
    demodulated against the internal oscillator with first-order low-pass
    filters; the displacement phase error feeds the PI law that shifts the
    oscillator frequency about the center frequency.
    """

    def __init__(self, config: PLLConfig):
        self.config = config
        self.phase = 0.0
        self.integrator = 0.0
        self.i_x = 0.0
        self.q_x = 0.0
        self.i_f = 0.0
        self.q_f = 0.0
        self.amplitude = config.excitation_amplitude
        self.force_integrator = 0.0
        self.omega = config.center_frequency
        self.lock_failed = False

    def prewarm_force_loop(self):
        """Seed the force demodulator and outer integrator at the target, so
        the amplitude loop starts balanced instead of winding up while the
        slow demodulation filter warms."""
        if self.config.force_loop is None:
            return
        target = self.config.force_loop["target"]
        self.i_f = target / 2.0
        self.q_f = 0.0
        self.force_integrator = target / self.config.force_loop["k_i"]
        self.amplitude = target

    @property
    def measured_phase_lag(self) -> float:
        """Current estimate of displacement lag behind the oscillator output."""
        return -np.arctan2(self.q_x, self.i_x)

    @property
    def measured_force_amplitude(self) -> float:
        return 2.0 * np.hypot(self.i_f, self.q_f)

    @property
    def phase_error(self) -> float:
        return self.config.target_phase - self.measured_phase_lag

    def step(self, displacement: float, force: float, dt: float) -> float:
        """Advance one time step; returns the excitation output sample.

        The returned sample is evaluated at the midpoint phase of the
        upcoming hold interval so a zero-order-hold realization carries the
        oscillator phase without half-sample skew.
        """
        cfg = self.config
        c, s = np.cos(self.phase), np.sin(self.phase)
        alpha = dt / cfg.lowpass_time_constant
        self.i_x += alpha * (displacement * c - self.i_x)
        self.q_x += alpha * (-displacement * s - self.q_x)
        self.i_f += alpha * (force * c - self.i_f)
        self.q_f += alpha * (-force * s - self.q_f)

        err = self.phase_error
        self.integrator += dt * err
        omega = cfg.center_frequency + cfg.k_p * err + cfg.k_i * self.integrator
        lo, hi = cfg.frequency_band
        if not lo * cfg.center_frequency <= omega <= hi * cfg.center_frequency:
            self.lock_failed = True
            omega = np.clip(omega, lo * cfg.center_frequency, hi * cfg.center_frequency)
        self.omega = omega

        if cfg.force_loop is not None:
            f_err = cfg.force_loop["target"] - self.measured_force_amplitude
            self.force_integrator += dt * f_err
            self.amplitude = max(
                cfg.force_loop["k_p"] * f_err
                + cfg.force_loop["k_i"] * self.force_integrator,
                0.0,
            )
        out = self.amplitude * np.cos(self.phase + 0.5 * omega * dt)
        self.phase += dt * omega
        return out

    def output_at_sample(self) -> float:
        """Instantaneous oscillator output at the current phase (for records)."""
        return self.amplitude * np.cos(self.phase)


def pll_step(displacement, force, pll: PhaseLockedLoop, dt: float) -> float:
    return pll.step(displacement, force, dt)


# ---------------------------------------------------------------------------
# electrodynamic exciter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExciterParams:
    """Electro-mechanical shaker armature and stinger properties.

    Current-mode amplifier assumed: the coil inductance and resistance are
    stored for completeness but do not enter the dynamics.
    """

    armature_mass: float = 0.057  # kg
    armature_damping: float = 21.51  # Ns/m
    armature_stiffness: float = 9932.0  # N/m
    force_constant: float = 6.78  # N/A
    coil_inductance: float = 140e-6  # H (unused, current mode)
    coil_resistance: float = 2.0  # Ohm (unused, current mode)
    stinger_stiffness: float = 4.4e7  # N/m
    rigid_stinger: bool = False
    signal_to_current: float = 1.0  # A per excitation-signal unit

    @property
    def armature_frequency(self) -> float:
        return np.sqrt(self.armature_stiffness / self.armature_mass)

    @property
    def armature_damping_ratio(self) -> float:
        return self.armature_damping / (2 * self.armature_mass * self.armature_frequency)

    def to_dict(self) -> dict:
        return {
            "armature_mass_kg": self.armature_mass,
            "armature_damping_ns_m": self.armature_damping,
            "armature_stiffness_n_m": self.armature_stiffness,
            "force_constant_n_a": self.force_constant,
            "coil_inductance_h": self.coil_inductance,
            "coil_resistance_ohm": self.coil_resistance,
            "stinger_stiffness_n_m": self.stinger_stiffness,
            "rigid_stinger": self.rigid_stinger,
            "signal_to_current_a": self.signal_to_current,
        }


def exciter_rhs(
    x_a: float,
    v_a: float,
    current: float,
    x_structure: float,
    params: ExciterParams,
) -> tuple[float, float, float]:
    """Armature state derivative and stinger force (elastic stinger).

    Returns (dx_a/dt, dv_a/dt, f_stinger) with f_stinger the force applied
    to the structure at the attachment DOF; its reaction loads the armature.
    """
    f_stinger = params.stinger_stiffness * (x_a - x_structure)
    acc = (
        params.force_constant * current
        - params.armature_damping * v_a
        - params.armature_stiffness * x_a
        - f_stinger
    ) / params.armature_mass
    return v_a, acc, f_stinger


def transfer_at_resonance(
    params: ExciterParams, omega0: float, zeta0: float, phi_k: float
) -> complex:
    """Exciter input-to-force transfer at the structure's resonance.

    Rigid-stinger, single-mode reduction: the structure is represented by
    one mass-normalized mode with entry phi_k at the drive point.
    """
    if zeta0 <= 0:
        raise RigError("zeta0 must be positive for the resonant transfer function")
    wa = params.armature_frequency
    za = params.armature_damping_ratio
    ratio = wa / omega0
    term = (abs(phi_k) ** 2 * params.armature_mass) / (2j * zeta0) * (
        -1.0 + 2j * za * ratio + ratio**2
    )
    return 1.0 / (1.0 + term)


# ---------------------------------------------------------------------------
# measurement noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    """Band-limited white measurement noise settings.

    PSDs are one-sided over the band [0, 1/(2 tc)] implied by the
    correlation time tc, so each channel's variance is psd / (2 tc).
    """

    response_psd: float = 0.0  # (m/s)^2/Hz on each velocity channel
    force_psd: float = 0.0  # N^2/Hz on the recorded force
    correlation_time: float = 0.5e-3  # s
    seed: int = 0

    def __post_init__(self):
        if self.response_psd < 0 or self.force_psd < 0:
            raise RigError("noise PSDs must be non-negative")
        if self.correlation_time <= 0:
            raise RigError("correlation time must be positive")


class NoiseStream:
    """Zero-order-hold normal noise stream with set PSD and correlation time.

    Samples are drawn once per hold interval and repeated, emulating
    band-limited white noise at the configured one-sided PSD.
    """

    def __init__(self, psd: float, correlation_time: float, dt: float, seed: int):
        self.sigma = np.sqrt(psd / (2.0 * correlation_time)) if psd > 0 else 0.0
        self.hold = max(int(round(correlation_time / dt)), 1)
        self.rng = np.random.default_rng(seed)
        self._count = 0
        self._value = 0.0

    def sample(self) -> float:
        if self.sigma == 0.0:
            return 0.0
        if self._count % self.hold == 0:
            self._value = self.sigma * self.rng.standard_normal()
        self._count += 1
        return self._value

    def block(self, n: int) -> np.ndarray:
        """Next ``n`` samples as an array."""
        if self.sigma == 0.0:
            self._count += n
            return np.zeros(n)
        out = np.empty(n)
        for i in range(n):
            out[i] = self.sample()
        return out


def noise_stream(config: NoiseConfig, dt: float, n: int, channel: int = 0) -> np.ndarray:
    """Deterministic noise block for channel index ``channel``."""
    psd = config.response_psd if channel >= 0 else config.force_psd
    stream = NoiseStream(psd, config.correlation_time, dt, config.seed + 7919 * (channel + 2))
    return stream.block(n)
