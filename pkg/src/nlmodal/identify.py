"""Amplitude-dependent modal properties from steady-state records.

The pipeline mirrors what an experimenter does: fit Fourier coefficients of
the measured channels against the estimated fundamental frequency, estimate
the reduced mass matrix from low-level linear mode shapes by pseudo-inverse,
normalize the fundamental deflection shape to the modal amplitude, and get
the damping ratio from the active power of the fundamental force component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IdentificationError(Exception):
    """Raised when a record cannot be reduced to a modal point."""


@dataclass
class SensorModalSet:
    """Sensor-subset linear modal model used for identification and mfb.

    ``phi_exp`` is N_exp x N_m (mass-normalized rows at the sensor DOFs),
    ``m_exp`` the pseudo-inverse mass estimate, ``sensor_dofs`` the model DOF
    behind each sensor row.
    """

    phi_exp: np.ndarray
    m_exp: np.ndarray
    sensor_dofs: np.ndarray

    @property
    def n_sensors(self) -> int:
        return self.phi_exp.shape[0]

    @property
    def n_modes(self) -> int:
        return self.phi_exp.shape[1]

    def sensor_index(self, dof: int) -> int:
        where = np.where(self.sensor_dofs == dof)[0]
        if len(where) == 0:
            raise IdentificationError(f"DOF {dof} is not instrumented")
        return int(where[0])


@dataclass
class IdentifiedModalPoint:
    """One identified level: frequency, damping, amplitude and shape."""

    omega: float
    zeta: float
    amplitude: float
    shape: np.ndarray  # complex, mass-normalized, at sensor DOFs
    coeffs: np.ndarray  # complex (Nh+1, n_sensors) displacement coefficients
    force_fund: complex
    tip_amplitude: float
    level: float = np.nan
    flags: tuple = ()


def estimate_mass_matrix(phi_exp: np.ndarray) -> np.ndarray:
    """Mass-matrix estimate M_exp = (Phi^T)^+ Phi^+ from identified shapes.

    Symmetric positive semidefinite with rank equal to the number of modes;
    satisfies Phi^T M_exp Phi = I for full-column-rank Phi.
    """
    phi_exp = np.asarray(phi_exp, dtype=float)
    n_exp, n_m = phi_exp.shape
    if n_exp < n_m:
        raise IdentificationError(
            f"need at least as many sensors ({n_exp}) as modes ({n_m})"
        )
    s = np.linalg.svd(phi_exp, compute_uv=False)
    if s[-1] < 1e-10 * s[0]:
        # name the offending columns: those whose removal restores conditioning
        bad = []
        for j in range(n_m):
            rest = np.delete(phi_exp, j, axis=1)
            sr = np.linalg.svd(rest, compute_uv=False)
            if sr[-1] > 1e-10 * sr[0]:
                bad.append(j + 1)
        raise IdentificationError(
            f"mode shape matrix is rank deficient; dependent columns: {bad or 'all'}"
        )
    pinv = np.linalg.pinv(phi_exp)
    m_exp = pinv.T @ pinv
    return 0.5 * (m_exp + m_exp.T)


def make_sensor_set(basis, sensor_dofs) -> SensorModalSet:
    """Sensor-subset modal set from a full :class:`~nlmodal.beam.ModalBasis`."""
    sensor_dofs = np.asarray(sensor_dofs)
    phi_exp = basis.shapes[sensor_dofs, :]
    return SensorModalSet(
        phi_exp=phi_exp, m_exp=estimate_mass_matrix(phi_exp), sensor_dofs=sensor_dofs
    )


def fourier_coeffs(
    signals: np.ndarray, times: np.ndarray, omega: float, n_harmonics: int
) -> np.ndarray:
    """Least-squares harmonic fit of sampled channels.

    Regressors are 1, cos(n w t), sin(n w t) for n = 1..Nh, so windows need
    not span integer periods. Returns complex (Nh+1, n_channels) in the
    convention x(t) = Re{sum c_n exp(i n w t)}.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if signals.shape[0] == len(times) and signals.ndim == 2:
        pass
    elif signals.shape[1] == len(times):
        signals = signals.T
    else:
        raise IdentificationError("signal/time length mismatch")
    n = np.arange(1, n_harmonics + 1)
    phase = np.outer(times, n) * omega
    A = np.hstack([np.ones((len(times), 1)), np.cos(phase), np.sin(phase)])
    sol, _, rank, _ = np.linalg.lstsq(A, signals, rcond=None)
    if rank < A.shape[1]:
        raise IdentificationError(
            "ill-conditioned harmonic regressors: frequency estimate or "
            "window length is unusable"
        )
    coeffs = np.empty((n_harmonics + 1, signals.shape[1]), dtype=complex)
    coeffs[0] = sol[0]
    coeffs[1:] = sol[1 : n_harmonics + 1] - 1j * sol[n_harmonics + 1 :]
    return coeffs


def refine_frequency(
    signal: np.ndarray,
    times: np.ndarray,
    omega0: float,
    bracket: float = 0.005,
    tol: float = 1e-10,
) -> float:
    """Golden-section refinement of the fundamental frequency estimate.

    Maximizes the magnitude of the fundamental LSQ coefficient of ``signal``
    over omega0 * (1 +- bracket); FFT bin resolution on 10-period windows is
    far too coarse for damping extraction.
    """
    signal = np.asarray(signal, dtype=float)

    def amp(w):
        return abs(fourier_coeffs(signal[:, None], times, w, 1)[1, 0])

    lo, hi = omega0 * (1 - bracket), omega0 * (1 + bracket)
    invphi = (np.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = amp(c), amp(d)
    while (b - a) > tol * omega0:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = amp(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = amp(d)
    return 0.5 * (a + b)


def mac(shape_a: np.ndarray, shape_b: np.ndarray) -> float:
    """Modal assurance criterion between two (possibly complex) shapes."""
    num = abs(np.vdot(shape_a, shape_b)) ** 2
    den = float(np.real(np.vdot(shape_a, shape_a)) * np.real(np.vdot(shape_b, shape_b)))
    return num / den if den > 0 else 0.0


def extract_modal_point(
    velocity_window: np.ndarray,
    force_window: np.ndarray,
    times: np.ndarray,
    omega: float,
    sensors: SensorModalSet,
    exciter_dof: int,
    n_harmonics: int = 5,
    refine: bool = True,
    amplitude_floor: float = 1e-14,
) -> IdentifiedModalPoint:
    """Identify one modal point from a steady periodic window.

    ``velocity_window`` is (n_samples, n_sensors) of measured velocities,
    ``force_window`` the measured excitation force. Displacement
    coefficients follow from the velocity fit (x_n = v_n / (i n w)); the
    damping ratio comes from the active power of the fundamental force and
    drive-point response, zeta = Re{i w x_k1 conj(f1)} / (2 w^3 a^2).
    """
    velocity_window = np.asarray(velocity_window, dtype=float)
    force_window = np.asarray(force_window, dtype=float)
    k_sensor = sensors.sensor_index(exciter_dof)
    if refine:
        omega = refine_frequency(velocity_window[:, k_sensor], times, omega)
    v_coeffs = fourier_coeffs(velocity_window, times, omega, n_harmonics)
    f_coeffs = fourier_coeffs(force_window[:, None], times, omega, n_harmonics)
    n = np.arange(1, n_harmonics + 1)[:, None]
    x_coeffs = np.zeros_like(v_coeffs)
    x_coeffs[1:] = v_coeffs[1:] / (1j * n * omega)

    x1 = x_coeffs[1]
    f1 = complex(f_coeffs[1, 0])
    a2 = float(np.real(np.conj(x1) @ (sensors.m_exp @ x1)))
    if a2 <= amplitude_floor**2:
        raise IdentificationError("response amplitude below the identification floor")
    a = np.sqrt(a2)
    xk1 = x1[k_sensor]
    zeta = float(np.real(1j * omega * xk1 * np.conj(f1)) / (2.0 * omega**3 * a2))
    flags = ()
    if zeta <= 0:
        flags = ("nonpositive_zeta",)
    tip_idx = int(np.argmax(sensors.sensor_dofs))
    # records start at arbitrary instants: pin the shape's global phase to the
    # drive point so shapes from different levels are comparable/interpolable
    shape = x1 / a
    if abs(shape[k_sensor]) > 0:
        shape = shape * np.exp(-1j * np.angle(shape[k_sensor]))
    return IdentifiedModalPoint(
        omega=omega,
        zeta=zeta,
        amplitude=a,
        shape=shape,
        coeffs=x_coeffs,
        force_fund=f1,
        tip_amplitude=float(abs(x1[tip_idx])),
        flags=flags,
    )
