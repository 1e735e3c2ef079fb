"""Reference nonlinear modes via multi-harmonic balance with AFT.

A nonlinear mode is the family of periodic solutions of the surrogate system
M x'' + g(x, x') - 2 omega zeta M x' = 0, parametrized by the modal
amplitude a with a^2 = x1^H M x1. The solver balances harmonics 0..Nh with
the friction force evaluated by alternating frequency-time (cycling the
Jenkins element to its steady hysteresis loop), closes the system with the
amplitude constraint and a phase anchor, and continues the solution over
log-spaced amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, lu_factor, lu_solve

from .friction import cycle_jenkins_to_steady, jenkins_force_series

DEFAULT_HARMONICS = 13


class ConvergenceError(Exception):
    """Newton or continuation failure; carries the last good point if any."""

    def __init__(self, message, last_point=None, partial_curve=None):
        super().__init__(message)
        self.last_point = last_point
        self.partial_curve = partial_curve


@dataclass
class HarmonicSolution:
    """Multi-harmonic motion x(t) = Re{sum_n coeffs[n] exp(i n omega t)}.

    ``coeffs`` is complex (Nh+1, N); row 0 is the static term (real).
    """

    omega: float
    zeta: float
    coeffs: np.ndarray

    @property
    def n_harmonics(self) -> int:
        return self.coeffs.shape[0] - 1

    def displacement_samples(self, n_time: int) -> np.ndarray:
        """(n_time, N) displacement samples over one period."""
        return coeffs_to_samples(self.coeffs, n_time)

    def velocity_samples(self, n_time: int) -> np.ndarray:
        n = np.arange(self.coeffs.shape[0])[:, None]
        vel_coeffs = 1j * n * self.omega * self.coeffs
        return coeffs_to_samples(vel_coeffs, n_time)


@dataclass
class BackbonePoint:
    """One amplitude level of a nonlinear mode."""

    omega: float
    zeta: float
    amplitude: float
    shape: np.ndarray  # complex mass-normalized fundamental, x1 / a
    tip_amplitude: float
    harmonics: HarmonicSolution


@dataclass
class BackboneCurve:
    """Ordered amplitude sweep of one nonlinear mode."""

    points: list
    mode_index: int

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])

    @property
    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.points])

    @property
    def zetas(self) -> np.ndarray:
        return np.array([p.zeta for p in self.points])

    @property
    def tip_amplitudes(self) -> np.ndarray:
        return np.array([p.tip_amplitude for p in self.points])


def default_time_samples(n_harmonics: int) -> int:
    """AFT grid size: next power of two above 8x the harmonic count."""
    return int(2 ** np.ceil(np.log2(8 * n_harmonics)))


def coeffs_to_samples(coeffs: np.ndarray, n_time: int) -> np.ndarray:
    """Synthesize time samples on the uniform period grid from coefficients."""
    coeffs = np.atleast_2d(coeffs)
    n_h = coeffs.shape[0] - 1
    if n_time < 2 * n_h + 2:
        raise ValueError("n_time too small for harmonic content")
    spec = np.zeros((n_time // 2 + 1, coeffs.shape[1]), dtype=complex)
    spec[0] = coeffs[0] * n_time
    spec[1 : n_h + 1] = coeffs[1:] * (n_time / 2.0)
    return np.fft.irfft(spec, n=n_time, axis=0)


def samples_to_coeffs(samples: np.ndarray, n_harmonics: int) -> np.ndarray:
    """Fourier coefficients (our convention) of periodic samples."""
    samples = np.asarray(samples)
    squeeze = samples.ndim == 1
    if squeeze:
        samples = samples[:, None]
    n_time = samples.shape[0]
    spec = np.fft.rfft(samples, axis=0)
    out = np.empty((n_harmonics + 1, samples.shape[1]), dtype=complex)
    out[0] = spec[0].real / n_time
    out[1:] = spec[1 : n_harmonics + 1] * (2.0 / n_time)
    return out[:, 0] if squeeze else out


def aft_force(
    harmonics: HarmonicSolution, model, n_time_samples: int | None = None
) -> np.ndarray:
    """Fourier coefficients of g(x, x') for a multi-harmonic motion.

    The linear terms K x + D x' are exact per harmonic; the Jenkins force is
    evaluated in the time domain with the hysteresis loop cycled to
    steady state (closure tolerance 1e-10 * muN).
    """
    coeffs = harmonics.coeffs
    n_h = harmonics.n_harmonics
    if n_time_samples is None:
        n_time_samples = default_time_samples(max(n_h, 1))
    if n_time_samples < 4 * n_h:
        raise ValueError("n_time_samples must be at least 4x the harmonic count")
    n = np.arange(n_h + 1)[:, None]
    g_hat = (coeffs @ model.stiffness.T) + (
        (1j * n * harmonics.omega) * coeffs
    ) @ model.damping.T
    if model.friction_dof is not None and model.slip_limit > 0:
        xf = coeffs_to_samples(coeffs[:, model.friction_dof][:, None], n_time_samples)
        f_loop, _ = cycle_jenkins_to_steady(
            xf[:, 0], model.tangential_stiffness, model.slip_limit
        )
        g_hat[:, model.friction_dof] += samples_to_coeffs(f_loop, n_h)
    return g_hat


def _friction_coeff_jacobian(cf, k_t, mu_n, n_time, n_h, step):
    """d(force coeffs)/d(displacement coeffs) for the scalar Jenkins AFT.

    Real layout [c0, Re c1, Im c1, ...]; finite differences batched through
    one vectorized hysteresis march.
    """
    dim = 2 * n_h + 1
    batch = np.tile(cf[:, None], (1, dim + 1)).astype(complex)
    for j in range(dim):
        if j == 0:
            batch[0, 1 + j] += step
        else:
            n_idx = (j + 1) // 2
            batch[n_idx, 1 + j] += step if j % 2 == 1 else 1j * step
    xf = coeffs_to_samples(batch, n_time)
    f_loops, _ = cycle_jenkins_to_steady(xf, k_t, mu_n)
    fc = samples_to_coeffs(f_loops, n_h)
    base = fc[:, 0]

    def to_real(col):
        out = np.empty(dim)
        out[0] = col[0].real
        out[1::2] = col[1:].real
        out[2::2] = col[1:].imag
        return out

    base_r = to_real(base)
    jac = np.empty((dim, dim))
    for j in range(dim):
        jac[:, j] = (to_real(fc[:, 1 + j]) - base_r) / step
    return jac, base


class EpmcSystem:
    """Residual and Jacobian of the EPMC harmonic-balance equations.

    Unknown layout: [x0 (N); Re x1, Im x1; ...; Re xNh, Im xNh; omega; zeta].
    Closure: modal amplitude pinned to the target and the imaginary part of
    the fundamental at the anchor DOF pinned to zero.
    """

    def __init__(self, model, n_harmonics, n_time=None, anchor_dof=None):
        self.model = model
        self.n_h = n_harmonics
        self.n_time = n_time or default_time_samples(n_harmonics)
        self.n_dof = model.n_dof
        self.anchor = model.tip_dof if anchor_dof is None else anchor_dof
        self.size = self.n_dof * (2 * n_harmonics + 1) + 2

    def pack(self, coeffs, omega, zeta):
        n_d = self.n_dof
        u = np.empty(self.size)
        u[:n_d] = coeffs[0].real
        for n in range(1, self.n_h + 1):
            base = n_d + 2 * n_d * (n - 1)
            u[base : base + n_d] = coeffs[n].real
            u[base + n_d : base + 2 * n_d] = coeffs[n].imag
        u[-2] = omega
        u[-1] = zeta
        return u

    def unpack(self, u):
        n_d = self.n_dof
        coeffs = np.zeros((self.n_h + 1, n_d), dtype=complex)
        coeffs[0] = u[:n_d]
        for n in range(1, self.n_h + 1):
            base = n_d + 2 * n_d * (n - 1)
            coeffs[n] = u[base : base + n_d] + 1j * u[base + n_d : base + 2 * n_d]
        return coeffs, u[-2], u[-1]

    def residual(self, u, a_target):
        coeffs, omega, zeta = self.unpack(u)
        sol = HarmonicSolution(omega=omega, zeta=zeta, coeffs=coeffs)
        g_hat = aft_force(sol, self.model, self.n_time)
        M = self.model.mass
        n_d = self.n_dof
        r = np.empty(self.size)
        r[:n_d] = g_hat[0].real
        for n in range(1, self.n_h + 1):
            cn = coeffs[n]
            rn = g_hat[n] - (n * omega) ** 2 * (M @ cn) - 2j * zeta * n * omega**2 * (
                M @ cn
            )
            base = n_d + 2 * n_d * (n - 1)
            r[base : base + n_d] = rn.real
            r[base + n_d : base + 2 * n_d] = rn.imag
        x1 = coeffs[1]
        amp2 = float(np.real(np.conj(x1) @ (M @ x1)))
        scale = self._force_scale(a_target)
        r[: self.size - 2] /= scale
        r[-2] = amp2 / a_target**2 - 1.0
        r[-1] = x1[self.anchor].imag / a_target
        return r

    def _force_scale(self, a_target):
        # typical modal inertial force level at this amplitude
        return max(self._omega_ref**2 * a_target, 1e-300)

    def jacobian(self, u, a_target):
        coeffs, omega, zeta = self.unpack(u)
        M, K, D = self.model.mass, self.model.stiffness, self.model.damping
        n_d, n_h = self.n_dof, self.n_h
        J = np.zeros((self.size, self.size))
        scale = self._force_scale(a_target)

        J[:n_d, :n_d] = K
        for n in range(1, n_h + 1):
            base = n_d + 2 * n_d * (n - 1)
            re_a = K - (n * omega) ** 2 * M
            im_a = n * omega * D - 2 * n * omega**2 * zeta * M
            J[base : base + n_d, base : base + n_d] = re_a
            J[base : base + n_d, base + n_d : base + 2 * n_d] = -im_a
            J[base + n_d : base + 2 * n_d, base : base + n_d] = im_a
            J[base + n_d : base + 2 * n_d, base + n_d : base + 2 * n_d] = re_a
            cn = coeffs[n]
            d_om = (
                -2 * n**2 * omega * (M @ cn)
                + 1j * n * (D @ cn)
                - 4j * n * omega * zeta * (M @ cn)
            )
            d_ze = -2j * n * omega**2 * (M @ cn)
            J[base : base + n_d, -2] = d_om.real
            J[base + n_d : base + 2 * n_d, -2] = d_om.imag
            J[base : base + n_d, -1] = d_ze.real
            J[base + n_d : base + 2 * n_d, -1] = d_ze.imag

        fdof = self.model.friction_dof
        if fdof is not None and self.model.slip_limit > 0:
            cf = coeffs[:, fdof].copy()
            x_slip = self.model.slip_limit / self.model.tangential_stiffness
            step = 1e-7 * max(np.max(np.abs(cf)), 1e-3 * x_slip)
            jac_s, _ = _friction_coeff_jacobian(
                cf,
                self.model.tangential_stiffness,
                self.model.slip_limit,
                self.n_time,
                n_h,
                step,
            )
            idx = self._scalar_indices(fdof)
            J[np.ix_(idx, idx)] += jac_s

        J[: self.size - 2, :] /= scale

        x1 = coeffs[1]
        base1 = n_d
        J[-2, base1 : base1 + n_d] = 2.0 * (M @ x1.real) / a_target**2
        J[-2, base1 + n_d : base1 + 2 * n_d] = 2.0 * (M @ x1.imag) / a_target**2
        J[-1, base1 + n_d + self.anchor] = 1.0 / a_target
        return J

    def _scalar_indices(self, dof):
        """Rows/cols of the real unknown vector holding the given DOF."""
        idx = [dof]
        for n in range(1, self.n_h + 1):
            base = self.n_dof + 2 * self.n_dof * (n - 1)
            idx.extend((base + dof, base + self.n_dof + dof))
        return np.array(idx)

    def solve(self, u0, a_target, tol=1e-8, max_iter=30):
        u = u0.copy()
        r = self.residual(u, a_target)
        norm = np.max(np.abs(r))
        for _ in range(max_iter):
            if norm < tol:
                return u, norm
            J = self.jacobian(u, a_target)
            try:
                du = lu_solve(lu_factor(J), -r)
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"singular Jacobian: {exc}")
            step = 1.0
            for _ in range(6):
                u_new = u + step * du
                r_new = self.residual(u_new, a_target)
                norm_new = np.max(np.abs(r_new))
                if norm_new < norm or norm_new < tol:
                    break
                step *= 0.5
            else:
                raise ConvergenceError("line search stalled")
            u, r, norm = u_new, r_new, norm_new
        if norm < tol:
            return u, norm
        raise ConvergenceError(f"Newton did not converge, residual {norm:.3e}")


def epmc_residual(system: EpmcSystem, coeffs, omega, zeta, a_target) -> np.ndarray:
    """Scaled EPMC residual for explicit unknowns (thin wrapper for checks)."""
    return system.residual(system.pack(coeffs, omega, zeta), a_target)


def _point_from_solution(system, u, model):
    coeffs, omega, zeta = system.unpack(u)
    x1 = coeffs[1]
    a = float(np.sqrt(np.real(np.conj(x1) @ (model.mass @ x1))))
    return BackbonePoint(
        omega=omega,
        zeta=zeta,
        amplitude=a,
        shape=x1 / a,
        tip_amplitude=float(np.abs(x1[model.tip_dof])),
        harmonics=HarmonicSolution(omega=omega, zeta=zeta, coeffs=coeffs),
    )


def solve_backbone(
    model,
    mode_index: int,
    amplitude_range: tuple,
    n_harmonics: int = DEFAULT_HARMONICS,
    points_per_decade: int = 20,
    tol: float = 1e-8,
    n_time: int | None = None,
    min_step_decades: float = 1e-3,
) -> BackboneCurve:
    """Continue the EPMC nonlinear mode over log-spaced modal amplitudes.

    The first point is initialized from the elastic-stick linear mode, which
    is the small-amplitude linearization; ``amplitude_range[0]`` must keep the
    friction node below its stick limit. Newton failures trigger bisection of
    the amplitude step; falling below ``min_step_decades`` aborts with the
    partial curve attached to the raised :class:`ConvergenceError`.
    """
    from .beam import linear_modes, limit_models

    a_min, a_max = amplitude_range
    if not 0 < a_min < a_max:
        raise ValueError("need 0 < a_min < a_max")
    stick, _ = limit_models(model)
    basis = linear_modes(stick, mode_index)
    omega0 = basis.frequencies[mode_index - 1]
    zeta0 = basis.damping_ratios[mode_index - 1]
    phi = basis.shapes[:, mode_index - 1]
    if model.slip_limit > 0:
        x_slip = model.slip_limit / model.tangential_stiffness
        if a_min * abs(phi[model.friction_dof]) >= x_slip:
            raise ValueError(
                "a_min drives the friction node past the stick limit; "
                "start the continuation in the linear regime"
            )

    system = EpmcSystem(model, n_harmonics, n_time=n_time)
    system._omega_ref = omega0

    n_dec = np.log10(a_max / a_min)
    n_pts = max(int(np.ceil(n_dec * points_per_decade)) + 1, 2)
    targets = list(np.logspace(np.log10(a_min), np.log10(a_max), n_pts))

    coeffs0 = np.zeros((n_harmonics + 1, model.n_dof), dtype=complex)
    coeffs0[1] = a_min * phi
    u = system.pack(coeffs0, omega0, zeta0)

    points = []
    a_prev = None
    while targets:
        a_t = targets.pop(0)
        if a_prev is not None:
            coeffs, omega, zeta = system.unpack(u)
            coeffs = coeffs * (a_t / a_prev)
            u_pred = system.pack(coeffs, omega, zeta)
        else:
            u_pred = u
        try:
            u_new, _ = system.solve(u_pred, a_t, tol=tol)
        except ConvergenceError as exc:
            if a_prev is None:
                raise ConvergenceError(
                    f"first backbone point failed: {exc}",
                    partial_curve=BackboneCurve(points, mode_index),
                )
            if np.log10(a_t / a_prev) < min_step_decades:
                raise ConvergenceError(
                    f"continuation stalled near a={a_prev:.3e}: {exc}",
                    last_point=points[-1] if points else None,
                    partial_curve=BackboneCurve(points, mode_index),
                )
            targets.insert(0, a_t)
            targets.insert(0, float(np.sqrt(a_prev * a_t)))
            continue
        u = u_new
        a_prev = a_t
        points.append(_point_from_solution(system, u, model))
    return BackboneCurve(points, mode_index)


def power_balance(point: BackbonePoint, model, n_time: int | None = None) -> dict:
    """Per-cycle energy bookkeeping of a converged EPMC point.

    Trapezoid integration on the AFT time grid of the dissipation by the
    damping matrix and the Jenkins loop versus the injection by the negative
    damping term 2 omega zeta M x'.
    """
    sol = point.harmonics
    n_time = n_time or default_time_samples(sol.n_harmonics)
    dt = 2 * np.pi / sol.omega / n_time
    vel = sol.velocity_samples(n_time)
    diss_d = np.einsum("ti,ij,tj->t", vel, model.damping, vel)
    inject = 2 * sol.omega * point.zeta * np.einsum(
        "ti,ij,tj->t", vel, model.mass, vel
    )
    e_d = float(np.sum(diss_d) * dt)
    e_in = float(np.sum(inject) * dt)
    e_j = 0.0
    if model.friction_dof is not None and model.slip_limit > 0:
        xf = sol.displacement_samples(n_time)[:, model.friction_dof]
        f_loop, _ = cycle_jenkins_to_steady(
            xf, model.tangential_stiffness, model.slip_limit
        )
        x_c = np.append(xf, xf[0])
        f_c = np.append(f_loop, f_loop[0])
        e_j = float(np.trapezoid(f_c, x_c))
    imbalance = abs(e_in - e_d - e_j) / max(abs(e_in), 1e-300)
    return {
        "injected": e_in,
        "dissipated_viscous": e_d,
        "dissipated_friction": e_j,
        "relative_imbalance": imbalance,
    }


def shooting_check(point: BackbonePoint, model, oversample: int = 8) -> float:
    """Periodicity defect of an EPMC point by direct time integration.

    Integrates the surrogate system over one period from the harmonic
    solution's initial state using exact propagation of the stick-limit
    linear part and a zero-order hold of the friction deviation force.
    Returns the dimensionless defect ||z(T) - z(0)|| / ||z_ref||, where
    displacements and velocities are pre-scaled by the orbit's peak
    displacement/velocity norms (the anchor phase pins z(0) to a
    near-zero-velocity state, so the raw state norm would be degenerate).
    """
    sol = point.harmonics
    n_dof = model.n_dof
    n_time = default_time_samples(sol.n_harmonics)
    n_steps = n_time * oversample
    T = 2 * np.pi / sol.omega
    dt = T / n_steps

    K_eff = model.stick_stiffness()
    D_eff = model.damping - 2 * sol.omega * point.zeta * model.mass
    Minv = np.linalg.inv(model.mass)
    A = np.zeros((2 * n_dof, 2 * n_dof))
    A[:n_dof, n_dof:] = np.eye(n_dof)
    A[n_dof:, :n_dof] = -Minv @ K_eff
    A[n_dof:, n_dof:] = -Minv @ D_eff
    Ad = expm(A * dt)
    # ZOH input matrix for the scalar deviation force at the friction DOF
    fdof = model.friction_dof
    has_friction = fdof is not None and model.slip_limit > 0
    if has_friction:
        # friction deviation force sits inside g: enters the RHS negated
        b = np.zeros(2 * n_dof)
        b[n_dof:] = -Minv[:, fdof]
        AB = np.zeros((2 * n_dof + 1, 2 * n_dof + 1))
        AB[: 2 * n_dof, : 2 * n_dof] = A * dt
        AB[: 2 * n_dof, -1] = b * dt
        Bd = expm(AB)[: 2 * n_dof, -1]
        xf_grid = sol.displacement_samples(n_time)[:, fdof]
        _, slider = cycle_jenkins_to_steady(
            xf_grid, model.tangential_stiffness, model.slip_limit
        )
    else:
        slider = 0.0

    x_ref = coeffs_to_samples(sol.coeffs, n_time)
    n = np.arange(sol.coeffs.shape[0])[:, None]
    v_ref = coeffs_to_samples(1j * n * sol.omega * sol.coeffs, n_time)
    x_scale = np.max(np.linalg.norm(x_ref, axis=1))
    v_scale = np.max(np.linalg.norm(v_ref, axis=1))
    z = np.concatenate([x_ref[0], v_ref[0]])
    z0 = z.copy()
    k_t, mu_n = model.tangential_stiffness, model.slip_limit
    w = slider
    try:
        for _ in range(n_steps):
            if has_friction:
                xf = z[fdof]
                trial = k_t * (xf - w)
                if abs(trial) > mu_n:
                    trial = np.sign(trial) * mu_n
                    w = xf - trial / k_t
                f_dev = trial - k_t * xf
                z = Ad @ z + Bd * f_dev
            else:
                z = Ad @ z
            if not np.all(np.isfinite(z)) or np.linalg.norm(z) > 1e9 * (
                np.linalg.norm(z0) + 1e-300
            ):
                raise FloatingPointError
    except FloatingPointError:
        raise ConvergenceError("shooting oracle diverged during integration")
    dz = z - z0
    defect2 = (np.linalg.norm(dz[:n_dof]) / x_scale) ** 2 + (
        np.linalg.norm(dz[n_dof:]) / v_scale
    ) ** 2
    return float(np.sqrt(defect2 / 2.0))
