"""Elastic dry-friction (Jenkins) element and nonlinear force evaluation.

The element is a tangential spring k_t in series with a Coulomb slider that
saturates at the slip limit muN; it is grounded and acts on a single
transversal DOF. The update law is the standard predictor-corrector: a trial
spring force is computed against the frozen slider, and the slider moves
exactly as far as needed to saturate the force at +-muN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class JenkinsState:
    """Internal state of one Jenkins element.

    ``slider`` is the slider position (m); the spring deflection is
    displacement - slider and obeys |k_t * deflection| <= muN.
    """

    slider: float = 0.0

    def copy(self) -> "JenkinsState":
        return JenkinsState(self.slider)


def jenkins_update(
    state: JenkinsState, displacement: float, k_t: float, mu_n: float
) -> tuple[JenkinsState, float]:
    """Advance the Jenkins element to ``displacement`` and return its force.

    Total function: the returned force always satisfies |f| <= muN and the
    updated state keeps the spring deflection within the slip limit.
    """
    trial = k_t * (displacement - state.slider)
    if abs(trial) <= mu_n:
        return JenkinsState(state.slider), trial
    force = np.sign(trial) * mu_n
    slider = displacement - force / k_t if k_t > 0 else state.slider
    return JenkinsState(slider), force


def jenkins_force_series(
    x: np.ndarray, k_t: float, mu_n: float, slider0=0.0
) -> tuple[np.ndarray, np.ndarray]:
    """March the Jenkins law over displacement histories.

    Parameters
    ----------
    x : (n_samples,) or (n_samples, m) ndarray
        Displacement histories; columns are independent elements marched in
        lockstep (used to batch finite-difference AFT Jacobians).
    slider0 : float or (m,) ndarray
        Initial slider position(s).

    Returns
    -------
    forces : ndarray, same shape as ``x``
    slider : float or (m,) ndarray, final slider position(s)
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[:, None]
    n, m = x.shape
    w = np.broadcast_to(np.asarray(slider0, dtype=float), (m,)).copy()
    f = np.empty_like(x)
    if mu_n == 0.0 or k_t == 0.0:
        f[:] = 0.0
        w = x[-1].copy() if k_t > 0 else w
        return (f[:, 0], w[0]) if single else (f, w)
    inv_kt = 1.0 / k_t
    for j in range(n):
        trial = k_t * (x[j] - w)
        over = np.abs(trial) > mu_n
        if over.any():
            s = np.sign(trial[over]) * mu_n
            w[over] = x[j, over] - s * inv_kt
            trial[over] = s
        f[j] = trial
    return (f[:, 0], w[0]) if single else (f, w)


def cycle_jenkins_to_steady(
    x_cycle: np.ndarray,
    k_t: float,
    mu_n: float,
    tol: float = 1e-10,
    max_cycles: int = 50,
) -> tuple[np.ndarray, np.ndarray]:
    """Cycle periodic displacement histories until the hysteresis loop closes.

    ``x_cycle`` is one period of samples, shape (n_samples,) or
    (n_samples, m). Returns the steady force loop and the slider position at
    the top of the converged cycle (sample index 0).

    Raises
    ------
    RuntimeError
        If the loop does not close within ``max_cycles`` (tolerance is
        ``tol * muN`` on the max force change between consecutive cycles).
    """
    x = np.asarray(x_cycle, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[:, None]
    m = x.shape[1]
    w = np.zeros(m)
    if mu_n == 0.0 or k_t == 0.0:
        f = np.zeros_like(x)
        return (f[:, 0], w[0]) if single else (f, w)
    prev = None
    for _ in range(max_cycles):
        w_start = w.copy()
        f, w = jenkins_force_series(x, k_t, mu_n, slider0=w)
        if prev is not None and np.max(np.abs(f - prev)) <= tol * mu_n:
            return (f[:, 0], w_start[0]) if single else (f, w_start)
        prev = f
    raise RuntimeError(
        f"Jenkins hysteresis loop failed to close within {max_cycles} cycles"
    )


def dissipated_energy(x_cycle: np.ndarray, f_cycle: np.ndarray) -> float:
    """Energy dissipated over one closed cycle, trapezoidal loop integral of f dx."""
    x = np.append(x_cycle, x_cycle[0])
    f = np.append(f_cycle, f_cycle[0])
    return float(np.trapezoid(f, x))


def evaluate_g(
    model,
    x: np.ndarray,
    xdot: np.ndarray,
    state: JenkinsState,
) -> tuple[np.ndarray, JenkinsState]:
    """Restoring/damping force g = K x + D xdot + e_f * f_jenkins.

    Advances the friction state to the given displacement and returns the
    updated state alongside the force vector.
    """
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    if x.shape != (model.n_dof,) or xdot.shape != (model.n_dof,):
        raise ValueError(
            f"state dimension mismatch: expected ({model.n_dof},), "
            f"got {x.shape} and {xdot.shape}"
        )
    g = model.stiffness @ x + model.damping @ xdot
    if model.friction_dof is not None:
        state, f = jenkins_update(
            state, x[model.friction_dof], model.tangential_stiffness, model.slip_limit
        )
        g[model.friction_dof] += f
    return g, state
