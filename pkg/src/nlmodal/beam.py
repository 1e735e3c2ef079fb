"""Finite-element cantilever beam with modal damping and a dry-friction element.

The specimen is a clamped-free Euler-Bernoulli beam discretized with 2-node
Hermite elements (translation + rotation per node). A grounded elastic
Coulomb (Jenkins) element can be attached to the transversal DOF of any free
node. Linear damping is constructed as modal damping on a chosen linearized
limit case of the friction element (elastic stick by default, since that is
the small-amplitude linearization an experimenter would identify at low
level).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh


class ModelError(Exception):
    """Raised when a structural model cannot be built or solved."""


@dataclass(frozen=True)
class BeamParams:
    """Physical description of the friction-damped cantilever specimen.

    All quantities in SI units. ``modal_damping`` lists per-mode damping
    ratios starting at mode 1; modes beyond the list take
    ``modal_damping_higher``.
    """

    youngs_modulus: float = 210e9
    density: float = 7830.0
    length: float = 0.7
    height: float = 0.04
    thickness: float = 0.06
    n_elements: int = 7
    tangential_stiffness: float = 8e6
    slip_limit: float = 30.0
    friction_node: int = 3
    modal_damping: tuple = (0.003, 0.003, 0.003)
    modal_damping_higher: float = 0.01
    damping_basis: str = "stick"

    def __post_init__(self):
        positive = {
            "youngs_modulus": self.youngs_modulus,
            "density": self.density,
            "length": self.length,
            "height": self.height,
            "thickness": self.thickness,
            "tangential_stiffness": self.tangential_stiffness,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ModelError(f"{name} must be strictly positive, got {value}")
        if self.slip_limit < 0:
            raise ModelError("slip_limit must be non-negative")
        if self.n_elements < 1:
            raise ModelError("n_elements must be >= 1")
        if not 1 <= self.friction_node <= self.n_elements:
            raise ModelError(
                f"friction_node must lie in 1..{self.n_elements}, got {self.friction_node}"
            )
        if self.damping_basis not in ("stick", "slip"):
            raise ModelError("damping_basis must be 'stick' or 'slip'")
        if any(z < 0 for z in self.modal_damping) or self.modal_damping_higher < 0:
            raise ModelError("damping ratios must be non-negative")

    @property
    def area(self) -> float:
        return self.height * self.thickness

    @property
    def second_moment(self) -> float:
        # Bending across the 'height' dimension: I = thickness * height^3 / 12.
        return self.thickness * self.height**3 / 12.0

    def damping_ratio(self, mode_index: int) -> float:
        """Damping ratio of 1-based ``mode_index``."""
        if mode_index <= len(self.modal_damping):
            return self.modal_damping[mode_index - 1]
        return self.modal_damping_higher

    def to_dict(self) -> dict:
        return {
            "youngs_modulus_pa": self.youngs_modulus,
            "density_kg_m3": self.density,
            "length_m": self.length,
            "height_m": self.height,
            "thickness_m": self.thickness,
            "n_elements": self.n_elements,
            "tangential_stiffness_n_m": self.tangential_stiffness,
            "slip_limit_n": self.slip_limit,
            "friction_node": self.friction_node,
            "modal_damping": list(self.modal_damping),
            "modal_damping_higher": self.modal_damping_higher,
            "damping_basis": self.damping_basis,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BeamParams":
        known = {
            "youngs_modulus_pa": "youngs_modulus",
            "density_kg_m3": "density",
            "length_m": "length",
            "height_m": "height",
            "thickness_m": "thickness",
            "n_elements": "n_elements",
            "tangential_stiffness_n_m": "tangential_stiffness",
            "slip_limit_n": "slip_limit",
            "friction_node": "friction_node",
            "modal_damping": "modal_damping",
            "modal_damping_higher": "modal_damping_higher",
            "damping_basis": "damping_basis",
        }
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ModelError(f"unknown beam parameter key: {key}")
            if key == "modal_damping":
                value = tuple(value)
            kwargs[known[key]] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class ModalBasis:
    """Mass-normalized linear modes with attached damping ratios.

    ``shapes`` is N x n_modes with columns phi_i satisfying
    Phi^T M Phi = I and Phi^T K Phi = diag(omega_i^2).
    """

    frequencies: np.ndarray
    damping_ratios: np.ndarray
    shapes: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.shapes.shape[1]

    def shape_at(self, dof: int, mode_index: int) -> float:
        """Entry of 1-based ``mode_index`` at ``dof``."""
        return float(self.shapes[dof, mode_index - 1])


@dataclass
class BeamModel:
    """Assembled matrices of the clamped beam plus the friction attachment.

    ``stiffness`` is the bare elastic beam (friction element not included);
    the Jenkins element with ``tangential_stiffness``/``slip_limit`` acts on
    ``friction_dof``. ``friction_dof is None`` marks a purely linear model.
    """

    mass: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    params: BeamParams
    friction_dof: int | None
    tangential_stiffness: float
    slip_limit: float
    node_coords: np.ndarray = field(default=None)

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    def translation_dof(self, node: int) -> int:
        """Transversal DOF index for 1-based free node number."""
        if not 1 <= node <= self.params.n_elements:
            raise ModelError(f"node must be in 1..{self.params.n_elements}")
        return 2 * (node - 1)

    @property
    def tip_dof(self) -> int:
        return self.translation_dof(self.params.n_elements)

    @property
    def translation_dofs(self) -> np.ndarray:
        return np.arange(0, self.n_dof, 2)

    def stick_stiffness(self) -> np.ndarray:
        """Elastic-stick stiffness: friction spring permanently engaged."""
        K = self.stiffness.copy()
        if self.friction_dof is not None:
            K[self.friction_dof, self.friction_dof] += self.tangential_stiffness
        return K

    def export_matrices(self, path) -> None:
        """Dump dense matrices to a JSON debug file."""
        payload = {
            "n_dof": self.n_dof,
            "mass": self.mass.tolist(),
            "stiffness": self.stiffness.tolist(),
            "damping": self.damping.tolist(),
            "friction_dof": self.friction_dof,
            "tangential_stiffness": self.tangential_stiffness,
            "slip_limit": self.slip_limit,
            "params": self.params.to_dict(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def _element_matrices(EI: float, rhoA: float, h: float):
    """Stiffness and consistent mass of one Hermite beam element of length h."""
    k = (EI / h**3) * np.array(
        [
            [12.0, 6.0 * h, -12.0, 6.0 * h],
            [6.0 * h, 4.0 * h**2, -6.0 * h, 2.0 * h**2],
            [-12.0, -6.0 * h, 12.0, -6.0 * h],
            [6.0 * h, 2.0 * h**2, -6.0 * h, 4.0 * h**2],
        ]
    )
    m = (rhoA * h / 420.0) * np.array(
        [
            [156.0, 22.0 * h, 54.0, -13.0 * h],
            [22.0 * h, 4.0 * h**2, 13.0 * h, -3.0 * h**2],
            [54.0, 13.0 * h, 156.0, -22.0 * h],
            [-13.0 * h, -3.0 * h**2, -22.0 * h, 4.0 * h**2],
        ]
    )
    return k, m


def _modes_of(M: np.ndarray, K: np.ndarray, n_modes: int):
    try:
        evals, vecs = eigh(K, M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy rarely fails here
        raise ModelError(f"eigenvalue solve failed: {exc}") from exc
    evals = evals[:n_modes]
    vecs = vecs[:, :n_modes]
    if np.any(evals <= 0):
        raise ModelError("non-positive eigenvalue: model is singular or unclamped")
    omegas = np.sqrt(evals)
    # eigh returns M-orthonormal vectors for the generalized symmetric problem
    return omegas, vecs


def fix_shape_sign(shapes: np.ndarray, reference_dof: int) -> np.ndarray:
    """Flip mode columns so the entry at ``reference_dof`` is non-negative."""
    signs = np.sign(shapes[reference_dof, :])
    signs[signs == 0] = 1.0
    return shapes * signs


def assemble_beam(params: BeamParams) -> BeamModel:
    """Assemble the clamped Euler-Bernoulli beam with friction attachment.

    The damping matrix realizes the per-mode ratios of ``params`` exactly on
    the mass-normalized modes of the ``params.damping_basis`` limit case:
    D = M Phi diag(2 zeta_i omega_i) Phi^T M over all retained modes.

    Returns
    -------
    BeamModel
        Model with 2 DOFs per free node (translation, rotation), clamp
        eliminated.
    """
    n_el = params.n_elements
    h = params.length / n_el
    EI = params.youngs_modulus * params.second_moment
    rhoA = params.density * params.area
    n_free = 2 * n_el

    k_el, m_el = _element_matrices(EI, rhoA, h)
    K = np.zeros((2 * (n_el + 1), 2 * (n_el + 1)))
    M = np.zeros_like(K)
    for e in range(n_el):
        sl = slice(2 * e, 2 * e + 4)
        K[sl, sl] += k_el
        M[sl, sl] += m_el
    # clamp: drop translation+rotation of node 0
    K = K[2:, 2:]
    M = M[2:, 2:]

    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise ModelError("degenerate geometry: singular mass matrix")

    friction_dof = 2 * (params.friction_node - 1)
    model = BeamModel(
        mass=M,
        stiffness=K,
        damping=np.zeros_like(K),
        params=params,
        friction_dof=friction_dof,
        tangential_stiffness=params.tangential_stiffness,
        slip_limit=params.slip_limit,
        node_coords=np.arange(1, n_el + 1) * h,
    )

    K_damp = model.stick_stiffness() if params.damping_basis == "stick" else K
    omegas, shapes = _modes_of(M, K_damp, n_free)
    zetas = np.array([params.damping_ratio(i + 1) for i in range(n_free)])
    model.damping = M @ shapes @ np.diag(2.0 * zetas * omegas) @ shapes.T @ M
    model.damping = 0.5 * (model.damping + model.damping.T)
    return model


def linear_modes(model: BeamModel, n_modes: int) -> ModalBasis:
    """Mass-normalized modes of (M, K) with the configured damping ratios.

    ``model.stiffness`` is used as-is: pass a limit model from
    :func:`limit_models` to obtain stick or slip modes. Shape signs follow
    :func:`fix_shape_sign` with the tip translation as reference.
    """
    if n_modes > model.n_dof:
        raise ModelError(f"n_modes={n_modes} exceeds {model.n_dof} DOFs")
    omegas, shapes = _modes_of(model.mass, model.stiffness, n_modes)
    shapes = fix_shape_sign(shapes, model.tip_dof)
    zetas = np.array([model.params.damping_ratio(i + 1) for i in range(n_modes)])
    return ModalBasis(frequencies=omegas, damping_ratios=zetas, shapes=shapes)


def limit_models(model: BeamModel) -> tuple[BeamModel, BeamModel]:
    """Linear limit cases of the friction element: (elastic stick, full slip).

    Stick folds the tangential spring permanently into the stiffness; slip
    removes the element. Both retain the same mass and damping matrices.
    """
    if model.friction_dof is None:
        raise ModelError("model has no friction element")
    stick = BeamModel(
        mass=model.mass,
        stiffness=model.stick_stiffness(),
        damping=model.damping,
        params=model.params,
        friction_dof=None,
        tangential_stiffness=0.0,
        slip_limit=0.0,
        node_coords=model.node_coords,
    )
    slip = BeamModel(
        mass=model.mass,
        stiffness=model.stiffness.copy(),
        damping=model.damping,
        params=model.params,
        friction_dof=None,
        tangential_stiffness=0.0,
        slip_limit=0.0,
        node_coords=model.node_coords,
    )
    return stick, slip


def cantilever_analytic_frequencies(params: BeamParams, n_modes: int) -> np.ndarray:
    """Analytic Euler-Bernoulli cantilever frequencies (rad/s), no friction.

    Roots beta_n of cosh(b)cos(b) = -1 give omega_n = (beta_n/l)^2
    sqrt(EI/rhoA).
    """
    from scipy.optimize import brentq

    roots = []
    fun = lambda b: np.cosh(b) * np.cos(b) + 1.0
    guesses = [(1.5, 2.5), (4.0, 5.5), (7.0, 8.5), (10.0, 12.0), (13.5, 15.0)]
    for lo, hi in guesses[:n_modes]:
        roots.append(brentq(fun, lo, hi))
    beta = np.array(roots)
    EI = params.youngs_modulus * params.second_moment
    rhoA = params.density * params.area
    return (beta / params.length) ** 2 * np.sqrt(EI / rhoA)
