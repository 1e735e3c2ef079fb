"""Finite-element beam assembly, modal basis and limit cases."""

import numpy as np
import pytest

from nlmodal.beam import (
    BeamParams,
    ModelError,
    assemble_beam,
    cantilever_analytic_frequencies,
    limit_models,
    linear_modes,
)


class TestAssembly:
    def test_table_parameters_give_14_dofs(self, model):
        assert model.n_dof == 14
        assert model.mass.shape == (14, 14)

    def test_matrices_symmetric_and_definite(self, model):
        np.testing.assert_allclose(model.mass, model.mass.T, atol=1e-12)
        np.testing.assert_allclose(model.stiffness, model.stiffness.T, rtol=1e-12)
        assert np.all(np.linalg.eigvalsh(model.mass) > 0)
        assert np.all(np.linalg.eigvalsh(model.stiffness) > 0)  # clamped

    def test_single_element_matches_rayleigh_quotient(self):
        p = BeamParams(n_elements=1, friction_node=1)
        m = assemble_beam(p)
        assert m.n_dof == 2
        w = linear_modes(limit_models(m)[1], 1).frequencies[0]
        # Rayleigh quotient of the same 2-DOF system is exact here
        evals = np.linalg.eigvals(np.linalg.solve(m.mass, m.stiffness))
        w_ref = np.sqrt(np.sort(np.real(evals))[0])
        assert w == pytest.approx(w_ref, rel=1e-10)

    def test_frequencies_match_analytic_cantilever(self, params, model):
        slip = limit_models(model)[1]
        got = linear_modes(slip, 3).frequencies
        ref = cantilever_analytic_frequencies(params, 3)
        assert np.all(np.abs(got - ref) / ref < 0.01)

    def test_mesh_convergence(self, params, basis):
        fine = assemble_beam(BeamParams(**{**params.__dict__, "n_elements": 14}))
        stick_fine, _ = limit_models(fine)
        f_fine = linear_modes(stick_fine, 3).frequencies
        drift = np.abs(f_fine - basis.frequencies) / basis.frequencies
        assert np.all(drift < 0.005)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ModelError):
            BeamParams(youngs_modulus=-1.0)
        with pytest.raises(ModelError):
            BeamParams(n_elements=0)
        with pytest.raises(ModelError):
            BeamParams(friction_node=9)

    def test_config_roundtrip(self, params):
        again = BeamParams.from_dict(params.to_dict())
        assert again == params

    def test_matrix_export(self, model, tmp_path):
        path = tmp_path / "model.json"
        model.export_matrices(path)
        import json

        data = json.loads(path.read_text())
        assert np.allclose(np.array(data["mass"]), model.mass)
        assert data["friction_dof"] == model.friction_dof


class TestModalBasis:
    def test_mass_normalization(self, model, basis):
        gram = basis.shapes.T @ model.mass @ basis.shapes
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-10)

    def test_frequencies_sorted_positive(self, basis):
        assert np.all(basis.frequencies > 0)
        assert np.all(np.diff(basis.frequencies) > 0)

    def test_modal_damping_matrix_diagonal(self, model):
        stick, _ = limit_models(model)
        full = linear_modes(stick, model.n_dof)
        pd = full.shapes.T @ model.damping @ full.shapes
        off = pd - np.diag(np.diag(pd))
        assert np.max(np.abs(off)) < 1e-8 * np.max(np.diag(pd))
        np.testing.assert_allclose(
            np.diag(pd)[:3], 2 * 0.003 * full.frequencies[:3], rtol=1e-8
        )

    def test_n_modes_bound(self, model):
        with pytest.raises(ModelError):
            linear_modes(model, 15)


class TestLimitCases:
    def test_stick_frequencies_above_slip(self, stick_slip):
        stick, slip = stick_slip
        fs = linear_modes(stick, 3).frequencies
        fl = linear_modes(slip, 3).frequencies
        assert np.all(fs > fl)

    def test_frequency_drops_match_quoted_values(self, stick_slip):
        stick, slip = stick_slip
        fs = linear_modes(stick, 3).frequencies
        fl = linear_modes(slip, 3).frequencies
        drops = 1 - fl / fs
        assert drops[0] == pytest.approx(0.25, abs=0.02)
        assert drops[1] == pytest.approx(0.08, abs=0.015)

    def test_zero_tangential_stiffness_degenerate(self):
        p = BeamParams(tangential_stiffness=1e-9)
        m = assemble_beam(p)
        stick, slip = limit_models(m)
        np.testing.assert_allclose(
            linear_modes(stick, 3).frequencies,
            linear_modes(slip, 3).frequencies,
            rtol=1e-9,
        )

    def test_limit_models_require_element(self, stick_slip):
        stick, _ = stick_slip
        with pytest.raises(ModelError):
            limit_models(stick)
