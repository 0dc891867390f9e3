import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scalar_arch, make_scalar_system
from layersynth.systems import (
    ConfigError,
    check_stabilizable,
    discretize_forward_euler,
    load_config,
    serialize,
    validate,
)


class TestValidate:
    def test_bundled_configs_valid(self, uav_arch, hexa_arch):
        assert validate(uav_arch) is uav_arch
        assert validate(hexa_arch) is hexa_arch

    def test_output_dimension_mismatch(self):
        upper = make_scalar_system(0.5)
        lower = make_scalar_system(0.5)
        lower = type(lower)(
            A=lower.A, B=lower.B,
            C=np.array([[1.0], [0.0]]),
            Sigma_w=lower.Sigma_w,
            Sigma_v=np.eye(2),
            mu0=lower.mu0,
        )
        arch = make_scalar_arch()
        arch = type(arch)(
            upper=upper, lower=lower, u_max=arch.u_max,
            upper_controller=arch.upper_controller, sim=arch.sim, synth=arch.synth,
        )
        with pytest.raises(ConfigError, match="output dimension mismatch"):
            validate(arch)

    def test_singular_sigma_v_rejected(self):
        arch = make_scalar_arch(sv=0.0)
        with pytest.raises(ConfigError, match="positive definite"):
            validate(arch)

    def test_nonpositive_u_max(self):
        arch = make_scalar_arch(u_max=0.0)
        with pytest.raises(ConfigError, match="u_max"):
            validate(arch)

    def test_never_mutates(self):
        arch = make_scalar_arch()
        a_before = arch.upper.A.copy()
        validate(arch)
        np.testing.assert_array_equal(arch.upper.A, a_before)


class TestCheckStabilizable:
    def test_stable_without_input(self):
        assert check_stabilizable([[0.5]], [[0.0]])

    def test_unstable_uncontrollable(self):
        assert not check_stabilizable([[2.0]], [[0.0]])

    def test_unstable_controllable(self):
        assert check_stabilizable([[2.0]], [[1.0]])

    def test_case_studies(self, uav_arch, hexa_arch):
        for arch in (uav_arch, hexa_arch):
            assert check_stabilizable(arch.lower.A, arch.lower.B)


class TestDiscretize:
    def test_zero_dynamics(self):
        bc = np.array([[1.0], [2.0]])
        a, b = discretize_forward_euler(np.zeros((2, 2)), bc, 0.02)
        np.testing.assert_allclose(a, np.eye(2))
        np.testing.assert_allclose(b, 0.02 * bc)

    def test_uav_spot_entries(self, uav_arch):
        a1, b1 = uav_arch.upper.A, uav_arch.upper.B
        assert a1[0, 0] == pytest.approx(1 - 0.02 * 0.05)
        assert a1[0, 3] == pytest.approx(-0.02 * 9.81)
        assert a1[2, 1] == pytest.approx(-0.02 * 12.0)
        assert b1[2, 0] == pytest.approx(-0.02 * 18.0)

    def test_hexacopter_drag_entry(self, hexa_arch):
        # lower-layer angular drag -1.5 discretized at dt = 0.02
        assert hexa_arch.lower.A[2, 2] == pytest.approx(0.97)

    def test_affine_in_dt(self):
        ac = np.array([[0.3, -1.0], [0.2, 0.1]])
        bc = np.array([[1.0], [0.5]])
        a0, b0 = discretize_forward_euler(ac, bc, 1e-12)
        np.testing.assert_allclose(a0, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(b0, 0.0, atol=1e-10)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ConfigError):
            discretize_forward_euler(np.eye(2), np.eye(2), 0.0)


class TestLoadConfig:
    def test_round_trip_uav(self, uav_arch):
        again = load_config(serialize(uav_arch))
        for field in ("A", "B", "C", "Sigma_w", "Sigma_v", "mu0"):
            np.testing.assert_array_equal(
                getattr(again.upper, field), getattr(uav_arch.upper, field)
            )
            np.testing.assert_array_equal(
                getattr(again.lower, field), getattr(uav_arch.lower, field)
            )
        assert again.synth == uav_arch.synth
        assert again.sim == uav_arch.sim
        assert again.u_max == uav_arch.u_max

    def test_round_trip_hexacopter(self, hexa_arch):
        again = load_config(serialize(hexa_arch))
        np.testing.assert_array_equal(again.lower.A, hexa_arch.lower.A)
        np.testing.assert_array_equal(again.lower.B, hexa_arch.lower.B)

    def test_parse_error_reports_position(self):
        with pytest.raises(ConfigError, match="line"):
            load_config("{ not json }")

    def test_ragged_matrix_rejected(self, uav_arch):
        import json

        doc = json.loads(serialize(uav_arch))
        doc["upper"]["A"][0] = doc["upper"]["A"][0][:-1]
        with pytest.raises(ConfigError, match="ragged"):
            load_config(json.dumps(doc))

    def test_missing_field_named(self, uav_arch):
        import json

        doc = json.loads(serialize(uav_arch))
        del doc["u_max"]
        with pytest.raises(ConfigError, match="u_max"):
            load_config(json.dumps(doc))

    def test_mixing_discrete_and_continuous_rejected(self, uav_arch):
        import json

        doc = json.loads(serialize(uav_arch))
        doc["upper"]["Ac"] = doc["upper"]["A"]
        with pytest.raises(ConfigError, match="mixing"):
            load_config(json.dumps(doc))

    def test_dt_with_discrete_rejected(self, uav_arch):
        import json

        doc = json.loads(serialize(uav_arch))
        doc["upper"]["dt"] = 0.02
        with pytest.raises(ConfigError, match="dt"):
            load_config(json.dumps(doc))

    def test_flat_covariance_is_diagonal(self, uav_arch):
        np.testing.assert_allclose(
            uav_arch.upper.Sigma_w, np.diag([5e-5, 5e-6, 5e-5, 5e-6])
        )
        np.testing.assert_allclose(
            uav_arch.upper.Sigma_v, np.diag([1e-4, 1e-2, 1e-2, 1e-4])
        )

    @settings(deadline=None, max_examples=25)
    @given(
        a1=st.floats(-0.95, 0.95),
        a2=st.floats(-0.95, 0.95),
        sw=st.floats(1e-6, 1.0),
        sv=st.floats(1e-6, 1.0),
    )
    def test_round_trip_random_scalars(self, a1, a2, sw, sv):
        arch = make_scalar_arch(a1=a1, a2=a2, sw=sw, sv=sv)
        again = load_config(serialize(arch))
        np.testing.assert_array_equal(again.upper.A, arch.upper.A)
        np.testing.assert_array_equal(again.upper.Sigma_w, arch.upper.Sigma_w)
        np.testing.assert_array_equal(again.lower.Sigma_v, arch.lower.Sigma_v)
