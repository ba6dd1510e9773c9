"""
Tests for the laboratory engine: refinement studies and reference runs.
"""

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.services.lab.diagnostics import DiagnosticsRecord, check_gamma
from app.services.lab.engine import MMS_ORDER, laboratory, parse_config
from app.services.lab.fields import Parity, zeros
from app.services.lab.solver import Scheme, SimState, StepConfig, run


class TestMMSStudy:

    def test_second_order_with_fixed_vertical_resolution(self):
        report = laboratory.mms_study(resolutions=(32, 64, 128), nz=16)
        assert report.nz == [16, 16, 16]
        assert min(report.orders.values()) >= MMS_ORDER
        for values in report.errors.values():
            assert values[0] > values[1] > values[2]

    @pytest.mark.slow
    def test_vertical_resolution_follows_radial_by_default(self):
        report = laboratory.mms_study(resolutions=(32, 64, 128))
        assert report.nz == [32, 64, 128]
        assert min(report.orders.values()) >= MMS_ORDER

    def test_non_positive_final_time_is_rejected(self):
        with pytest.raises(ConfigError):
            laboratory.mms_study(resolutions=(8, 16), t_end=0.0)


class TestIdentityStudyValidation:

    def test_resolutions_must_be_powers_of_two(self):
        with pytest.raises(ConfigError) as excinfo:
            laboratory.verify_identity_study((12, 24))
        assert excinfo.value.key == "n"

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            laboratory.verify_identity_study((16,), profile="bogus")


class TestDissipativeRuns:

    def test_ring_without_density_loses_energy_and_vorticity(self, tall_grid, ring):
        state = SimState.from_fields(0.0, ring, zeros(tall_grid, Parity.EVEN))
        record = run(state, StepConfig(dt=0.01, scheme=Scheme.CNAB2), 0.2)

        u = record.column("u_l2")
        omega_over_r = record.column("omega_over_r_l2")
        assert np.all(np.diff(u) <= 1e-3 * u[0])
        assert np.all(np.diff(omega_over_r) <= 1e-3 * omega_over_r[0])
        assert u[-1] < u[0]
        # gamma = omega/r when rho = 0, so its margin is strictly negative
        assert check_gamma(record).worst_margin < 0.0


@pytest.mark.slow
class TestReferenceBubble:

    def test_all_checks_pass_and_gamma_decays(self, reference_bubble_config):
        config = parse_config(reference_bubble_config)
        outcome = laboratory.simulate(config)
        assert outcome.passed
        assert [v.passed for v in outcome.verdicts] == [True] * 4

        out = reference_bubble_config.parent / "bubble"
        record = DiagnosticsRecord.from_csv(out / "diagnostics.csv", out / "diagnostics_extra.csv")
        gamma = record.column("gamma_l2")
        assert np.all(np.diff(gamma) <= 1e-3 * gamma[0])
