"""
Tests for the estimate ledger: observations, records, CSV files and checks.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.models.schemas import DEFAULT_TOLERANCES, DIAGNOSTIC_COLUMNS, CheckVerdict, DiagnosticsRow
from app.services.lab.diagnostics import (
    DiagnosticsRecord,
    check_density,
    check_energy,
    check_gamma,
    check_omega_over_r,
    envelope_constant,
    gamma_field,
    growth_report,
    l_norm,
    observe,
    refinement_margins,
    run_checks,
)
from app.services.lab.fields import Parity, lp_norm, sample, zeros
from app.services.lab.solver import SimState


def _row(t: float, **overrides) -> DiagnosticsRow:
    values = {name: 1.0 for name in DIAGNOSTIC_COLUMNS}
    values.update(t=t, cfl=0.1, grad_h_u_l2=0.0, grad_h_omega_over_r_l2=0.0,
                  grad_h_rho_l2=0.0, grad_h_gamma_l2=0.0, gamma_l4=1.0, gamma_linf=1.0)
    values.update(overrides)
    return DiagnosticsRow(**values)


def _record(rows) -> DiagnosticsRecord:
    record = DiagnosticsRecord()
    for row in rows:
        record.append(row)
    return record


class TestObserve:

    def test_rest_state_has_zero_norms(self, tall_grid):
        state = SimState.from_fields(0.0, zeros(tall_grid, Parity.ODD), zeros(tall_grid, Parity.EVEN))
        row = observe(state, 0.0)
        assert row.u_l2 == 0.0
        assert row.gamma_l2 == 0.0
        assert row.omega_Lnorm == 0.0

    def test_gamma_column_matches_field(self, ring, bubble):
        state = SimState.from_fields(0.5, ring, bubble)
        row = observe(state, 0.01)
        assert row.t == 0.5
        assert row.gamma_l2 == pytest.approx(lp_norm(gamma_field(ring, bubble)), rel=1e-14)
        assert row.rho_linf == pytest.approx(float(np.max(np.abs(bubble.values))))
        assert row.gamma_l4 is not None and row.gamma_linf is not None

    def test_l_norm_is_sup_over_exponents(self, grid):
        one = sample(grid, lambda r, z: np.ones_like(r), Parity.EVEN)
        volume = math.pi * grid.R ** 2 * grid.Lz
        expected = max(volume ** (1.0 / p) / p for p in range(2, 33))
        assert l_norm(one) == pytest.approx(expected, rel=1e-12)


class TestDiagnosticsRecord:

    def test_time_must_increase(self):
        record = _record([_row(0.0), _row(0.1)])
        with pytest.raises(ValueError):
            record.append(_row(0.1))

    def test_row_rejects_non_finite_values(self):
        with pytest.raises(ValidationError):
            _row(0.0, u_l2=math.inf)

    def test_integral_of_constant_column(self):
        record = _record([_row(t, grad_h_u_l2=2.0) for t in (0.0, 0.5, 1.5)])
        np.testing.assert_allclose(record.integral("grad_h_u_l2"), [0.0, 2.0, 6.0])

    def test_csv_files_round_trip_exactly(self, tmp_path):
        rows = [_row(0.1 * k, u_l2=1.0 / 3.0 + k, gamma_l4=math.pi * k) for k in range(4)]
        record = _record(rows)
        record.to_csv(tmp_path / "diagnostics.csv", tmp_path / "diagnostics_extra.csv")

        back = DiagnosticsRecord.from_csv(tmp_path / "diagnostics.csv", tmp_path / "diagnostics_extra.csv")

        assert back.rows == record.rows
        header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
        assert header == ",".join(DIAGNOSTIC_COLUMNS)

    def test_foreign_csv_is_rejected(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            DiagnosticsRecord.from_csv(path)


class TestChecks:

    def test_energy_passes_when_bound_is_met(self):
        # |u(t)| = |u0| + t |rho0| exactly, no dissipation
        rows = [_row(t, u_l2=1.0 + t, rho_l2=1.0) for t in (0.0, 0.5, 1.0)]
        verdict = check_energy(_record(rows))
        assert verdict.passed
        assert verdict.worst_margin == pytest.approx(0.0, abs=1e-15)

    def test_energy_fails_beyond_the_bound(self):
        rows = [_row(0.0, u_l2=1.0, rho_l2=0.0), _row(1.0, u_l2=1.1, rho_l2=0.0)]
        verdict = check_energy(_record(rows))
        assert not verdict.passed
        assert verdict.row_passed == [True, False]
        assert verdict.worst_margin == pytest.approx(0.21)

    def test_density_sup_norm_tolerance(self):
        rows = [_row(0.0, rho_linf=1.0), _row(1.0, rho_l2=0.5, rho_linf=1.005)]
        assert check_density(_record(rows)).passed
        rows = [_row(0.0, rho_linf=1.0), _row(1.0, rho_l2=0.5, rho_linf=1.05)]
        assert not check_density(_record(rows)).passed

    def test_omega_over_r_has_factor_two_slack(self):
        rows = [_row(0.0, omega_over_r_l2=1.0, rho_l2=1.0), _row(1.0, omega_over_r_l2=2.8, rho_l2=1.0)]
        assert check_omega_over_r(_record(rows)).passed

    def test_gamma_growth_fails_with_margin_line(self):
        rows = [_row(0.0, gamma_l2=1.0), _row(1.0, gamma_l2=1.01)]
        verdict = check_gamma(_record(rows))
        assert not verdict.passed
        name, margin, status = verdict.line().split()
        assert name == "gamma" and status == "FAIL"
        assert float(margin) == pytest.approx(0.01)

    def test_initial_row_does_not_mask_dissipation(self):
        rows = [_row(t, gamma_l2=g) for t, g in ((0.0, 1.0), (0.5, 0.9), (1.0, 0.8))]
        assert check_gamma(_record(rows)).worst_margin == pytest.approx(-0.1)

    def test_single_row_has_zero_margin(self):
        assert check_gamma(_record([_row(0.0)])).worst_margin == 0.0

    def test_empty_record_is_rejected(self):
        with pytest.raises(ValueError):
            check_gamma(DiagnosticsRecord())

    def test_run_checks_uses_canonical_order(self):
        record = _record([_row(0.0), _row(1.0)])
        verdicts = run_checks(record, ["gamma", "energy"], DEFAULT_TOLERANCES)
        assert [v.name for v in verdicts] == ["energy", "gamma"]


class TestRefinement:

    def _verdict(self, name, margin):
        return CheckVerdict(name=name, passed=margin <= 0, worst_margin=margin, tolerance=1e-3)

    def test_violations_must_halve(self):
        coarse = [self._verdict("energy", 0.2), self._verdict("gamma", -0.1)]
        fine = [self._verdict("energy", 0.08), self._verdict("gamma", -0.2)]
        comparisons = refinement_margins(coarse, fine)
        assert [c.halved for c in comparisons] == [True, True]

        fine = [self._verdict("energy", 0.15), self._verdict("gamma", 0.01)]
        assert [c.halved for c in refinement_margins(coarse, fine)] == [False, False]

    def test_growing_violation_is_reported_and_compared(self):
        def gamma_run(values):
            return [check_gamma(_record([_row(0.5 * k, gamma_l2=g) for k, g in enumerate(values)]))]

        coarse = gamma_run([1.0, 1.02, 1.04])
        assert coarse[0].worst_margin == pytest.approx(0.04)
        assert not coarse[0].passed

        slow_fix = refinement_margins(coarse, gamma_run([1.0, 1.01, 1.03]))
        assert slow_fix[0].fine_margin == pytest.approx(0.03)
        assert not slow_fix[0].halved

        assert refinement_margins(coarse, gamma_run([1.0, 1.005, 1.015]))[0].halved


class TestGrowth:

    def test_envelope_constant_recovers_the_generator(self):
        times = np.linspace(0.0, 2.0, 21)
        values = 0.5 * np.exp(np.exp(0.5 * times))
        assert envelope_constant(times, values) == pytest.approx(0.5, rel=1e-6)

    def test_zero_series_has_zero_envelope(self):
        assert envelope_constant(np.linspace(0, 1, 5), np.zeros(5)) == 0.0

    def test_abort_is_flagged(self):
        record = _record([_row(0.0), _row(0.1)])
        assert not growth_report(record).flagged
        record.mark_abort(2, 0.1, "advective CFL 1.2 exceeds limit 0.5")
        report = growth_report(record)
        assert report.flagged and not report.finite
        assert "CFL" in report.abort_reason
        assert {s.name for s in report.series} == {
            "dz_rho_l2", "dz_omega_l2", "grad_u_linf_integral", "omega_Lnorm", "omega_l2"}
