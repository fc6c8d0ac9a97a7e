import math

import numpy as np
import pytest

from emsplit import (
    CentralField,
    ConvergenceStudyError,
    MassModel,
    PairTable,
    PhaseState,
    Schedule,
    SolverConfig,
    SystemSpec,
    convergence_study,
    integrate,
    invariant_series,
    lj_pair,
    monotonicity_report,
    neo_hookean_spring,
    reference_solution,
    relative_errors,
    verified_reference,
    zero,
)
from emsplit.diagnostics import load_state, save_state, state_fingerprint
from emsplit.solver import step_energy_slack

KINDS = ["mp", "lg", "ge", "pm", "pt"]


def free_pair():
    spec = SystemSpec(MassModel.diagonal([1.0, 2.0]), PairTable.uniform(2, zero()))
    state = PhaseState([[0.0, 0, 0], [1.0, 1, 0]], [[1.0, 0.5, 0], [-0.5, 0.25, 2.0]])
    return spec, state


# -- invariant series --------------------------------------------------------------------

def test_single_state_series_is_zero():
    spec, s0 = neo_hookean_spring()
    series = invariant_series([s0], spec)
    assert len(series) == 1
    assert series.dH[0] == 0.0 and not series.dJ.any() and not series.dL.any() and not series.dC.any()
    assert series.H0 == pytest.approx(1866.8, abs=0.05)
    assert series.J0.tolist() == [30.0, -120.0, 60.0]


def test_series_accepts_trajectory_and_pairs():
    spec, s0 = lj_pair()
    traj = integrate(spec, "ge", s0, Schedule(1e-3, 20), SolverConfig.many_body(), stride=5)
    a = invariant_series(traj, spec)
    b = invariant_series(list(traj), spec)
    assert np.array_equal(a.dH, b.dH) and np.array_equal(a.times, traj.times)
    with pytest.raises(ValueError):
        invariant_series([], spec)


@pytest.mark.parametrize("kind", KINDS)
def test_spring_angular_momentum_stays_at_solver_level(kind):
    spec, s0 = neo_hookean_spring()
    traj = integrate(spec, kind, s0, Schedule.uniform(1e-3, 10.0), stride=10)
    series = invariant_series(traj, spec)
    assert np.abs(series.dJ / series.J0).max() <= 1e-11


def test_energy_decay_is_monotone_within_solver_slack():
    spec, s0 = neo_hookean_spring()
    for kind in ("ge", "pm", "pt"):
        traj = integrate(spec, kind, s0, Schedule.uniform(1e-3, 2.0))
        series = invariant_series(traj, spec)
        slack = max(step_energy_slack(traj.report(i), series.H0) for i in range(len(traj)))
        assert monotonicity_report(series, slack).ok


def test_midpoint_energy_oscillates():
    spec, s0 = neo_hookean_spring()
    traj = integrate(spec, "mp", s0, Schedule.uniform(1e-2, 2.0))
    report = monotonicity_report(invariant_series(traj, spec), 1e-6)
    assert not report.ok and report.first_violation >= 1


def test_monotonicity_report_on_plain_arrays():
    assert monotonicity_report(np.full(10, 3.0), 0.0) == (True, None)
    assert monotonicity_report([0.0, -1.0, -0.5, -2.0], 0.0) == (False, 2)
    assert monotonicity_report([0.0, -1.0, -0.5, -2.0], 0.5).ok


# -- references -------------------------------------------------------------------------------

def test_free_flight_reference_matches_analytic(tmp_path):
    spec, s0 = free_pair()
    ref = reference_solution(spec, s0, 2.0, 1e-3, cache_dir=tmp_path)
    expected = s0.q + 2.0 * spec.mass.apply_inverse(s0.p)
    assert np.abs(ref.q - expected).max() <= 1e-12 * np.abs(expected).max()
    assert np.array_equal(ref.p, s0.p)
    assert ref.t == pytest.approx(2.0, rel=1e-12)


def test_reference_cache_round_trip(tmp_path):
    spec, s0 = lj_pair()
    cfg = SolverConfig.many_body()
    first = reference_solution(spec, s0, 0.1, 1e-4, cfg, cache_dir=tmp_path)
    files = list(tmp_path.glob("ref-*.txt"))
    assert len(files) == 1
    again = reference_solution(spec, s0, 0.1, 1e-4, cfg, cache_dir=tmp_path)
    assert np.array_equal(first.q, again.q) and np.array_equal(first.p, again.p)
    fresh = reference_solution(spec, s0, 0.1, 1e-4, cfg, use_cache=False)
    assert np.array_equal(first.q, fresh.q) and np.array_equal(first.p, fresh.p)
    reference_solution(spec, s0, 0.1, 2e-4, cfg, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("ref-*.txt"))) == 2


def test_state_file_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    state = PhaseState(rng.normal(size=(3, 3)) * 1e-7, rng.normal(size=(3, 3)) * 1e5, 1.0 / 3.0)
    save_state(tmp_path / "s.txt", state, "two\nlines")
    back = load_state(tmp_path / "s.txt")
    assert back == state
    (tmp_path / "bad.txt").write_text("# nothing\n")
    with pytest.raises(ValueError):
        load_state(tmp_path / "bad.txt")


def test_fingerprint_depends_on_inputs():
    spec, s0 = lj_pair()
    other, _ = lj_pair(epsilon=50.0)
    base = state_fingerprint(spec, s0, 1e-3)
    assert base == state_fingerprint(spec, s0, 1e-3)
    assert base != state_fingerprint(spec, s0, 2e-3)
    assert base != state_fingerprint(other, s0, 1e-3)
    assert base != state_fingerprint(spec, s0.replace(t=1.0), 1e-3)


def test_verified_reference_discrepancy(tmp_path):
    spec, s0 = neo_hookean_spring()
    check = verified_reference(spec, s0, 1.0, 1e-5, cache_dir=tmp_path)
    assert 0 < check.discrepancy_q < 1e-8
    assert check.estimated_error == pytest.approx(max(check.discrepancy_q, check.discrepancy_p) / 3)
    assert check.verified_for(1e-6) and not check.verified_for(1e-12)


# -- convergence studies -------------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_free_particle_converges_exactly(kind):
    spec, s0 = free_pair()
    ref = PhaseState(s0.q + 1.0 * spec.mass.apply_inverse(s0.p), s0.p, 1.0)
    rows = convergence_study(spec, kind, s0, 1.0, [0.1, 0.05, 0.01], ref)
    for row in rows:
        assert row.rel_err_q <= 1e-14 and row.rel_err_p == 0.0


def test_orders_on_spring(tmp_path):
    spec, s0 = neo_hookean_spring()
    ref = reference_solution(spec, s0, 1.0, 1e-5, cache_dir=tmp_path)
    dts = [4e-3, 2e-3, 1e-3]
    pm = convergence_study(spec, "pm", s0, 1.0, dts, ref)
    assert math.isnan(pm[0].order_q) and math.isnan(pm[0].order_p)
    assert all(1.9 <= r.order_q <= 2.1 and 1.9 <= r.order_p <= 2.1 for r in pm[1:])
    ge = convergence_study(spec, "ge", s0, 1.0, dts, ref)
    assert all(0.8 <= r.order_q <= 1.2 for r in ge[1:])
    assert [r.dt for r in pm] == dts


def test_general_ratio_orders():
    spec, s0 = neo_hookean_spring()
    ref = reference_solution(spec, s0, 0.5, 1e-5, use_cache=False)
    rows = convergence_study(spec, "pt", s0, 0.5, [5e-3, 1e-3], ref)
    assert rows[1].order_q == pytest.approx(
        math.log(rows[0].rel_err_q / rows[1].rel_err_q) / math.log(5.0), rel=1e-12)


def test_study_rejects_unsorted_steps():
    spec, s0 = neo_hookean_spring()
    with pytest.raises(ValueError):
        convergence_study(spec, "pm", s0, 1.0, [1e-3, 1e-2], s0)


def test_failed_runs_are_flagged():
    spec, s0 = neo_hookean_spring()
    cfg = SolverConfig(l_max=1, tol_R=1e-14, tol_A=1e-300, roundoff_floor=0.0)
    with pytest.raises(ConvergenceStudyError) as info:
        convergence_study(spec, "mp", s0, 0.1, [1e-2, 5e-3], s0, cfg)
    rows = info.value.rows
    assert len(rows) == 2 and all(r.failed and math.isnan(r.rel_err_q) and r.message for r in rows)


def test_relative_errors():
    a = PhaseState([[1.0, 0, 0]], [[0, 2.0, 0]])
    b = PhaseState([[1.5, 0, 0]], [[0, 2.0, 0]])
    assert relative_errors(b, a) == (0.5, 0.0)


def test_central_field_free_particle_reference():
    spec = SystemSpec(MassModel.diagonal([4.0]), CentralField(zero()))
    s0 = PhaseState([[1.0, 2.0, 3.0]], [[4.0, 0, -4.0]])
    ref = reference_solution(spec, s0, 1.0, 1e-2, use_cache=False)
    assert np.allclose(ref.q, [[2.0, 2.0, 2.0]], rtol=1e-13)
