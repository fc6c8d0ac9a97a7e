import subprocess
import sys

import numpy as np
import pytest

from emsplit import ConfigError, MassModel, PhaseState, total_energy
from emsplit.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from emsplit.harness import (
    INVARIANT_COLUMNS,
    BodyRecord,
    ExperimentConfig,
    build_system,
    hybrid_study,
    load_config,
    load_bodies,
    parse_bodies,
    parse_config,
    read_csv,
    solar_system,
    solar_system_path,
    trajectory_columns,
)
from emsplit.model import angular_momentum, center_of_mass, linear_momentum


def write(path, text):
    path.write_text(text)
    return str(path)


# -- configuration -----------------------------------------------------------------------------

def test_config_defaults_and_overrides():
    cfg = parse_config("system = lj-pair\nintegrator = pm\n", overrides={"dt": "5e-4"})
    assert cfg.system == "lj-pair" and cfg.integrator.short == "pm"
    assert cfg.dt == 5e-4 and cfg.T == 2.0 and cfg.solver.tol_R == 1e-12
    solar = parse_config("system = solar")
    assert solar.dt == 5.0 and solar.T == 1.825e6 and solar.sample_stride == 50
    assert parse_config("").system == "neo-hookean-spring"


def test_config_keys_are_case_insensitive_and_comment_aware():
    cfg = parse_config("# heading\nDT = 2e-3   # inline\n\nTol_Q = 1e-6\nrescue = pm\n")
    assert cfg.dt == 2e-3 and cfg.solver.tol_Q == 1e-6
    assert cfg.rescue.short == "pm" and cfg.solver.rescue.short == "pm"


@pytest.mark.parametrize("text,line", [
    ("dt = 1e-3\nbogus = 1\n", 2),
    ("dt = 1e-3\n\ndt = 2e-3\n", 3),
    ("integrator = xyz\n", 1),
    ("# c\ndt = -1\n", 2),
    ("T = 1\nl_max = 0\n", 2),
    ("outputs = invariants, movie\n", 1),
    ("dt\n", 1),
    ("system = moon\n", 1),
    ("dt = \n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text, path="exp.cfg")
    assert info.value.line == line
    assert str(info.value).startswith(f"exp.cfg:{line}:")


def test_custom_file_needs_bodies(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("system = custom-file")
    bodies = tmp_path / "b.txt"
    bodies.write_text(solar_system_path().read_text())
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text("system = custom-file\nbodies = b.txt\nT = 0\n")
    cfg = load_config(cfg_path)
    assert cfg.bodies == str(tmp_path / "b.txt")
    spec, state = build_system(cfg)
    assert spec.n == 10


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(sample_stride=0)
    with pytest.raises(ValueError):
        ExperimentConfig(dt_list=(1e-3, 1e-2))
    cfg = ExperimentConfig(rescue="ge")
    assert cfg.solver.rescue.short == "ge"
    assert cfg.with_overrides(tol_r=1e-12, dt=None).solver.tol_R == 1e-12


# -- bodies files ------------------------------------------------------------------------------------

def test_bundled_solar_system():
    bodies = load_bodies(solar_system_path())
    assert len(bodies) == 10 and bodies.G == 2.95912208286e-4
    assert bodies[0].name.lower() == "sun" and bodies.units
    spec, state, _ = solar_system()
    assert spec.n == 10 and np.abs(linear_momentum(state)).max() < 1e-8


@pytest.mark.parametrize("text,line", [
    ("", None),
    ("G = 1\n", None),
    ("units = AU\nsun 1 0 0 0 0 0 0\n", None),
    ("G = 1\nsun -1 0 0 0 0 0 0\n", 2),
    ("G = 1\nsun 1 0 0 0 0 0\n", 2),
    ("G = 1\nsun 1 0 0 0 0 0 x\n", 2),
    ("G = 1\nsun 1 0 0 0 0 0 0\nsun 1 1 0 0 0 0 0\n", 3),
    ("G = 1\nsun 1 0 0 0 0 0 0\nG = 2\n", 3),
    ("G = -1\nsun 1 0 0 0 0 0 0\n", 1),
])
def test_bad_bodies_files(text, line):
    with pytest.raises(ConfigError) as info:
        parse_bodies(text, "bodies.txt")
    assert info.value.line == line


def test_body_record_validation():
    with pytest.raises(ValueError):
        BodyRecord("x", 0.0, (0, 0, 0), (0, 0, 0))
    with pytest.raises(ValueError):
        BodyRecord("x", 1.0, (0, 0), (0, 0, 0))


def test_bodies_check_command(tmp_path, capsys):
    assert main(["bodies-check"]) == EXIT_OK
    assert "10 bodies" in capsys.readouterr().out
    bad = write(tmp_path / "b.txt", "G = 1\nsun -2 0 0 0 0 0 0\n")
    assert main(["bodies-check", bad]) == EXIT_CONFIG
    assert "b.txt:2:" in capsys.readouterr().err
    assert main(["bodies-check", str(tmp_path / "missing.txt")]) == EXIT_CONFIG


# -- run ------------------------------------------------------------------------------------------------

def test_spring_run_energy(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--integrator", "lg", "--dt", "1e-3", "--T", "10"]) == EXIT_OK
    header, data = read_csv(tmp_path / "invariants.csv")
    assert tuple(header) == INVARIANT_COLUMNS
    assert data.shape == (10 ** 4 + 1, 11)
    assert abs(data[-1, 1]) <= 1e-6
    assert "10000 steps" in capsys.readouterr().out


def test_csv_output_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "exp.cfg", "system = lj-pair\nintegrator = pt\nT = 0.05\n"
                                      "outputs = trajectory, invariants, report\n")
    for name in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("trajectory.csv", "invariants.csv", "report.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_invariants_recompute_from_trajectory(tmp_path):
    cfg = write(tmp_path / "exp.cfg", "system = lj-pair\nintegrator = ge\nT = 0.2\nsample_stride = 7\n"
                                      "outputs = trajectory, invariants\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    th, traj = read_csv(tmp_path / "trajectory.csv")
    assert th == trajectory_columns(2)
    _, inv = read_csv(tmp_path / "invariants.csv")
    spec, _ = build_system(parse_config("system = lj-pair"))
    blocks = traj[:, 1:].reshape(len(traj), 2, 2, 3)
    states = [PhaseState(b[:, 0], b[:, 1], t) for b, t in zip(blocks, traj[:, 0])]
    h = np.array([total_energy(s, spec) for s in states])
    j = np.array([angular_momentum(s) for s in states])
    l_ = np.array([linear_momentum(s) for s in states])
    c = np.array([center_of_mass(s, MassModel.diagonal([1.0, 1.0])) for s in states])
    expected = np.column_stack([traj[:, 0], h - h[0], j - j[0], l_ - l_[0], c - c[0]])
    scale = np.maximum(np.abs(np.column_stack([traj[:, 0], h, j, l_, c])).max(axis=0), 1.0)
    assert np.all(np.abs(inv - expected) <= 1e-14 * scale)


def test_zero_final_time_emits_initial_row(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--T", "0"]) == EXIT_OK
    _, data = read_csv(tmp_path / "invariants.csv")
    assert data.shape == (1, 11) and not data.any()


def test_runtime_failure_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", "integrator = mp\ndt = 1e-2\nT = 1\nl_max = 1\ntol_R = 1e-14\n"
                                      "tol_A = 1e-300\nroundoff_floor = 0\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "did not converge" in err and "step 0" in err
    _, data = read_csv(tmp_path / "invariants.csv")
    assert data.shape == (1, 11)


def test_config_failure_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", "dt = 1e-3\nwhat = 2\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "exp.cfg:2:" in capsys.readouterr().err
    assert main(["run", "--dt", "abc", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "none.cfg")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["run", "--no-such-flag"])
    assert info.value.code == EXIT_CONFIG


# -- converge and hybrid -------------------------------------------------------------------------------

def test_single_step_size_has_empty_orders(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", f"integrator = pm\nT = 0.1\ndt_list = 1e-2\nreference_dt = 1e-4\n"
                                      f"reference_cache = {tmp_path / 'cache'}\n")
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "dt,err_q,order_q,err_p,order_p"
    dt, eq, oq, ep, op = lines[1].split(",")
    assert float(dt) == 1e-2 and float(eq) > 0 and oq == "" and op == ""


def test_converge_orders(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", f"integrator = pm\nT = 1\ndt_list = 4e-3, 2e-3, 1e-3\n"
                                      f"reference_dt = 1e-5\nreference_cache = {tmp_path / 'cache'}\n")
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    _, data = read_csv(tmp_path / "convergence.csv")
    assert np.all(np.abs(data[1:, 2] - 2.0) < 0.1) and np.all(np.abs(data[1:, 4] - 2.0) < 0.1)


def test_converge_failure_writes_partial_rows(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", f"integrator = mp\nT = 0.1\ndt_list = 1e-2, 5e-3\nreference_dt = 1e-3\n"
                                      f"l_max = 1\ntol_R = 1e-14\ntol_A = 1e-300\nroundoff_floor = 0\n"
                                      f"reference_cache = {tmp_path / 'cache'}\n")
    # the reference itself fails under these settings
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_RUNTIME
    capsys.readouterr()


def test_converge_needs_reference(tmp_path):
    cfg = write(tmp_path / "exp.cfg", "system = solar\ndt_list = 10, 5\n")
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_hybrid_study_files(tmp_path, capsys):
    cfg = write(tmp_path / "exp.cfg", "T = 2\ntol_q_list = 0.1\nrescue_list = janz, pm\n")
    assert main(["hybrid", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    summary = (tmp_path / "hybrid_summary.csv").read_text().splitlines()
    assert summary[0] == "tol_Q,rescue,switch_count,unconverged_steps,max_dH,final_dH,failed"
    assert [row.split(",")[1] for row in summary[1:]] == ["none", "janz", "pm"]
    for label in ("baseline", "janz_tolq_0.1", "pm_tolq_0.1"):
        header, data = read_csv(tmp_path / f"hybrid_{label}.csv")
        assert header == ["time", "dH"] and data.shape == (21, 2)


def test_hybrid_without_grid_is_config_error():
    cfg = parse_config("tol_q_list = 1e-8", "hybrid").with_overrides(rescue_list=())
    with pytest.raises(ConfigError):
        hybrid_study(cfg)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "emsplit", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "bodies-check" in out.stdout
    out = subprocess.run([sys.executable, "-m", "emsplit"], capture_output=True, text=True)
    assert out.returncode == EXIT_CONFIG
