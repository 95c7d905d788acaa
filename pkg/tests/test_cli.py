import filecmp
import os

import numpy as np
import pytest

from grainflow.cli import (
    ConfigError,
    build_grid,
    build_model,
    build_scheme_params,
    main,
    make_initial,
    parse_config,
)
from grainflow.grid import GridSpec, load_field
from grainflow.scheme import validate_initial

from conftest import model_for

BASE = """
[model]
potential = g1
c = 1.0
mobility = kobayashi
kappa = 0.01

[grid]
dim = 1
shape = 24
dx = 1.0

[scheme]
h_frac = 0.5
nu = 0.1
n_steps = 4
record_every = 2

[init]
kind = random
seed = 77
amplitude = 0.6

[output]
directory = {out}
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_parse_config_basics(tmp_path):
    path = write_cfg(tmp_path, BASE.format(out=tmp_path / "o"))
    cfg = parse_config(path)
    assert cfg.get("model", "potential") == "g1"
    assert cfg.get("scheme", "nu", cast=float) == 0.1
    assert cfg.seed == 77
    assert len(cfg.digest) == 16


def test_parse_errors_carry_location(tmp_path):
    path = write_cfg(tmp_path, "[model]\npotential g1\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config(path)
    path2 = write_cfg(tmp_path, "orphan = 1\n", name="o.cfg")
    with pytest.raises(ConfigError, match="outside any"):
        parse_config(path2)


def test_config_key_errors(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, "[model]\npotential = g9\n[grid]\nshape = 8\n"))
    with pytest.raises(ConfigError, match="model section"):
        build_model(cfg)
    cfg2 = parse_config(write_cfg(tmp_path, "[grid]\ndim = 1\nshape = 8\ndx = bad\n",
                                  name="g.cfg"))
    with pytest.raises(ConfigError, match="grid.dx"):
        build_grid(cfg2)


def test_h_and_h_frac_exclusive(tmp_path):
    text = BASE.format(out=tmp_path) + "\n[scheme]\nh = 0.01\n"
    # appending a second [scheme] section merges keys: both h and h_frac set
    cfg = parse_config(write_cfg(tmp_path, text))
    model = build_model(cfg)
    with pytest.raises(ConfigError, match="exactly one"):
        build_scheme_params(cfg, model)


def test_digest_ignores_output_and_seed(tmp_path):
    a = parse_config(write_cfg(tmp_path, BASE.format(out="/tmp/a")))
    b = parse_config(write_cfg(tmp_path, BASE.format(out="/tmp/b"), name="b.cfg"))
    assert a.digest == b.digest
    b.sections["init"]["seed"] = "123456"
    assert a.digest == b.digest
    b.sections["scheme"]["nu"] = "0.25"
    assert a.digest != b.digest


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def test_make_initial_wells(g1_model):
    grid = GridSpec(1, (12,), 1.0)
    state = make_initial("wells", grid, g1_model, seed=0)
    assert np.all(state.w.values == 1.0)
    assert np.all(state.eta.values == 1.0)
    assert np.all(state.theta.values == 0.0)


def test_make_initial_seeded_deterministic(g1_model):
    grid = GridSpec(2, (8, 8), 1.0)
    a = make_initial("random", grid, g1_model, seed=5)
    b = make_initial("random", grid, g1_model, seed=5)
    assert np.array_equal(a.w.values, b.w.values)
    assert np.array_equal(a.theta.values, b.theta.values)


def test_make_initial_respects_g2_box():
    model = model_for("g2")
    grid = GridSpec(1, (16,), 1.0)
    state = make_initial("random", grid, model, seed=1)
    assert state.w.values.min() >= model.o_star
    assert state.w.values.max() <= model.iota_star
    assert validate_initial(state, model, nu=0.1).passed


def test_make_initial_unknown_kind(g1_model):
    with pytest.raises(ConfigError):
        make_initial("vortex", GridSpec(1, (8,), 1.0), g1_model, seed=0)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def test_run_command_wells_zero_energy(tmp_path):
    text = BASE.format(out=tmp_path / "out").replace("kind = random", "kind = wells")
    cfg_path = write_cfg(tmp_path, text)
    assert main(["run", "--config", cfg_path]) == 0
    lines = (tmp_path / "out" / "energy.csv").read_text().splitlines()
    assert lines[0].startswith("# config ")
    header = lines[1].split(",")
    assert header[0] == "step" and header[-1] == "linf_theta"
    for row in lines[2:]:
        assert float(row.split(",")[7]) == 0.0  # total stays 0


def test_run_command_deterministic(tmp_path):
    cfg_path = write_cfg(tmp_path, BASE.format(out=tmp_path / "a"))
    assert main(["run", "--config", cfg_path]) == 0
    assert main(["run", "--config", cfg_path, "--out", str(tmp_path / "b")]) == 0
    for name in sorted(os.listdir(tmp_path / "a")):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False), name


def test_snapshot_round_trip_from_cli(tmp_path):
    cfg_path = write_cfg(tmp_path, BASE.format(out=tmp_path / "out"))
    main(["run", "--config", cfg_path])
    f = load_field(tmp_path / "out" / "step_000004_w.csv")
    assert f.grid.shape == (24,)
    assert np.all(np.isfinite(f.values))


def test_seed_override_changes_output(tmp_path):
    cfg_path = write_cfg(tmp_path, BASE.format(out=tmp_path / "a"))
    main(["run", "--config", cfg_path])
    main(["run", "--config", cfg_path, "--out", str(tmp_path / "c"), "--seed", "99"])
    assert not filecmp.cmp(tmp_path / "a" / "energy.csv",
                           tmp_path / "c" / "energy.csv", shallow=False)


def test_verify_command_passes(tmp_path):
    text = BASE.format(out=tmp_path / "out") + "\n[verify]\nn_oracle = 2\n"
    cfg_path = write_cfg(tmp_path, text)
    assert main(["verify", "--config", cfg_path]) == 0
    checks = (tmp_path / "out" / "checks.csv").read_text().splitlines()
    assert checks[1].startswith("name,passed")
    assert all(",1," in row or row.split(",")[1] == "1" for row in checks[2:])


def test_sweep_command(tmp_path):
    text = BASE.format(out=tmp_path / "out") + "\n[sweep]\nnus = 0.5,0.01\n"
    cfg_path = write_cfg(tmp_path, text)
    assert main(["sweep-nu", "--config", cfg_path]) == 0
    rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert rows[1] == "nu,nu_dirichlet_aggregate,wtv_aggregate"
    assert len(rows) == 4


def test_probe_contraction_command(tmp_path):
    text = BASE.format(out=tmp_path / "out") + "\n[probe]\nn_probes = 3\n"
    cfg_path = write_cfg(tmp_path, text)
    assert main(["probe-contraction", "--config", cfg_path]) == 0
    rows = (tmp_path / "out" / "contraction.csv").read_text().splitlines()
    assert len(rows) == 5
    for row in rows[2:]:
        h, seed, ratio, guard, flagged = row.split(",")
        assert float(ratio) <= float(guard)


def test_probe_contraction_override_records_flagged(tmp_path):
    text = BASE.format(out=tmp_path / "out") + "\n[probe]\nn_probes = 2\n"
    cfg_path = write_cfg(tmp_path, text)
    assert main(["probe-contraction", "--config", cfg_path,
                 "--override-h-gate"]) == 0
    rows = (tmp_path / "out" / "contraction.csv").read_text().splitlines()[2:]
    flagged = [r for r in rows if r.endswith(",1")]
    assert len(flagged) >= 1


def test_config_error_exit_code(tmp_path):
    path = write_cfg(tmp_path, "[grid]\nshape 12\n")
    assert main(["run", "--config", path]) == 2
