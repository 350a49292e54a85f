import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import mmflow

SCENARIOS = Path(os.environ.get("MMFLOW_SCENARIO_DIR", Path(__file__).resolve().parents[2] / "scenarios"))


@pytest.fixture
def unit_b():
    space = mmflow.ValueSpace.case_b([0.0], [1.0], [0.5])
    return space, mmflow.logarithmic_pairs(space)


def reference_density(space):
    return mmflow.cahn_hilliard(space, np.eye(1), [[0.0, 0.0, 1.0]], epsilon=1.0)


def test_logarithmic_pair():
    pair = mmflow.EntropyMobilityPair.logarithmic(0.0, 1.0)
    assert pair.mobility(0.25) == pytest.approx(0.1875)
    assert pair.entropy(0.5) == pytest.approx(-math.log(2))
    with pytest.raises(ValueError):
        mmflow.EntropyMobilityPair.logarithmic(1.0, 0.0)


def test_energy_and_gradient(unit_b):
    space, _ = unit_b
    f = reference_density(space)
    assert f.coercivity_lower == pytest.approx(1.0)
    grid = mmflow.Grid1D(4.0, 64)
    x = grid.centers()
    u = (0.5 + 0.1 * np.cos(np.pi * x / 4.0))[None, :]
    exact = 4.0 * (0.5 * (0.1 * np.pi / 4.0) ** 2 + 0.01)
    assert mmflow.discrete_energy(f, grid, u) == pytest.approx(exact, rel=1e-2)
    assert mmflow.energy_gradient(f, grid, u).shape == (1, 64)
    with pytest.raises(mmflow.InvalidArgument):
        mmflow.discrete_energy(f, grid, u + 1.0)


def test_distance_matches_oracle(unit_b):
    space, pairs = unit_b
    grid = mmflow.Grid1D(1.0, 4)
    u0 = np.array([[0.3, 0.5, 0.6, 0.4]])
    u1 = np.array([[0.5, 0.4, 0.3, 0.6]])
    r = mmflow.distance(space, pairs, grid, u0, u1, inner_steps=2)
    assert r["converged"]
    assert r["value"] == pytest.approx(0.21362384603049192, rel=1e-5)
    back = mmflow.distance(space, pairs, grid, u1, u0, inner_steps=2)
    assert back["value"] == pytest.approx(r["value"], rel=1e-6)
    assert len(r["action_per_step"]) == 2


def test_mass_mismatch_case_a():
    space = mmflow.ValueSpace.case_a([0.0], [1.0])
    pairs = mmflow.logarithmic_pairs(space)
    grid = mmflow.Grid1D(1.0, 8)
    with pytest.raises(mmflow.MassMismatch):
        mmflow.distance(space, pairs, grid, np.full((1, 8), 0.3), np.full((1, 8), 0.4))


def test_jko_step_and_trajectory(unit_b):
    space, pairs = unit_b
    f = reference_density(space)
    grid = mmflow.Grid1D(1.0, 4)
    step = mmflow.jko_step(space, f, pairs, grid, np.array([[0.3, 0.5, 0.6, 0.4]]), 0.1, inner_steps=2)
    assert step["objective"] == pytest.approx(0.047065036239006486, rel=1e-5)

    grid = mmflow.Grid1D(2.0, 32)
    x = grid.centers()
    u0 = (0.5 + 0.2 * np.exp(-x**2))[None, :]
    t = mmflow.run_trajectory(space, f, pairs, grid, u0, tau=1e-2, steps=5, inner_steps=4, keep_states=True)
    assert len(t["states"]) == 6
    assert np.all(np.diff(t["energy"]) <= 1e-8)
    assert np.allclose(t["masses"][:, 0], t["masses"][0, 0], atol=1e-10)


def test_interpolation_gaussian():
    grid = mmflow.Grid1D(8.0, 1024)
    x = grid.centers()
    l2, h1 = mmflow.interpolation_check(grid, np.exp(-x**2))
    assert l2["passed"] and h1["passed"]
    assert l2["lhs"] == pytest.approx(1.1195, abs=1e-3)
    assert l2["rhs"] - l2["fitted_constants"]["eps_disc"] == pytest.approx(1.8048, abs=1e-3)


def test_commands(tmp_path):
    cfg = json.loads((SCENARIOS / "stationary_case_b.json").read_text())
    path = tmp_path / "stationary.json"
    path.write_text(json.dumps(cfg))
    assert mmflow.cmd_run(str(path), str(tmp_path / "run")) == 0
    assert mmflow.cmd_verify(str(tmp_path / "run"), ["energy_monotonicity", "telescoping"]) == 0
    assert mmflow.cmd_verify(str(tmp_path / "missing")) == 2
    assert mmflow.cmd_inequalities(5, 3, str(tmp_path / "ineq")) == 0
    assert mmflow.cmd_inequalities(0, 3, str(tmp_path / "ineq")) == 2
    (tmp_path / "bad.json").write_text("{")
    assert mmflow.cmd_run(str(tmp_path / "bad.json"), str(tmp_path / "never")) == 1
    assert not (tmp_path / "never").exists()
