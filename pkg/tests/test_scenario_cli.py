import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_lab.cli import apply_param, jsonable, main, run_command
from opinion_lab.errors import ParseError, ValidationError
from opinion_lab.integrate import IntegratorConfig
from opinion_lab.scenario import (
    FIXTURES,
    ScenarioFile,
    SweepSpec,
    format_scenario,
    load_scenario,
    parse_scenario,
    write_scenario,
)

BASIC = """\
name = tiny
n = 2
p = 1 -1
w = 1 2
r = 3 4
matrix weights
  0 0.5
  -0.25 0
end
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_fixtures_load(consensus_sc, hopf_sc, disagreement_sc):
    assert set(FIXTURES) == {"paper-consensus-6", "paper-disagreement-6", "paper-hopf-2"}
    assert consensus_sc.n == 6
    assert np.array_equal(consensus_sc.w, [13.42, 14.30, 12.84, 8.38, 7.82, 16.32])
    assert np.array_equal(consensus_sc.r, [317.43, 814.54, 789.07, 852.26, 505.64, 635.66])
    assert np.array_equal(consensus_sc.p, [225.22, 66.40, 71.33, 81.16, 165.39, 77.99])
    assert np.array_equal(consensus_sc.z0, [43.90, 36.34, 49.00, 30.69, 38.77, 37.63])
    assert (hopf_sc.weights[0, 1], hopf_sc.weights[1, 0]) == (-20.0, 4.99)
    assert np.array_equal(hopf_sc.w, [3, 4]) and np.array_equal(hopf_sc.r, [10, 5])
    assert np.array_equal(hopf_sc.p, [0, 0])
    assert np.array_equal(disagreement_sc.p, [-18.31, 18.92, -12.43, 6.68, 3.46, 7.00])


def test_negative_resource_names_agent_and_field():
    with pytest.raises(ValidationError) as exc:
        parse_scenario(BASIC.replace("r = 3 4", "r = 3 -4"))
    assert exc.value.agent == 2 and exc.value.field == "r"
    d = exc.value.to_dict()
    assert d["agent"] == 2 and d["field"] == "r"


@pytest.mark.parametrize("text, line, field", [
    (BASIC.replace("w = 1 2", "w = 1 two"), 4, "w"),
    (BASIC.replace("n = 2", "n = 2\ncolour = red"), 3, "colour"),
    (BASIC.replace("end\n", ""), 6, "weights"),
    (BASIC.replace("name = tiny", "name = tiny\nname = again"), 2, "name"),
    (BASIC.replace("  0 0.5", "  0 x"), 7, "weights"),
    (BASIC.replace("matrix weights", "matrix costs"), 6, "weights"),
])
def test_parse_errors_locate_problem(text, line, field):
    with pytest.raises(ParseError) as exc:
        parse_scenario(text)
    assert exc.value.line == line and exc.value.field == field


def test_missing_field():
    with pytest.raises(ParseError) as exc:
        parse_scenario(BASIC.replace("p = 1 -1\n", ""))
    assert exc.value.field == "p"


@pytest.mark.parametrize("edit, field", [
    (("p = 1 -1", "p = 1 -1 3"), "p"),
    (("  -0.25 0", "  -0.25 0 1"), "weights"),
    (("n = 2", "n = 2\nz0 = 1"), "z0"),
    (("n = 2", "n = 2\nintegrator.step = -1"), "integrator"),
    (("n = 2", "n = 2\nsweep.param = q[1]\nsweep.start = 0\nsweep.stop = 1\nsweep.num = 3"), "sweep.param"),
])
def test_validation_errors(edit, field):
    with pytest.raises(ValidationError) as exc:
        parse_scenario(BASIC.replace(*edit))
    assert exc.value.field == field


def test_diagonal_warning_surfaced():
    sc = parse_scenario(BASIC.replace("  0 0.5", "  2 0.5"))
    assert len(sc.warnings) == 1 and "ignored" in sc.warnings[0]
    assert sc.network().weights[0, 0] == 0.0
    assert sc.weights[0, 0] == 2.0  # the file content itself is kept verbatim


def test_preferences_token():
    sc = parse_scenario(BASIC.replace("n = 2", "n = 2\nz0 = preferences"))
    assert np.array_equal(sc.initial_state(), [1.0, -1.0])
    assert np.array_equal(parse_scenario(BASIC).initial_state(), [1.0, -1.0])


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "nope.scn")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
positive = st.floats(min_value=1e-300, max_value=1e300)


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 5))
    vec = lambda s: np.array(draw(st.lists(s, min_size=n, max_size=n)))
    W = np.array(draw(st.lists(finite, min_size=n * n, max_size=n * n))).reshape(n, n)
    z0 = "preferences" if draw(st.booleans()) else vec(finite)
    t_end = draw(st.floats(1e-3, 1e4))
    cfg = IntegratorConfig(t_end=t_end, step=draw(st.floats(1e-6, t_end)), record_every=draw(st.floats(1e-3, 10)),
                           abs_tol=draw(st.floats(1e-14, 0.5)))
    sweep = None
    if draw(st.booleans()):
        sweep = SweepSpec(draw(st.sampled_from(["p[1]", "w[1]", "a[1,1]"])), draw(finite), draw(finite),
                          draw(st.integers(1, 50)))
    analysis = {"multistart": draw(st.booleans()), "root_tol": draw(st.floats(1e-15, 1.0))}
    return ScenarioFile(draw(st.from_regex(r"[a-z][a-z0-9-]{0,12}", fullmatch=True)), n, W, vec(finite),
                        vec(positive), vec(positive), z0, cfg, draw(st.integers(0, 2**63 - 1)), analysis, sweep)


@given(scenarios())
@settings(max_examples=100)
def test_round_trip_exact(sc):
    back = parse_scenario(format_scenario(sc))
    assert back.name == sc.name and back.n == sc.n and back.seed == sc.seed
    for key in ("weights", "p", "w", "r"):
        assert np.array_equal(getattr(back, key), getattr(sc, key))
    if isinstance(sc.z0, str):
        assert back.z0 == "preferences"
    else:
        assert np.array_equal(back.z0, sc.z0)
    assert back.integrator == sc.integrator
    assert back.analysis == sc.analysis
    assert back.sweep == sc.sweep


def test_write_and_load(tmp_path, hopf_sc):
    path = write_scenario(hopf_sc, tmp_path / "h.scn")
    back = load_scenario(path)
    assert format_scenario(back) == format_scenario(hopf_sc)


# ------------------------------------------------------------------ CLI

def test_simulate_consensus(tmp_path):
    assert run_command("simulate", "paper-consensus-6", tmp_path) == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert rows[0] == ["t", "z_1", "z_2", "z_3", "z_4", "z_5", "z_6"]
    final = np.array(rows[-1][1:], dtype=float)
    assert float(rows[-1][0]) == 200.0
    assert np.all(np.abs(final - 40) < 0.05)
    rep = json.loads((tmp_path / "simulate.json").read_text())
    assert rep["schema_version"] == 1 and rep["convergence"]["converged"]


def test_analyze_disagreement(tmp_path):
    assert run_command("analyze", "paper-disagreement-6", tmp_path) == 0
    rep = json.loads((tmp_path / "analyze.json").read_text())
    assert rep["interval"]["m_min"] == pytest.approx(-11.13, abs=0.01)
    assert rep["interval"]["m_max"] == pytest.approx(15.53, abs=0.01)
    z = np.array(rep["equilibrium"]["z_star"])
    assert np.all((z >= -11.13) & (z <= 15.53))
    assert rep["contraction"]["satisfies_A2"] and rep["interior_test"]["holds"]
    assert not rep["consensus"]["consensus_exists"]


def test_analyze_consensus_uses_root_tol(tmp_path):
    assert run_command("analyze", "paper-consensus-6", tmp_path) == 0
    rep = json.loads((tmp_path / "analyze.json").read_text())
    assert rep["consensus"]["consensus_exists"]
    assert rep["consensus"]["xi"] == pytest.approx(40, abs=0.5)
    assert rep["consensus"]["dominance_order"] == [2, 3, 6, 4, 5, 1]


def test_bifurcate_hopf(tmp_path):
    assert run_command("bifurcate", "paper-hopf-2", tmp_path, horizon=300.0) == 0
    rep = json.loads((tmp_path / "bifurcate.json").read_text())
    assert rep["hopf"]["c2_star"] == 5.0
    assert rep["hopf"]["eligible"]
    assert rep["periodicity_necessary"]["all_hold"]
    rows = read_csv(tmp_path / "bifurcation_sweep.csv")
    assert rows[0] == ["param_value", "amplitude", "period", "converged"] and len(rows) == 12


def test_game_consensus(tmp_path):
    assert run_command("game", "paper-consensus-6", tmp_path) == 0
    rep = json.loads((tmp_path / "game.json").read_text())
    assert rep["classification"]["is_nash"]
    assert rep["poa"]["pi_u_exact"] == pytest.approx(1, abs=1e-6)
    assert rep["poa"]["pi_e_exact"] == pytest.approx(1, abs=1e-6)


def test_game_refuses_poa_with_enemies(tmp_path):
    assert run_command("game", "paper-hopf-2", tmp_path) == 0
    rep = json.loads((tmp_path / "game.json").read_text())
    assert rep["poa"]["applicable"] is False
    assert rep["classification"]["lne_necessary_holds"] is False


def test_deterministic_output(tmp_path):
    for cmd, fx, name in (("simulate", "paper-disagreement-6", "trajectory.csv"),
                          ("analyze", "paper-disagreement-6", "analyze.json"),
                          ("bifurcate", "paper-hopf-2", "bifurcate.json")):
        a, b = tmp_path / f"{cmd}-a", tmp_path / f"{cmd}-b"
        assert run_command(cmd, fx, a, horizon=100.0) == 0
        assert run_command(cmd, fx, b, horizon=100.0) == 0
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_grid(tmp_path):
    sc = parse_scenario(BASIC + "sweep.param = a[1,2]\nsweep.start = 0\nsweep.stop = 1\nsweep.num = 3\n"
                        "integrator.t_end = 50\n")
    assert run_command("sweep", sc, tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert rows[0] == ["param_value", "amplitude", "period", "converged"]
    assert [r[0] for r in rows[1:]] == ["0.0", "0.5", "1.0"]
    assert all(r[3] == "true" for r in rows[1:])
    cell = json.loads((tmp_path / "cells" / "cell_0001.json").read_text())
    assert cell["param_value"] == 0.5 and cell["schema_version"] == 1


def test_sweep_random_reproducible(tmp_path):
    sc = parse_scenario(BASIC + "integrator.t_end = 20\n")
    for d in ("a", "b"):
        assert run_command("sweep", sc, tmp_path / d, seed=2**63 + 5, random=True, count=3) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    for k in range(3):
        # each cell's scenario file is written out and loads back
        cell = load_scenario(tmp_path / "a" / "cells" / f"cell_{k:04d}.scn")
        assert cell.n == 2
    assert run_command("sweep", sc, tmp_path / "c", seed=6, random=True, count=3) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "c" / "sweep.csv").read_bytes()


def test_sweep_without_grid_is_error(tmp_path):
    assert run_command("sweep", parse_scenario(BASIC), tmp_path) == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"]["error"] == "validation_error" and err["error"]["field"] == "sweep"


def test_error_json_on_bad_scenario(tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text(BASIC.replace("w = 1 2", "w = 1 0"))
    assert run_command("simulate", bad, tmp_path / "out") == 1
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["schema_version"] == 1 and err["error"]["agent"] == 2 and err["error"]["field"] == "w"


def test_bifurcate_needs_two_agents(tmp_path):
    assert run_command("bifurcate", "paper-disagreement-6", tmp_path) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"]["field"] == "n"


def test_bad_flags(tmp_path):
    assert run_command("simulate", "paper-hopf-2", tmp_path, horizon=-3.0) == 1
    assert run_command("simulate", "paper-hopf-2", tmp_path, tol=0.0) == 1


def test_apply_param(hopf_sc):
    assert apply_param(hopf_sc, "c2", 6.0).weights[1, 0] == 6.0
    assert apply_param(hopf_sc, "w[2]", 9.0).w[1] == 9.0
    assert apply_param(hopf_sc, "a[1,2]", -3.0).weights[0, 1] == -3.0
    with pytest.raises(ValidationError):
        apply_param(hopf_sc, "p[3]", 1.0)


def test_jsonable():
    out = jsonable({"a": np.array([1.5, np.inf]), "b": 1 + 2j, "c": frozenset({3, 1}), "d": np.float64("nan")})
    assert out == {"a": [1.5, "inf"], "b": {"re": 1.0, "im": 2.0}, "c": [1, 3], "d": "nan"}


def test_main_and_module_entry(tmp_path):
    assert main(["simulate", "--scenario", "paper-hopf-2", "--out", str(tmp_path / "m"), "--horizon", "5"]) == 0
    proc = subprocess.run([sys.executable, "-m", "opinion_lab", "analyze", "--scenario", "no-such-fixture",
                           "--out", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 1 and "parse_error" in proc.stderr
    assert json.loads((tmp_path / "x" / "error.json").read_text())["error"]["error"] == "parse_error"


def test_scenario_convergence_tol_and_poa_toggle(tmp_path):
    from opinion_lab.scenario import format_scenario, parse_scenario

    base = format_scenario(load_scenario("paper-consensus-6"))
    sc = parse_scenario(base.replace("matrix weights", "analysis.poa = false\nanalysis.convergence_tol = 0.5\nmatrix weights"))
    assert run_command("game", sc, tmp_path / "g") == 0
    rep = json.loads((tmp_path / "g" / "game.json").read_text())
    assert rep["poa"]["applicable"] is False
    assert run_command("simulate", sc, tmp_path / "s") == 0
    assert json.loads((tmp_path / "s" / "simulate.json").read_text())["convergence"]["tol"] == 0.5
    bad = parse_scenario(base.replace("matrix weights", "analysis.convergence_tol = -1\nmatrix weights"))
    assert run_command("simulate", bad, tmp_path / "b") == 1
    assert json.loads((tmp_path / "b" / "error.json").read_text())["error"]["field"] == "tol"
