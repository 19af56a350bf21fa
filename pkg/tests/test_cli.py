import json
from pathlib import Path

import pytest

from darca_ncs_tuning.artifacts import ArtifactUtils
from darca_ncs_tuning.cli import (
    COMMANDS,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_PENALIZED,
    STUDY_HEADER,
    main,
    sign_test,
)
from darca_ncs_tuning.config import load_experiment
from darca_ncs_tuning.fractional import ControllerParams
from darca_ncs_tuning.simloop import expected_cost

from .conftest import NETWORKED_PID, P1_FOPID

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SHORT_SIM = {"horizon": 2.0, "disturbance": {"amplitude": 1.0, "time": 1.0}}
LOSSY = {"drop_prob": 0.1, "delay": {"law": "uniform", "lo": 0.0, "hi": 0.1}}


def run(command, config_path, out, *extra):
    return main([command, "--config", config_path, "--out", str(out), *extra])


def read_json(path):
    return json.loads(path.read_text())


def test_simulate_writes_trace_and_cost(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": P1_FOPID.to_dict(),
            "sim": dict(SHORT_SIM, network=LOSSY),
            "seed": 2,
        }
    )
    out = tmp_path / "sim"
    assert run("simulate", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "trace.csv"))
    assert len(rows) == 201
    assert list(rows[0]) == ["t", "r", "y", "u", "e"]
    report = read_json(out / "cost.json")
    assert report["samples"] == 201
    assert report["seed"] == 2
    assert report["j"] == report["itae"] + report["isco"]
    assert set(report["indices"]) == {"iae", "ise", "itae", "itse", "istes", "isco"}


def test_reruns_are_byte_identical(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": P1_FOPID.to_dict(),
            "sim": dict(SHORT_SIM, network=LOSSY),
        }
    )
    assert run("simulate", path, tmp_path / "a", "--seed", "5") == EXIT_OK
    assert run("simulate", path, tmp_path / "b", "--seed", "5") == EXIT_OK
    for name in ("trace.csv", "cost.json"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes()


def test_tune_writes_result_and_history(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "mode": "pid",
            "bounds": {"lower": [2.0, 1.0, 0.0], "upper": [3.0, 2.0, 0.1]},
            "optimizer": {"algorithm": "de", "np": 4, "g_max": 1},
            "sim": SHORT_SIM,
            "replicates": 1,
        }
    )
    out = tmp_path / "tune"
    assert run("tune", path, out) == EXIT_OK
    result = read_json(out / "result.json")
    assert result["evaluations"] == 8
    assert result["penalized"] is False
    assert set(result["parameters"]) == {"kp", "ki", "kd"}
    history = ArtifactUtils.read_csv(str(out / "history.csv"))
    assert [row["generation"] for row in history] == ["0", "1"]
    assert float(history[-1]["best_cost"]) == result["j_min"]


def test_result_feeds_simulate(write_config, tmp_path):
    tune_path = write_config(
        {
            "plant": "p1_fodup",
            "mode": "pid",
            "bounds": {"lower": [2.0, 1.0, 0.0], "upper": [3.0, 2.0, 0.1]},
            "optimizer": {"np": 4, "g_max": 0},
            "sim": SHORT_SIM,
            "replicates": 1,
        },
        "tune.json",
    )
    assert run("tune", tune_path, tmp_path / "tune") == EXIT_OK
    sim_path = write_config(
        {
            "plant": "p1_fodup",
            "controller": {"from_result": str(tmp_path / "tune" / "result.json")},
            "sim": SHORT_SIM,
        },
        "simulate.json",
    )
    assert run("simulate", sim_path, tmp_path / "sim") == EXIT_OK
    tuned = read_json(tmp_path / "tune" / "result.json")
    report = read_json(tmp_path / "sim" / "cost.json")
    assert report["parameters"]["kp"] == tuned["parameters"]["kp"]
    assert report["j"] == tuned["j_min"]


def test_tune_without_stabilizing_controller_exits_two(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p2_sodup",
            "mode": "pid",
            "bounds": {"lower": [0, 0, 0], "upper": [1e-9, 1e-9, 1e-9]},
            "optimizer": {"algorithm": "ga", "pop": 4, "g_max": 1, "elite_count": 1},
            "replicates": 1,
        }
    )
    out = tmp_path / "tune"
    assert run("tune", path, out) == EXIT_PENALIZED
    assert read_json(out / "result.json")["penalized"] is True


def test_sweep_surface_rows(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": NETWORKED_PID.to_dict(),
            "sweep": {
                "lambda_grid": [0.9, 1.0],
                "mu": {"start": 0.8, "stop": 1.0, "num": 2},
            },
            "sim": SHORT_SIM,
            "replicates": 1,
        }
    )
    out = tmp_path / "sweep"
    assert run("sweep", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "surface.csv"))
    assert [(r["lambda"], r["mu"]) for r in rows] == [
        ("0.9", "0.8"),
        ("0.9", "1.0"),
        ("1.0", "0.8"),
        ("1.0", "1.0"),
    ]
    for row in rows:
        if row["penalized"] == "false":
            assert float(row["j"]) == float(row["itae"]) + float(row["isco"])


def test_channel_audit_outputs(write_config, tmp_path):
    path = write_config({"audit": {"channel": LOSSY, "packets": 500}, "seed": 1})
    out = tmp_path / "audit"
    assert run("channel-audit", path, out) == EXIT_OK
    stats = read_json(out / "stats.json")
    assert stats["sent_count"] == 500
    assert stats["delivered_count"] + stats["dropped_count"] == 500
    assert 0.0 <= stats["ks_pvalue"] <= 1.0
    assert len(stats["delay_histogram"]) == 20
    log = ArtifactUtils.read_csv(str(out / "channel_log.csv"))
    assert len(log) == 500


def test_degradation_study(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": P1_FOPID.to_dict(),
            "study": {"levels": [0.02, 0.04]},
            "sim": SHORT_SIM,
            "replicates": 2,
        }
    )
    out = tmp_path / "deg"
    assert run("study-degradation", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "degradation.csv"))
    assert list(rows[0]) == list(STUDY_HEADER)
    assert [r["condition"] for r in rows] == [
        "static_0.02",
        "uniform_0.02",
        "static_0.04",
        "uniform_0.04",
    ]
    summary = read_json(out / "summary.json")
    assert set(summary["sign_test_p"]) == {"0.02", "0.04"}
    assert summary["replicates"] == 2
    assert summary["largest_stable_static_bound"] == 0.04
    assert summary["tso_enabled"] is False


def test_buffer_study(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": P1_FOPID.to_dict(),
            "sim": dict(SHORT_SIM, network=LOSSY),
            "replicates": 2,
        }
    )
    out = tmp_path / "buffer"
    assert run("study-buffer", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "buffer.csv"))
    assert [r["condition"] for r in rows] == ["tso_on", "tso_off"]
    summary = read_json(out / "summary.json")
    assert summary["baseline"] == "tso_on"
    assert list(summary["sign_test_p"]) == ["tso_off"]


def test_robustness_study(write_config, tmp_path):
    path = write_config(
        {
            "plant": "p1_fodup",
            "controller": P1_FOPID.to_dict(),
            "study": {
                "drop_prob": 0.05,
                "laws": [
                    {"law": "uniform", "lo": 0.0, "hi": 0.05},
                    {
                        "name": "normal",
                        "law": "truncated_normal",
                        "mean": 0.025,
                        "sd": 0.01,
                        "lo": 0.0,
                        "hi": 0.05,
                    },
                ],
            },
            "sim": SHORT_SIM,
            "replicates": 2,
        }
    )
    out = tmp_path / "robust"
    assert run("study-robustness", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "robustness.csv"))
    assert [r["condition"] for r in rows] == ["uniform", "normal"]
    summary = read_json(out / "summary.json")
    assert summary["mean_j_spread"] >= 0.0
    assert set(summary["divergence_fraction"]) == {"uniform", "normal"}


def test_config_errors_exit_one(write_config, tmp_path):
    assert run("simulate", str(tmp_path / "none.json"), tmp_path / "o") == (
        EXIT_CONFIG_ERROR
    )
    missing_controller = write_config({"plant": "p1_fodup"})
    assert run("simulate", missing_controller, tmp_path / "o") == EXIT_CONFIG_ERROR
    bad_sweep = write_config(
        {
            "plant": "p1_fodup",
            "controller": NETWORKED_PID.to_dict(),
            "sweep": {"lambda": [0.5]},
        },
        "sweep.json",
    )
    assert run("sweep", bad_sweep, tmp_path / "o") == EXIT_CONFIG_ERROR
    valid = write_config({"audit": {"channel": {}, "packets": 10}}, "audit.json")
    assert run("channel-audit", valid, tmp_path / "o", "--seed", "-3") == (
        EXIT_CONFIG_ERROR
    )


def test_unusable_output_directory_exits_one(write_config, tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    path = write_config({"audit": {"channel": {}, "packets": 10}})
    assert run("channel-audit", path, blocker) == EXIT_CONFIG_ERROR


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        main([])


def test_sign_test():
    assert sign_test([1.0, 2.0], [1.0, 2.0]) is None
    assert sign_test([2.0] * 6, [1.0] * 6) == pytest.approx(0.5**6)
    assert sign_test([1.0] * 6, [2.0] * 6) == pytest.approx(1.0)


def test_zero_gain_controller_without_excitation(write_config, tmp_path):
    path = write_config(
        {
            "plant": "lag_foptd",
            "controller": {"kp": 0.0, "ki": 0.0, "kd": 0.0},
            "sim": {
                "horizon": 2.0,
                "setpoint": {"amplitude": 0.0},
                "disturbance": {"amplitude": 0.0, "time": 1.0},
            },
        }
    )
    out = tmp_path / "zero"
    assert run("simulate", path, out) == EXIT_OK
    rows = ArtifactUtils.read_csv(str(out / "trace.csv"))
    assert all(float(r["y"]) == 0.0 and float(r["u"]) == 0.0 for r in rows)
    assert read_json(out / "cost.json")["j"] == 0.0


@pytest.mark.parametrize(
    "name, command",
    [
        ("tune_p1_fopid.json", "tune"),
        ("tune_lag_foptd_ga.json", "tune"),
        ("simulate_p2_fopid.json", "simulate"),
        ("sweep_p1.json", "sweep"),
        ("channel_audit.json", "channel-audit"),
        ("study_degradation.json", "study-degradation"),
        ("study_buffer.json", "study-buffer"),
        ("study_robustness.yaml", "study-robustness"),
    ],
)
def test_committed_configs_parse(name, command):
    path = CONFIG_DIR / name
    exp = load_experiment(str(path), COMMANDS[command][1])
    assert exp.source == str(path)


def committed(name):
    return str(CONFIG_DIR / name)


@pytest.mark.slow
def test_desk_scale_tuning_stabilizes_p1(tmp_path):
    out = tmp_path / "tune"
    assert run("tune", committed("tune_p1_fopid.json"), out, "--jobs", "2") == EXIT_OK
    result = read_json(out / "result.json")
    assert result["penalized"] is False
    assert result["parameters"]["kp"] > 0.0
    exp = load_experiment(committed("tune_p1_fopid.json"))
    tuned = ControllerParams.from_dict(result["parameters"])
    detuned = ControllerParams(10.0, 10.0, 10.0)
    tuned_cost = expected_cost(exp.plant, tuned, exp.sim, exp.weights, 10, 1)
    detuned_cost = expected_cost(exp.plant, detuned, exp.sim, exp.weights, 10, 1)
    assert tuned_cost.mean.j < detuned_cost.mean.j


@pytest.mark.slow
def test_ga_tuning_of_lag_plant_needs_no_derivative(tmp_path):
    out = tmp_path / "tune"
    path = committed("tune_lag_foptd_ga.json")
    assert run("tune", path, out, "--jobs", "2") == EXIT_OK
    result = read_json(out / "result.json")
    assert result["evaluations"] == 20 + 200 * 18
    assert result["parameters"]["kd"] < 0.1


@pytest.mark.slow
def test_stochastic_delay_degrades_before_lumped_delay(tmp_path):
    out = tmp_path / "deg"
    path = committed("study_degradation.json")
    assert run("study-degradation", path, out, "--jobs", "2") == EXIT_OK
    summary = read_json(out / "summary.json")
    assert summary["sign_test_p"]["0.1"] < 0.05
    first_divergent = summary["first_divergent_stochastic_bound"]
    assert first_divergent is not None
    assert first_divergent < summary["largest_stable_static_bound"]


@pytest.mark.slow
def test_tso_buffer_lowers_cost(tmp_path):
    out = tmp_path / "buffer"
    assert run("study-buffer", committed("study_buffer.json"), out) == EXIT_OK
    rows = {
        r["condition"]: r for r in ArtifactUtils.read_csv(str(out / "buffer.csv"))
    }
    assert float(rows["tso_on"]["mean_j"]) < float(rows["tso_off"]["mean_j"])
    assert read_json(out / "summary.json")["sign_test_p"]["tso_off"] < 0.05


@pytest.mark.slow
def test_p2_fopid_is_robust_across_delay_laws(tmp_path):
    out = tmp_path / "robust"
    path = committed("study_robustness.yaml")
    assert run("study-robustness", path, out, "--jobs", "2") == EXIT_OK
    summary = read_json(out / "summary.json")
    assert set(summary["divergence_fraction"].values()) == {0.0}
    assert summary["mean_j_spread"] <= 0.25
