"""Experiment harness: configs, runs, exports, presets, bench, CLI.

Runs here are kept tiny (synthetic objectives, short horizons); the
full-scale benchmark claims live in the acceptance suite.
"""

import csv
import json

import numpy as np
import pytest

from macoord.cli import main
from macoord.envs import make_environment
from macoord.errors import ConfigError, DataError
from macoord.ground import ActionId
from macoord.harness import (
    BENCH_MATRICES,
    CSV_COLUMNS,
    PRESETS,
    RoundLog,
    RunConfig,
    compute_rho_regret,
    export_csv,
    export_json,
    load_json_logs,
    make_learner,
    resolve_preset,
    run_bench,
    run_experiment,
    running_average,
    scheme_from_dict,
    write_world_trace,
)

TINY_ENV = {"kind": "synthetic", "objective": "coverage-random", "sizes": [2, 2]}


def tiny_config(**over):
    doc = {
        "environment": dict(TINY_ENV),
        "graph": {"kind": "complete"},
        "learner": {"kind": "random"},
        "horizon": 4,
        "seed": 0,
    }
    doc.update(over)
    return RunConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# configuration objects
# ---------------------------------------------------------------------------


def test_run_config_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        RunConfig.from_dict(
            {
                "environment": TINY_ENV,
                "learner": {"kind": "random"},
                "horizon": 4,
                "verbosity": 3,
            }
        )


def test_run_config_requires_core_fields():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"learner": {"kind": "random"}, "horizon": 4})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"environment": TINY_ENV, "horizon": 4})
    with pytest.raises(ConfigError):
        tiny_config(horizon=0)
    with pytest.raises(ConfigError):
        tiny_config(learner={"kind": "simulated-annealing"})
    with pytest.raises(ConfigError):
        tiny_config(rho=1.5)


def test_run_config_defaults():
    cfg = RunConfig.from_dict(
        {"environment": TINY_ENV, "learner": {"kind": "random"}, "horizon": 4}
    )
    assert cfg.graph == {"kind": "complete"}
    assert cfg.seed == 0
    assert cfg.oracle_regret is False
    assert cfg.rho == 1.0


def test_scheme_from_dict():
    assert scheme_from_dict(None).kind == "submodular"
    assert scheme_from_dict({"kind": "weak-dr", "alpha": 0.3}).alpha == 0.3
    s = scheme_from_dict({"kind": "weak-sub", "gamma": 0.8, "beta": 1.2})
    assert (s.gamma, s.beta) == (0.8, 1.2)
    with pytest.raises(ConfigError):
        scheme_from_dict({"kind": "weak-dr"})  # missing alpha
    with pytest.raises(ConfigError):
        scheme_from_dict({"kind": "fourier"})


def test_make_learner_kinds():
    from macoord.learners import (
        GreedyLearner,
        MetaConditionalGradientLearner,
        PolicyConsensusLearner,
        RandomLearner,
    )
    from macoord.network import graph_from_spec

    cfg = tiny_config()
    env = make_environment({**cfg.environment, "horizon": 4}, cfg.seed)
    graph = graph_from_spec(cfg.graph, 2)
    for kind, cls in (
        ("ma-spl", PolicyConsensusLearner),
        ("ma-mpl", MetaConditionalGradientLearner),
        ("random", RandomLearner),
        ("greedy", GreedyLearner),
    ):
        cfg2 = tiny_config(learner={"kind": kind})
        assert isinstance(make_learner(cfg2, env.partition, graph), cls)
    with pytest.raises(ConfigError):
        make_learner(
            tiny_config(learner={"kind": "ma-spl", "batch": "many"}),
            env.partition,
            graph,
        )


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------


def test_run_experiment_single_round_known_value():
    # with one action per agent the random baseline has no choice to make
    cfg = tiny_config(
        environment={"kind": "synthetic", "objective": "modular", "sizes": [1, 1]},
        horizon=1,
    )
    logs = run_experiment(cfg)
    env = make_environment({**cfg.environment, "horizon": 1}, cfg.seed)
    expect = env.begin_round(1).value([ActionId(0, 0), ActionId(1, 0)])
    assert len(logs) == 1
    assert logs[0].t == 1
    assert logs[0].utility == pytest.approx(expect, abs=1e-12)
    assert logs[0].opt is None and logs[0].cum_regret is None


def test_run_experiment_is_deterministic():
    cfg = tiny_config(learner={"kind": "ma-spl", "batch": 2}, horizon=6)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a == b
    c = run_experiment(tiny_config(learner={"kind": "ma-spl", "batch": 2},
                                   horizon=6, seed=1))
    assert a != c


def test_run_experiment_oracle_regret_columns():
    cfg = tiny_config(oracle_regret=True, rho=0.5, horizon=3)
    logs = run_experiment(cfg)
    cum = 0.0
    for log in logs:
        assert log.opt is not None
        cum += 0.5 * log.opt - log.utility
        assert log.cum_regret == pytest.approx(cum, abs=1e-12)


def test_run_experiment_regret_needs_enumerable_scale():
    cfg = tiny_config(
        environment={"kind": "facility", "agents": 6, "targets": 3},
        oracle_regret=True,
    )
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_ekf_alias_is_tracking_gain():
    base = dict(
        graph={"kind": "complete"},
        learner={"kind": "random"},
        horizon=3,
        seed=2,
    )
    a = run_experiment(
        RunConfig.from_dict(
            {"environment": {"kind": "ekf", "agents": 2, "targets": 2}, **base}
        )
    )
    b = run_experiment(
        RunConfig.from_dict(
            {
                "environment": {"kind": "tracking-gain", "agents": 2, "targets": 2},
                **base,
            }
        )
    )
    assert a == b


def test_run_experiment_writes_world_trace(tmp_path):
    cfg = RunConfig.from_dict(
        {
            "environment": {
                "kind": "facility",
                "agents": 2,
                "targets": 2,
                "record_world": True,
            },
            "learner": {"kind": "random"},
            "horizon": 3,
            "out": str(tmp_path),
        }
    )
    run_experiment(cfg)
    rows = list(csv.reader((tmp_path / "world.csv").open()))
    assert rows[0] == ["tick", "entity", "x", "y", "kind"]
    assert len(rows) == 1 + (2 + 2) * 4  # header + (agents+targets) x (T+1)
    assert rows[1][1] == "agent:0"


# ---------------------------------------------------------------------------
# regret arithmetic and summaries
# ---------------------------------------------------------------------------


def _logs(utilities, opts):
    return [
        RoundLog(t=i + 1, utility=u, opt=o, cum_regret=None, disagreement=0.0,
                 queries=0)
        for i, (u, o) in enumerate(zip(utilities, opts))
    ]


def test_compute_rho_regret_hand_values():
    logs = _logs([1.0, 0.5, 2.0], [2.0, 1.5, 2.0])
    assert compute_rho_regret(logs, 1.0) == pytest.approx(2.0, abs=1e-12)
    assert compute_rho_regret(logs, 0.0) == pytest.approx(-3.5, abs=1e-12)
    # playing the oracle optimum every round zeroes the rho=1 regret
    matched = _logs([2.0, 1.5], [2.0, 1.5])
    assert compute_rho_regret(matched, 1.0) == 0.0
    with pytest.raises(DataError):
        compute_rho_regret(_logs([1.0], [None]), 1.0)


def test_running_average():
    np.testing.assert_allclose(running_average([1.0, 2.0, 3.0]), [1.0, 1.5, 2.0],
                               atol=1e-15)
    np.testing.assert_allclose(
        running_average([4.0]), [4.0], atol=0
    )


# ---------------------------------------------------------------------------
# persistence formats
# ---------------------------------------------------------------------------


def test_export_csv_format_and_roundtrip(tmp_path):
    logs = [
        RoundLog(t=1, utility=1 / 3, opt=None, cum_regret=None, disagreement=0.25,
                 queries=12),
        RoundLog(t=2, utility=2.5, opt=3.0, cum_regret=0.5, disagreement=0.0,
                 queries=12),
    ]
    path = export_csv(logs, tmp_path / "rounds.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == list(CSV_COLUMNS)
    assert rows[1][2] == "" and rows[1][3] == ""  # absent oracle columns
    # float cells round-trip exactly through repr
    assert float(rows[1][1]) == 1 / 3
    assert rows[2] == ["2", "2.5", "3.0", "0.5", "0.0", "12"]


def test_export_json_roundtrip(tmp_path):
    logs = [
        RoundLog(t=1, utility=0.1, opt=0.2, cum_regret=0.1, disagreement=0.0,
                 queries=3),
        RoundLog(t=2, utility=0.3, opt=None, cum_regret=None, disagreement=1.5,
                 queries=3),
    ]
    path = export_json(logs, tmp_path / "rounds.json")
    assert load_json_logs(path) == logs


def test_write_world_trace_format(tmp_path):
    rows = [(0, "agent:0", 0.1, -2.0, "agent"), (1, "target:0", 1 / 3, 0.0, "random")]
    path = write_world_trace(rows, tmp_path / "world.csv")
    got = list(csv.reader(path.open()))
    assert got[0] == ["tick", "entity", "x", "y", "kind"]
    assert float(got[2][2]) == 1 / 3


# ---------------------------------------------------------------------------
# presets and bench
# ---------------------------------------------------------------------------


def test_resolve_preset_returns_deep_copy():
    r = resolve_preset("facility-desk")
    r["environment"]["agents"] = 999
    assert PRESETS["facility-desk"]["environment"]["agents"] == 6
    with pytest.raises(ConfigError):
        resolve_preset("galaxy-scale")


def test_preset_documents_are_valid_configs():
    for name in PRESETS:
        cfg = RunConfig.from_dict(resolve_preset(name))
        assert cfg.horizon >= 1


def test_run_bench_tiny_matrix(tmp_path):
    PRESETS["tiny-test"] = {
        "environment": {"kind": "coverage", "agents": 2, "epsilon": 0.1, "k": 1},
        "graph": {"kind": "complete"},
        "learner": {"kind": "random"},
        "horizon": 5,
        "seed": 0,
    }
    BENCH_MATRICES["tiny-test"] = [
        ("random", {"kind": "random"}),
        ("greedy", {"kind": "greedy"}),
    ]
    try:
        summary = run_bench("tiny-test", tmp_path, seeds=(0, 1))
        assert (tmp_path / "random" / "seed0.csv").exists()
        assert (tmp_path / "greedy" / "seed1.csv").exists()
        saved = json.loads((tmp_path / "summary.json").read_text())
        assert saved == summary
        assert summary["seeds"] == [0, 1]
        stats = summary["learners"]
        assert len(stats["random"]["per_seed_mean_utility"]) == 2
        # the static instance never changes, so greedy dominates random
        assert stats["greedy"]["mean_utility"] >= stats["random"]["mean_utility"]
        rows = list(csv.reader((tmp_path / "greedy" / "seed0.csv").open()))
        assert len(rows) == 1 + 5
    finally:
        PRESETS.pop("tiny-test")
        BENCH_MATRICES.pop("tiny-test")
    with pytest.raises(ConfigError):
        run_bench("facility-full", tmp_path)  # no bench matrix for this preset


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------


def _write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


CLI_DOC = {
    "environment": TINY_ENV,
    "graph": {"kind": "complete"},
    "learner": {"kind": "ma-spl", "batch": 1},
    "horizon": 5,
    "seed": 0,
}


def test_cli_run_spl_writes_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path, CLI_DOC)
    out = tmp_path / "out"
    rc = main(["run-spl", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert "ma-spl: T=5 mean utility" in capsys.readouterr().out
    rows = list(csv.reader((out / "rounds.csv").open()))
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 6
    assert len(load_json_logs(out / "rounds.json")) == 5


def test_cli_forces_learner_kind(tmp_path, capsys):
    cfg = _write_config(tmp_path, CLI_DOC)  # says ma-spl
    rc = main(["run-mpl", "--config", str(cfg)])
    assert rc == 0
    assert capsys.readouterr().out.startswith("ma-mpl: T=5")


def test_cli_baseline_flag(tmp_path, capsys):
    cfg = _write_config(tmp_path, CLI_DOC)
    assert main(["run-baseline", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("random: T=5")
    assert main(["run-baseline", "--baseline", "greedy", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("greedy: T=5")


def test_cli_seed_override_changes_run(tmp_path):
    cfg = _write_config(tmp_path, {**CLI_DOC, "learner": {"kind": "random"}})
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    main(["run-baseline", "--config", str(cfg), "--out", str(out1)])
    main(["run-baseline", "--config", str(cfg), "--out", str(out2)])
    main(["run-baseline", "--config", str(cfg), "--seed", "7", "--out", str(out3)])
    same = (out1 / "rounds.csv").read_bytes() == (out2 / "rounds.csv").read_bytes()
    diff = (out1 / "rounds.csv").read_bytes() != (out3 / "rounds.csv").read_bytes()
    assert same and diff


def test_cli_config_errors_exit_one(tmp_path, capsys):
    assert main(["run-spl"]) == 1  # neither --config nor --preset
    assert "config error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run-spl", "--config", str(bad)]) == 1
    missing = tmp_path / "nope.json"
    assert main(["run-spl", "--config", str(missing)]) == 1
    assert main(["bench", "--preset", "galaxy-scale", "--out", str(tmp_path)]) == 1


def test_cli_preset_with_config_override(tmp_path, capsys):
    over = _write_config(tmp_path, {"horizon": 3}, "over.json")
    rc = main(
        [
            "run-baseline",
            "--preset",
            "coverage-escape",
            "--config",
            str(over),
            "--seed",
            "1",
        ]
    )
    assert rc == 0
    assert capsys.readouterr().out.startswith("random: T=3")


def test_cli_bench_tiny(tmp_path, capsys):
    PRESETS["tiny-test"] = {
        "environment": {"kind": "coverage", "agents": 2, "epsilon": 0.1, "k": 1},
        "graph": {"kind": "complete"},
        "learner": {"kind": "random"},
        "horizon": 4,
        "seed": 0,
    }
    BENCH_MATRICES["tiny-test"] = [("random", {"kind": "random"})]
    try:
        rc = main(["bench", "--preset", "tiny-test", "--out",
                   str(tmp_path / "bench"), "--seeds", "2"])
    finally:
        PRESETS.pop("tiny-test")
        BENCH_MATRICES.pop("tiny-test")
    assert rc == 0
    assert "random: mean utility" in capsys.readouterr().out
    assert (tmp_path / "bench" / "summary.json").exists()
    saved = json.loads((tmp_path / "bench" / "summary.json").read_text())
    assert saved["seeds"] == [0, 1]


def test_cli_verify_battery(tmp_path, capsys):
    rc = main(["verify", "--seed", "0", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out and "FAIL" not in out
    report = json.loads((tmp_path / "verify.json").read_text())
    assert all(entry["passed"] for entry in report)
