"""Desk-scale runs of the shipped configs (pytest -m slow)."""

import pytest

from experiment import load_config, run_experiment
from metrics import reward_stats

pytestmark = pytest.mark.slow

SEEDS = range(5)
LPDP_METHODS = ("onestep", "lpdp-mixed-max", "lpdp-st_after-lse")


def shrunk(path, samples, kinds=None):
    config, _ = load_config(path)
    methods = [m for m in config.methods if kinds is None or m.kind in kinds]
    return config.model_copy(update={
        "methods": methods,
        "run": config.run.model_copy(update={"samples": samples}),
    })


def test_enhancer_guidance_over_seeds():
    config = shrunk("configs/enhancer_toy.json", 100, kinds=("raw", "lpdp"))
    per_seed = {}
    for seed in SEEDS:
        result = run_experiment(config, seed=seed, workers=4)
        for row in result.rows:
            per_seed.setdefault(row["method"], []).append(row["reward_mean"])
        assert next(r for r in result.rows if r["method"] == "raw")["calls_per_sample"] == 0.0

    stats = {name: reward_stats(means) for name, means in per_seed.items()}
    report = ", ".join(f"{n} {s['reward_mean']:.5f}±{s['reward_stderr']:.5f}" for n, s in stats.items())
    raw = stats["raw"]["reward_mean"]
    for name in LPDP_METHODS:
        assert stats[name]["reward_mean"] > raw, report
    for name in ("lpdp-mixed-max", "lpdp-st_after-lse"):
        assert stats[name]["reward_mean"] >= stats["onestep"]["reward_mean"], report


def test_enhancer_lookahead_costs_more_calls():
    result = run_experiment(shrunk("configs/enhancer_toy.json", 8, kinds=("lpdp",)), workers=4)
    rows = {row["method"]: row for row in result.rows}
    assert rows["lpdp-mixed-max"]["calls_per_sample"] > rows["onestep"]["calls_per_sample"]


def test_splice_inpainting_keeps_exons():
    config = shrunk("configs/splice_toy.json", 8)
    result = run_experiment(config, workers=4)
    left, right = config.task.initial.left, config.task.initial.right
    for records in result.records.values():
        for r in records:
            assert r.final.startswith(left) and r.final.endswith(right)
    rows = {row["method"]: row for row in result.rows}
    assert {"splice_geomean", "gt_rate"} <= set(rows["raw"])
    assert rows["lpdp-st_after-lse"]["splice_geomean"] >= rows["raw"]["splice_geomean"]
