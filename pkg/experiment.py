"""
experiment.py

Experiment config schema and the seeded batch runner behind `lpdp_cli.py`.

A config file is JSON with three blocks:

    {
      "_comment": "free text",
      "task":    {"model": "drift", "oracle": "pwm", "initial": {...}, ...},
      "methods": [{"name": "lpdp-mixed-max", "kind": "lpdp", "params": {...}}, ...],
      "run":     {"samples": 500, "total_steps": 256, "window": "first:16", "seed": 0}
    }

Every sample i draws its initial sequence from the stream (seed, i, 1) and its
rollout randomness from (seed, i, 0), so results do not depend on worker
count or completion order.

Usage:
    from experiment import load_config, run_experiment, write_outputs

    config, text = load_config("configs/enhancer_toy.json")
    result = run_experiment(config)
    write_outputs(result, "runs/enhancer", text)
"""

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from threading import Lock
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from baselines import BeamConfig, CemConfig, SmcConfig, TdsConfig, beam_rollout, cem_rollout, raw_rollout, \
    smc_rollout, tds_rollout
from errors import ConfigError, LpdpError
from lpdp import GuidanceConfig, StepRecord, TrajectoryRecord, guided_rollout
from metrics import JSD_LOG_BASE, KmerDistribution, base_traj_ll, load_reference_sequences, summarize_method
from oracle import CachedOracle, SpliceToyOracle, build_oracle
from proposal import build_model
from seqcore import ALPHABET, EditSpace, LengthBounds, parse_action

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.3.0"
BASE_DIR = Path(__file__).parent

ROLLOUT_STREAM = 0
INITIAL_STREAM = 1
REFERENCE_STREAM = 2

DEFAULT_WORKERS = int(os.environ.get("LPDP_WORKERS", "4"))
DEFAULT_OUT_DIR = Path(os.environ.get("LPDP_OUT_DIR", "runs"))

SAMPLES_FILE = "samples.jsonl"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"
CONFIG_COPY = "config.json"

METHOD_CONFIGS = {
    "raw": None,
    "lpdp": GuidanceConfig,
    "beam": BeamConfig,
    "cem": CemConfig,
    "smc": SmcConfig,
    "tds": TdsConfig,
}

ABLATION_GRIDS = {
    "window": ("first", "mid", "last"),
    "length": (8, 16, 32),
    "lambda": (0.25, 0.5, 1.0),
    "horizon": (1, 2, 3),
}


# === Schema ===

class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InitialSequence(_Block):
    """
    literal: `sequence` as given
    random:  uniform ACGT string of `length`
    inpaint: left + middle + right, only the middle editable; the middle is
             `middle` if given, else random of `middle_length`
    """

    kind: Literal["literal", "random", "inpaint"] = "literal"
    sequence: Optional[str] = None
    length: Optional[int] = Field(None, ge=1)
    left: str = ""
    middle: Optional[str] = None
    middle_length: Optional[int] = Field(None, ge=1)
    right: str = ""

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "literal" and not self.sequence:
            raise ValueError("literal initial sequence needs 'sequence'")
        if self.kind == "random" and self.length is None:
            raise ValueError("random initial sequence needs 'length'")
        if self.kind == "inpaint" and self.middle is None and self.middle_length is None:
            raise ValueError("inpaint initial sequence needs 'middle' or 'middle_length'")
        return self

    @property
    def flanks(self) -> tuple:
        if self.kind != "inpaint":
            return 0, 0
        return len(self.left), len(self.right)

    def draw(self, rng: np.random.Generator) -> str:
        if self.kind == "literal":
            return self.sequence
        if self.kind == "random":
            return random_sequence(self.length, rng)
        middle = self.middle if self.middle is not None else random_sequence(self.middle_length, rng)
        return self.left + middle + self.right


class TaskConfig(_Block):
    model: str = "drift"
    model_params: dict = Field(default_factory=dict)
    oracle: str = "pwm"
    oracle_params: dict = Field(default_factory=dict)
    min_len: int = Field(1, ge=1)
    max_len: int = Field(512, ge=1)
    initial: InitialSequence
    reference_path: Optional[str] = None
    reference_samples: int = Field(64, ge=1)


class MethodConfig(_Block):
    name: str
    kind: Literal["raw", "lpdp", "beam", "cem", "smc", "tds"]
    params: dict = Field(default_factory=dict)


class RunConfig(_Block):
    samples: int = Field(500, ge=1)
    total_steps: int = Field(256, ge=1)
    window: str = "first:16"
    seed: int = Field(0, ge=0)
    cache: Literal["per-sample", "shared"] = "per-sample"
    workers: Optional[int] = Field(None, ge=1)
    out_dir: Optional[str] = None


class ExperimentConfig(_Block):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    comment: Optional[str] = Field(None, alias="_comment")
    task: TaskConfig
    methods: list[MethodConfig] = Field(min_length=1)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _unique_names(self):
        names = [m.name for m in self.methods]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"duplicate method names: {dupes}")
        return self


def _format_errors(e: ValidationError, prefix: tuple = ()) -> str:
    lines = []
    for err in e.errors():
        path = ".".join(str(p) for p in prefix + tuple(err["loc"]))
        lines.append(f"{path or '<root>'}: {err['msg']}")
    return "; ".join(lines)


def method_params(method: MethodConfig, index: int = 0):
    """Validated parameter model for a method block (None for raw)."""
    cls = METHOD_CONFIGS[method.kind]
    if cls is None:
        if method.params:
            raise ConfigError(f"methods.{index}.params: raw sampling takes no parameters")
        return None
    try:
        return cls.model_validate(method.params)
    except ValidationError as e:
        raise ConfigError(_format_errors(e, ("methods", index, "params"))) from None


def parse_config(data: dict) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None
    for i, method in enumerate(config.methods):
        method_params(method, i)
    return config


def load_config(path) -> tuple:
    """(ExperimentConfig, raw file text); the text feeds the manifest hash."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(data), text


# === Task ===

def random_sequence(length: int, rng: np.random.Generator) -> str:
    return "".join(rng.choice(ALPHABET, size=length))


def sample_seed(seed: int, index: int, stream: int) -> list:
    return [seed, index, stream]


@dataclass
class Task:
    """Frozen model, oracle and edit space shared by every method of one experiment."""

    config: TaskConfig
    space: EditSpace
    model: object
    oracle: object

    @classmethod
    def build(cls, config: TaskConfig) -> "Task":
        try:
            bounds = LengthBounds(config.min_len, config.max_len)
        except LpdpError as e:
            raise ConfigError(f"task: {e}") from None
        left, right = config.initial.flanks
        space = EditSpace(bounds, left_fixed=left, right_fixed=right)
        model = build_model(config.model, config.model_params, space)
        oracle = build_oracle(config.oracle, config.oracle_params)
        return cls(config, space, model, oracle)

    @property
    def is_splice(self) -> bool:
        return isinstance(self.oracle, SpliceToyOracle)

    def initial_sequence(self, seed: int, index: int) -> str:
        rng = np.random.default_rng(sample_seed(seed, index, INITIAL_STREAM))
        return self.space.validate(self.config.initial.draw(rng))

    def reference(self, seed: int, total_steps: int) -> KmerDistribution:
        """Reference k-mer distribution from the configured file, else from raw rollouts."""
        if self.config.reference_path:
            path = Path(self.config.reference_path)
            if not path.is_absolute() and not path.exists():
                path = BASE_DIR / path
            return KmerDistribution.from_sequences(load_reference_sequences(path))
        finals = []
        for j in range(self.config.reference_samples):
            rng = np.random.default_rng(sample_seed(seed, j, REFERENCE_STREAM))
            x0 = self.space.validate(self.config.initial.draw(rng))
            finals.append(raw_rollout(x0, total_steps, self.model, rng).final)
        return KmerDistribution.from_sequences(finals)


# === Runner ===

def method_window(params, run: RunConfig) -> str:
    """An explicit window in the method block overrides the run window."""
    if params is not None and "window" in params.model_fields_set:
        return params.window
    return run.window


def run_sample(task: Task, method: MethodConfig, params, run: RunConfig, seed: int, index: int,
               oracle: CachedOracle) -> TrajectoryRecord:
    x0 = task.initial_sequence(seed, index)
    rollout_seed = sample_seed(seed, index, ROLLOUT_STREAM)
    window = method_window(params, run)
    T = run.total_steps

    if method.kind == "raw":
        record = raw_rollout(x0, T, task.model, rollout_seed)
    elif method.kind == "lpdp":
        record = guided_rollout(x0, T, window, task.model, oracle, params, rollout_seed)
    elif method.kind == "beam":
        record = beam_rollout(x0, T, window, task.model, oracle, params, rollout_seed)
    elif method.kind == "cem":
        record = cem_rollout(x0, T, window, task.model, oracle, params, rollout_seed)
    elif method.kind == "smc":
        record = smc_rollout(x0, T, window, task.model, oracle, params, rollout_seed)
    else:
        record = tds_rollout(x0, T, window, task.model, oracle, params, rollout_seed)

    record.method = method.name
    record.sample_index = index
    record.reward = oracle.evaluate(record.final)
    return record


def run_method(task: Task, method: MethodConfig, run: RunConfig, seed: int, workers: int, progress=None) -> list:
    """All samples of one method, ordered by sample index."""
    params = method_params(method)
    n = run.samples
    results = {}
    done = [0]
    done_lock = Lock()

    def finish(index, record):
        results[index] = record
        with done_lock:
            done[0] += 1
            if progress:
                progress(method.name, done[0], n, record)

    if run.cache == "shared":
        if workers > 1:
            logger.warning("shared cache runs samples serially (%d workers requested)", workers)
        shared = CachedOracle(task.oracle)
        for i in range(n):
            finish(i, run_sample(task, method, params, run, seed, i, shared))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(run_sample, task, method, params, run, seed, i, CachedOracle(task.oracle)): i
                for i in range(n)
            }
            for future in as_completed(futures):
                finish(futures[future], future.result())

    task.model.clear_cache()
    return [results[i] for i in range(n)]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed: int
    records: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


def run_experiment(config: ExperimentConfig, seed: int = None, workers: int = None, progress=None) -> ExperimentResult:
    seed = config.run.seed if seed is None else seed
    workers = workers or config.run.workers or DEFAULT_WORKERS
    task = Task.build(config.task)
    reference = task.reference(seed, config.run.total_steps)

    result = ExperimentResult(config, seed)
    for method in config.methods:
        logger.info("running %s (%s) on %d samples", method.name, method.kind, config.run.samples)
        records = run_method(task, method, config.run, seed, workers, progress)
        result.records[method.name] = records
        row = summarize_method(method.name, records, reference, task.oracle, splice=task.is_splice)
        row["cache"] = config.run.cache
        result.rows.append(row)
    return result


# === Ablation ===

def window_parts(window: str) -> tuple:
    where, sep, count = window.partition(":")
    if not sep or where not in ABLATION_GRIDS["window"]:
        raise ConfigError(f"ablation needs a first/mid/last:N run window, got {window!r}")
    return where, int(count)


def ablation_points(axis: str, method: MethodConfig, run: RunConfig) -> list:
    """(axis value, method block, run block) for every grid point."""
    if axis not in ABLATION_GRIDS:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_GRIDS)}")
    if method.kind != "lpdp":
        raise ConfigError(f"ablation sweeps an lpdp method block, got {method.kind!r}")

    points = []
    where, length = window_parts(run.window)
    params = {k: v for k, v in method.params.items() if k != "window"}
    for value in ABLATION_GRIDS[axis]:
        point_run, point_params = run, dict(params)
        if axis == "window":
            point_run = run.model_copy(update={"window": f"{value}:{length}"})
        elif axis == "length":
            if value > run.total_steps:
                logger.warning("skipping window length %d beyond %d steps", value, run.total_steps)
                continue
            point_run = run.model_copy(update={"window": f"{where}:{value}"})
        elif axis == "lambda":
            point_params["lambda"] = value
            point_params.pop("lam", None)
        else:
            point_params["horizon"] = value
        block = MethodConfig(name=f"{method.name}[{axis}={value}]", kind="lpdp", params=point_params)
        points.append((value, block, point_run))
    return points


def run_ablation(config: ExperimentConfig, axis: str, method_name: str = None, seed: int = None,
                 workers: int = None, progress=None) -> list:
    """One row per grid point: reward stats and calls/sample."""
    seed = config.run.seed if seed is None else seed
    workers = workers or config.run.workers or DEFAULT_WORKERS
    method = select_method(config, method_name, kind="lpdp")
    task = Task.build(config.task)
    reference = task.reference(seed, config.run.total_steps)

    rows = []
    for value, block, run in ablation_points(axis, method, config.run):
        records = run_method(task, block, run, seed, workers, progress)
        row = {"axis": axis, "value": value, "window": run.window}
        row.update(summarize_method(block.name, records, reference, task.oracle, splice=task.is_splice))
        rows.append(row)
    return rows


def select_method(config: ExperimentConfig, name: str = None, kind: str = None) -> MethodConfig:
    for method in config.methods:
        if (name is None or method.name == name) and (kind is None or method.kind == kind):
            return method
    wanted = name or kind
    raise ConfigError(f"no method block matching {wanted!r}")


# === Output ===

def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sample_line(record: TrajectoryRecord) -> str:
    data = record.to_json()
    data["calls"] = record.misses
    data["traj_ll"] = base_traj_ll(record) if record.steps else None
    return json.dumps(data)


def write_samples(records_by_method: dict, path) -> Path:
    path = Path(path)
    with open(path, "w") as f:
        for records in records_by_method.values():
            for record in records:
                f.write(sample_line(record) + "\n")
    return path


def write_csv(rows: list, path) -> Path:
    path = Path(path)
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    return path


def build_manifest(result: ExperimentResult, config_text: str, command: str = "run") -> dict:
    return {
        "command": command,
        "tool_version": TOOL_VERSION,
        "config_sha256": config_digest(config_text),
        "seed": result.seed,
        "cache_mode": result.config.run.cache,
        "jsd_log_base": JSD_LOG_BASE,
        "samples": result.config.run.samples,
        "total_steps": result.config.run.total_steps,
        "methods": [m.name for m in result.config.methods],
        "created": datetime.now().isoformat(),
    }


def write_outputs(result: ExperimentResult, out_dir, config_text: str) -> Path:
    """samples.jsonl, summary.csv, manifest.json and a config copy under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_samples(result.records, out_dir / SAMPLES_FILE)
    write_csv(result.rows, out_dir / SUMMARY_FILE)
    (out_dir / CONFIG_COPY).write_text(config_text)
    with open(out_dir / MANIFEST_FILE, "w") as f:
        json.dump(build_manifest(result, config_text), f, indent=2)
    return out_dir


def record_from_json(data: dict) -> TrajectoryRecord:
    steps = [
        StepRecord(s["t"], parse_action(s["action"]), s["log_p0"], s["guided"], s.get("reward"))
        for s in data["steps"]
    ]
    return TrajectoryRecord(
        x0=data["x0"], final=data["final"], method=data["method"], sample_index=data["sample"], steps=steps,
        misses=data["misses"], hits=data["hits"], reward=data["reward"], extras=data.get("extras", {}),
    )


def load_run(run_dir) -> tuple:
    """(ExperimentConfig, {method: [TrajectoryRecord]}) from a run directory."""
    run_dir = Path(run_dir)
    config, _ = load_config(run_dir / CONFIG_COPY)
    samples = run_dir / SAMPLES_FILE
    if not samples.exists():
        raise ConfigError(f"no {SAMPLES_FILE} in {run_dir}")
    records = {}
    with open(samples) as f:
        for line in f:
            if line.strip():
                record = record_from_json(json.loads(line))
                records.setdefault(record.method, []).append(record)
    return config, records
