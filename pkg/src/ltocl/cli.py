"""Command-line front end: single runs, the ablation sweeps, and buffer inspection.

Configuration comes from an optional JSON file plus flag overrides (flags win).
Each verb executes full experiments across the requested seeds, writes per-seed
artifacts (run.json, accuracy_matrix.csv, loss_log.csv, per-task confusion
matrices), and aggregates everything into one schema-validated summary.json.
Independent seeds can run in parallel worker processes; the worker count is
read from the LTOCL_WORKERS environment variable and defaults to 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import artifacts
from .errors import ConfigError, LtoclError
from .model import ModelConfig
from .numeric import SgdConfig
from .stream import (
    ArraySource,
    StreamConfig,
    SyntheticSource,
    build_stream,
    load_csv_dataset,
    load_idx_dataset,
    make_balanced_test_split,
)
from .trainer import (
    METHOD_DELTA,
    RunResult,
    TrainConfig,
    derive_seeds,
    run_experiment,
)

WORKERS_ENV = "LTOCL_WORKERS"

DEFAULT_SWEEP_RHOS = (0.005, 0.03, 0.07, 0.1, 1.0)
DEFAULT_SWEEP_PAIRINGS = (1, 2, 5, 10, 15)

_STAT_KEYS = (
    "average_accuracy",
    "forgetting",
    "head_accuracy",
    "median_accuracy",
    "tail_accuracy",
    "wall_clock_seconds",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """One fully resolved experiment: dataset, stream, model, training, seeds."""

    dataset: str = "synthetic"       # "synthetic" | "idx:IMAGES:LABELS" | "csv:PATH"
    dim: int = 32                    # synthetic only
    cluster_spread: float = 0.2      # synthetic only
    max_per_class: int = 2000
    test_per_class: int = 50
    rho: float = 0.01
    tasks: int = 10
    classes_per_task: tuple[int, ...] | None = None  # None -> 2 per task
    batch_size: int = 16
    shuffle_classes: bool = True     # decouple class frequency rank from task order
    hidden_dims: tuple[int, ...] = (64, 64)
    embed_dim: int = 64
    proj_dim: int = 128
    method: str = METHOD_DELTA
    stage2_loss: str = "eq"
    stage2_steps_per_batch: int = 10  # classifier-only steps are cheap next to stage 1
    pairing: int = 1
    buffer_size: int = 200
    tau: float = 0.09
    lr: float = 0.1
    weight_decay: float = 1e-4
    prior_scope: str = "task"
    noise_sigma: float = 0.1
    mask_prob: float = 0.1
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out: str = "results"

    @property
    def num_classes(self) -> int:
        return sum(self.classes_per_task)


_SPEC_FIELDS = {f.name for f in fields(ExperimentSpec)}


def _int_tuple(value, what: str) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v != ""]
    if isinstance(value, (int, np.integer)):
        value = [value]
    try:
        return tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected integers, got {value!r}") from exc


def make_spec(raw: dict) -> ExperimentSpec:
    """Build and validate a spec from a plain dict (config file or worker payload)."""
    unknown = set(raw) - _SPEC_FIELDS
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    merged = {f.name: raw.get(f.name, f.default) for f in fields(ExperimentSpec)}

    tasks = int(merged["tasks"])
    cpt = merged["classes_per_task"]
    if cpt is None:
        cpt = (2,) * tasks
    else:
        cpt = _int_tuple(cpt, "classes_per_task")
        if len(cpt) == 1 and tasks > 1:
            cpt = cpt * tasks
    merged["tasks"] = tasks
    merged["classes_per_task"] = cpt
    merged["hidden_dims"] = _int_tuple(merged["hidden_dims"], "hidden_dims")
    merged["seeds"] = _int_tuple(merged["seeds"], "seeds")
    if not merged["seeds"]:
        raise ConfigError("seeds: need at least one seed")

    spec = ExperimentSpec(**merged)
    _validate_spec(spec)
    return spec


def _validate_spec(spec: ExperimentSpec) -> None:
    """Construct every sub-config once so field errors surface before any run."""
    parse_dataset(spec.dataset)
    if spec.test_per_class < 1:
        raise ConfigError(f"test_per_class must be >= 1, got {spec.test_per_class}")
    try:
        StreamConfig(
            rho=spec.rho,
            num_classes=spec.num_classes,
            max_per_class=spec.max_per_class,
            num_tasks=spec.tasks,
            classes_per_task=spec.classes_per_task,
            batch_size=spec.batch_size,
            seed=0,
            shuffle_classes=spec.shuffle_classes,
        )
        ModelConfig(
            input_dim=max(spec.dim, 1),
            num_classes=spec.num_classes,
            hidden_dims=spec.hidden_dims,
            embed_dim=spec.embed_dim,
            proj_dim=spec.proj_dim,
        )
        _train_config(spec, seed=0)
        SgdConfig(learning_rate=spec.lr, weight_decay=spec.weight_decay)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(spec: ExperimentSpec, seed: int) -> TrainConfig:
    return TrainConfig(
        method=spec.method,
        pairing=spec.pairing,
        buffer_size=spec.buffer_size,
        learning_rate=spec.lr,
        weight_decay=spec.weight_decay,
        tau=spec.tau,
        prior_scope=spec.prior_scope,
        stage2_loss=spec.stage2_loss,
        stage2_steps_per_batch=spec.stage2_steps_per_batch,
        noise_sigma=spec.noise_sigma,
        mask_prob=spec.mask_prob,
        seed=seed,
    )


def parse_dataset(value: str) -> tuple[str, tuple[str, ...]]:
    parts = value.split(":")
    kind = parts[0]
    if kind == "synthetic" and len(parts) == 1:
        return "synthetic", ()
    if kind == "idx" and len(parts) == 3:
        return "idx", (parts[1], parts[2])
    if kind == "csv" and len(parts) == 2:
        return "csv", (parts[1],)
    raise ConfigError(
        f"dataset must be 'synthetic', 'idx:IMAGES:LABELS', or 'csv:PATH', got {value!r}"
    )


def build_source(spec: ExperimentSpec, stream_seed: int):
    kind, paths = parse_dataset(spec.dataset)
    if kind == "synthetic":
        return SyntheticSource(spec.num_classes, spec.dim, spec.cluster_spread, seed=stream_seed)
    data = load_idx_dataset(*paths) if kind == "idx" else load_csv_dataset(paths[0])
    source = ArraySource(data, seed=stream_seed)
    if source.num_classes != spec.num_classes:
        raise ConfigError(
            f"classes_per_task sums to {spec.num_classes} "
            f"but the dataset has {source.num_classes} classes"
        )
    return source


def run_one(spec: ExperimentSpec, run_seed: int) -> RunResult:
    """Execute the spec for one run seed, end to end."""
    seeds = derive_seeds(run_seed)
    source = build_source(spec, seeds.stream)
    stream_cfg = StreamConfig(
        rho=spec.rho,
        num_classes=spec.num_classes,
        max_per_class=spec.max_per_class,
        num_tasks=spec.tasks,
        classes_per_task=spec.classes_per_task,
        batch_size=spec.batch_size,
        seed=seeds.stream,
        shuffle_classes=spec.shuffle_classes,
    )
    tasks = build_stream(source, stream_cfg)
    test_set = make_balanced_test_split(source, spec.num_classes, spec.test_per_class, seeds.stream)
    model_cfg = ModelConfig(
        input_dim=source.dim,
        num_classes=spec.num_classes,
        hidden_dims=spec.hidden_dims,
        embed_dim=spec.embed_dim,
        proj_dim=spec.proj_dim,
    )
    return run_experiment(tasks, test_set, _train_config(spec, run_seed), model_cfg)


def _seed_worker(payload: tuple[dict, int]) -> RunResult:
    raw, seed = payload
    return run_one(make_spec(raw), seed)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {n}")
    return n


def execute_group(spec: ExperimentSpec) -> list[RunResult]:
    """Run every seed of the spec, in parallel workers when configured."""
    payloads = [(spec_dict(spec), s) for s in spec.seeds]
    workers = worker_count()
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
            return list(pool.map(_seed_worker, payloads))
    return [_seed_worker(p) for p in payloads]


def spec_dict(spec: ExperimentSpec) -> dict:
    return artifacts.jsonable(asdict(spec))


# -- artifact assembly ---------------------------------------------------------

def _nan_to_none(x: float) -> float | None:
    return None if x != x else float(x)


def write_seed_artifacts(seed_dir: Path, spec: ExperimentSpec, seed: int, r: RunResult) -> None:
    seed_dir.mkdir(parents=True, exist_ok=True)
    t = r.accuracy_matrix.shape[0]
    run_doc = {
        "config": {**spec_dict(spec), "seed": seed},
        "seeds": derive_seeds(seed)._asdict(),
        "per_task_average_accuracy": [
            float(np.mean(r.accuracy_matrix[i, : i + 1])) for i in range(t)
        ],
        "average_accuracy": r.average_accuracy,
        "forgetting": r.forgetting,
        "group_accuracies": {k: _nan_to_none(v) for k, v in r.group_accuracies.items()},
        "per_class_accuracy": r.per_class_accuracy,
        "class_counts": r.class_counts,
        "buffer": {
            "capacity": spec.buffer_size,
            "occupancy": r.buffer_occupancy,
            "seen_count": r.buffer_seen_count,
            "class_histogram": r.buffer_class_histogram,
        },
        "samples": {"generated": r.samples_generated, "consumed": r.samples_consumed},
        "wall_clock_seconds": r.wall_clock_seconds,
    }
    artifacts.write_json(str(seed_dir / "run.json"), run_doc)
    artifacts.write_accuracy_matrix(str(seed_dir / "accuracy_matrix.csv"), r.accuracy_matrix)
    artifacts.write_loss_log(str(seed_dir / "loss_log.csv"), r.loss_log)
    for i, (conf, seen) in enumerate(zip(r.confusions, r.seen_sets), start=1):
        artifacts.write_confusion(str(seed_dir / f"confusion_{i}.csv"), conf, seen)
        artifacts.write_confusion(
            str(seed_dir / f"confusion_{i}_normalized.csv"), conf, seen, normalized=True
        )


def seed_entry(seed: int, r: RunResult) -> dict:
    return {
        "seed": seed,
        "average_accuracy": r.average_accuracy,
        "forgetting": r.forgetting,
        "head_accuracy": _nan_to_none(r.group_accuracies["head"]),
        "median_accuracy": _nan_to_none(r.group_accuracies["median"]),
        "tail_accuracy": _nan_to_none(r.group_accuracies["tail"]),
        "wall_clock_seconds": r.wall_clock_seconds,
    }


def _stats(entries: list[dict]) -> tuple[dict, dict]:
    mean, std = {}, {}
    for key in _STAT_KEYS:
        vals = [e[key] for e in entries if e[key] is not None]
        if vals:
            mean[key] = float(np.mean(vals))
            std[key] = float(np.std(vals))
        else:
            mean[key] = None
            std[key] = None
    return mean, std


def make_group(name: str, spec: ExperimentSpec, results: list[RunResult]) -> dict:
    entries = [seed_entry(s, r) for s, r in zip(spec.seeds, results)]
    mean, std = _stats(entries)
    return {"name": name, "config": spec_dict(spec), "per_seed": entries, "mean": mean, "std": std}


def _fmt_stat(group: dict, key: str) -> str:
    m, s = group["mean"][key], group["std"][key]
    if m is None:
        return "n/a"
    return f"{m:.4f} ± {s:.4f}"


def _print_group(group: dict) -> None:
    print(
        f"{group['name']}: A_T {_fmt_stat(group, 'average_accuracy')}"
        f" | F_T {_fmt_stat(group, 'forgetting')}"
        f" | tail {_fmt_stat(group, 'tail_accuracy')}"
        f" ({len(group['per_seed'])} seed(s))"
    )


def run_group_with_artifacts(spec: ExperimentSpec, name: str, group_dir: Path) -> tuple[dict, list[RunResult]]:
    results = execute_group(spec)
    for seed, result in zip(spec.seeds, results):
        write_seed_artifacts(group_dir / f"seed_{seed}", spec, seed, result)
    group = make_group(name, spec, results)
    _print_group(group)
    return group, results


# -- verbs ---------------------------------------------------------------------

def cmd_run(spec: ExperimentSpec, out: Path, args) -> int:
    group, _ = run_group_with_artifacts(spec, "run", out)
    artifacts.write_summary(str(out / "summary.json"), {"verb": "run", "groups": [group]})
    return 0


def cmd_sweep_imbalance(spec: ExperimentSpec, out: Path, args) -> int:
    rhos = _parse_float_list(args.rho, "rho") if args.rho else list(DEFAULT_SWEEP_RHOS)
    groups = []
    rows = []
    for rho in rhos:
        sub = replace(spec, rho=rho)
        _validate_spec(sub)
        group, _ = run_group_with_artifacts(sub, f"rho={rho:g}", out / f"rho_{rho:g}")
        groups.append(group)
        rows.append([rho, group["mean"]["average_accuracy"], group["std"]["average_accuracy"]])
    artifacts.write_table(
        str(out / "sweep_imbalance.csv"),
        ["rho", "average_accuracy_mean", "average_accuracy_std"],
        rows,
    )
    artifacts.write_summary(
        str(out / "summary.json"), {"verb": "sweep-imbalance", "groups": groups}
    )
    return 0


def cmd_sweep_pairing(spec: ExperimentSpec, out: Path, args) -> int:
    ms = _int_tuple(args.pairing, "pairing") if args.pairing else DEFAULT_SWEEP_PAIRINGS
    groups = []
    rows = []
    for m in ms:
        sub = replace(spec, pairing=int(m))
        _validate_spec(sub)
        group, _ = run_group_with_artifacts(sub, f"m={m}", out / f"m_{m}")
        groups.append(group)
        rows.append(
            [
                int(m),
                group["mean"]["average_accuracy"],
                group["std"]["average_accuracy"],
                group["mean"]["forgetting"] if group["mean"]["forgetting"] is not None else float("nan"),
                group["std"]["forgetting"] if group["std"]["forgetting"] is not None else float("nan"),
                group["mean"]["wall_clock_seconds"],
            ]
        )
    artifacts.write_table(
        str(out / "sweep_pairing.csv"),
        [
            "pairing",
            "average_accuracy_mean",
            "average_accuracy_std",
            "forgetting_mean",
            "forgetting_std",
            "wall_clock_seconds_mean",
        ],
        rows,
    )
    artifacts.write_summary(str(out / "summary.json"), {"verb": "sweep-pairing", "groups": groups})
    return 0


def cmd_compare_losses(spec: ExperimentSpec, out: Path, args) -> int:
    """The stage-2 objective ablation: same seeds, EQ versus plain CE."""
    arms = [("contrastive+CE", "ce"), ("contrastive+EQ", "eq")]
    groups = []
    rows = []
    for name, stage2 in arms:
        sub = replace(spec, method=METHOD_DELTA, stage2_loss=stage2)
        _validate_spec(sub)
        group, _ = run_group_with_artifacts(sub, name, out / f"loss_{stage2}")
        groups.append(group)
        rows.append(
            [
                name,
                group["mean"]["average_accuracy"],
                group["std"]["average_accuracy"],
                group["mean"]["forgetting"] if group["mean"]["forgetting"] is not None else float("nan"),
                group["mean"]["head_accuracy"] if group["mean"]["head_accuracy"] is not None else float("nan"),
                group["mean"]["median_accuracy"] if group["mean"]["median_accuracy"] is not None else float("nan"),
                group["mean"]["tail_accuracy"] if group["mean"]["tail_accuracy"] is not None else float("nan"),
            ]
        )
    artifacts.write_table(
        str(out / "compare_losses.csv"),
        [
            "arm",
            "average_accuracy_mean",
            "average_accuracy_std",
            "forgetting_mean",
            "head_accuracy_mean",
            "median_accuracy_mean",
            "tail_accuracy_mean",
        ],
        rows,
    )
    artifacts.write_summary(str(out / "summary.json"), {"verb": "compare-losses", "groups": groups})
    return 0


def cmd_inspect_buffer(spec: ExperimentSpec, out: Path, args) -> int:
    """Run one seed and dump the final buffer contents plus composition stats."""
    seed = spec.seeds[0]
    single = replace(spec, seeds=(seed,))
    group, results = run_group_with_artifacts(single, f"seed={seed}", out)
    result = results[0]
    artifacts.write_buffer_csv(str(out / "buffer.csv"), result.buffer_contents)
    artifacts.write_json(
        str(out / "buffer_stats.json"),
        {
            "capacity": spec.buffer_size,
            "occupancy": result.buffer_occupancy,
            "seen_count": result.buffer_seen_count,
            "class_histogram": result.buffer_class_histogram,
            "stream_class_counts": result.class_counts,
        },
    )
    artifacts.write_summary(str(out / "summary.json"), {"verb": "inspect-buffer", "groups": [group]})
    hist = result.buffer_class_histogram
    print(
        f"buffer: {result.buffer_occupancy}/{spec.buffer_size} slots filled, "
        f"{result.buffer_seen_count} items offered, "
        f"{int((hist > 0).sum())} classes present"
    )
    return 0


_VERBS = {
    "run": cmd_run,
    "sweep-imbalance": cmd_sweep_imbalance,
    "sweep-pairing": cmd_sweep_pairing,
    "compare-losses": cmd_compare_losses,
    "inspect-buffer": cmd_inspect_buffer,
}


# -- argument handling -----------------------------------------------------------

def _parse_float_list(value: str, what: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {value!r}") from exc


def _add_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with spec fields; flags override it")
    p.add_argument("--dataset", help="synthetic | idx:IMAGES:LABELS | csv:PATH")
    p.add_argument("--rho", help="imbalance ratio; comma list for sweep-imbalance")
    p.add_argument("--tasks", type=int)
    p.add_argument("--classes-per-task", dest="classes_per_task",
                   help="classes in each task: single int or comma list")
    p.add_argument("--buffer-size", dest="buffer_size", type=int)
    p.add_argument("--pairing", help="exemplars per stream sample; comma list for sweep-pairing")
    p.add_argument("--tau", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--prior-scope", dest="prior_scope", choices=["task", "batch"])
    p.add_argument("--method", choices=["delta", "er_ce"])
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltocl",
        description="Dual-stage training experiments on long-tailed single-pass streams.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "run": "run the configured experiment across seeds",
        "sweep-imbalance": "repeat the experiment over a list of imbalance ratios",
        "sweep-pairing": "repeat the experiment over exemplar pairing factors",
        "compare-losses": "ablate the stage-2 objective (EQ vs plain CE), same seeds",
        "inspect-buffer": "run one seed and dump the final replay buffer",
    }
    for verb, text in helps.items():
        _add_flags(sub.add_parser(verb, help=text))
    return parser


def build_spec(args) -> ExperimentSpec:
    raw: dict = {}
    if args.config:
        try:
            with open(args.config) as f:
                loaded = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: top level must be a JSON object")
        raw.update(loaded)

    overrides = {
        "dataset": args.dataset,
        "tasks": args.tasks,
        "classes_per_task": args.classes_per_task,
        "buffer_size": args.buffer_size,
        "tau": args.tau,
        "lr": args.lr,
        "weight_decay": args.weight_decay,
        "batch_size": args.batch_size,
        "prior_scope": args.prior_scope,
        "method": args.method,
        "seeds": args.seeds,
        "out": args.out,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})

    # --rho and --pairing double as sweep lists; single values apply to the spec
    if args.rho and args.verb != "sweep-imbalance":
        values = _parse_float_list(args.rho, "rho")
        if len(values) != 1:
            raise ConfigError(f"{args.verb} takes a single --rho, got {len(values)}")
        raw["rho"] = values[0]
    if args.pairing and args.verb != "sweep-pairing":
        values = _int_tuple(args.pairing, "pairing")
        if len(values) != 1:
            raise ConfigError(f"{args.verb} takes a single --pairing, got {len(values)}")
        raw["pairing"] = values[0]

    return make_spec(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = build_spec(args)
        out = Path(spec.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
        return _VERBS[args.verb](spec, out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LtoclError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
