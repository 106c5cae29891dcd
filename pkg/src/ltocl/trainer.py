"""The dual-stage online training loop and the single-stage replay baseline.

Each incoming batch is paired with buffered exemplars and their augmented
views, then pushed through stage one (contrastive representation update) and
stage two (classifier-only update on frozen embeddings) before the raw stream
samples are offered to the reservoir. Everything is seeded: stream, model
init, and training randomness derive from one run seed by fixed offsets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .buffer import ReplayBuffer, compose_combined_batch
from .errors import ConfigError
from .losses import ClassPrior, cross_entropy_loss, equalization_loss, supcon_loss
from .metrics import average_accuracy, evaluate, forgetting, headtail_breakdown
from .model import STAGE_ONE, STAGE_TWO, DualHeadNet, ModelConfig
from .numeric import SgdConfig, sgd_step
from .stream import AugmentConfig, Batch, TaskStream

METHOD_DELTA = "delta"
METHOD_ER_CE = "er_ce"

# fixed offsets turning one run seed into the three named seeds
MODEL_SEED_OFFSET = 1 << 32
TRAIN_SEED_OFFSET = 2 << 32


class Seeds(NamedTuple):
    stream: int
    model: int
    train: int


def derive_seeds(run_seed: int) -> Seeds:
    return Seeds(run_seed, run_seed + MODEL_SEED_OFFSET, run_seed + TRAIN_SEED_OFFSET)


@dataclass(frozen=True)
class TrainConfig:
    method: str = METHOD_DELTA
    pairing: int = 1
    buffer_size: int = 200
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    tau: float = 0.09
    prior_scope: str = "task"        # reset prior counts per task or per batch
    stage2_loss: str = "eq"          # "eq" or the plain cross-entropy ablation arm
    stage2_steps_per_batch: int = 1
    noise_sigma: float = 0.1
    mask_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.method not in (METHOD_DELTA, METHOD_ER_CE):
            raise ConfigError(f"method must be 'delta' or 'er_ce', got {self.method!r}")
        if self.prior_scope not in ("task", "batch"):
            raise ConfigError(f"prior_scope must be 'task' or 'batch', got {self.prior_scope!r}")
        if self.stage2_loss not in ("eq", "ce"):
            raise ConfigError(f"stage2_loss must be 'eq' or 'ce', got {self.stage2_loss!r}")
        if self.stage2_steps_per_batch < 1:
            raise ConfigError(
                f"stage2_steps_per_batch must be >= 1, got {self.stage2_steps_per_batch}"
            )
        if self.pairing < 0:
            raise ConfigError(f"pairing must be >= 0, got {self.pairing}")
        if self.buffer_size < 1:
            raise ConfigError(f"buffer_size must be >= 1, got {self.buffer_size}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


class StepLog(NamedTuple):
    step: int
    stage1_loss: float  # NaN for the single-stage baseline
    stage2_loss: float


@dataclass
class RunState:
    """Everything the step functions mutate."""

    model: DualHeadNet
    buffer: ReplayBuffer
    prior: ClassPrior
    augmenter: AugmentConfig
    sgd: SgdConfig
    cfg: TrainConfig
    task_id: int = 0
    step_counter: int = 0
    samples_consumed: int = 0
    loss_log: list[StepLog] = field(default_factory=list)
    stage_hook: Callable[[str, DualHeadNet], None] | None = None

    def _hook(self, event: str) -> None:
        if self.stage_hook is not None:
            self.stage_hook(event, self.model)


def make_run_state(
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    stage_hook: Callable[[str, DualHeadNet], None] | None = None,
) -> RunState:
    seeds = derive_seeds(cfg.seed)
    train_root = np.random.SeedSequence(seeds.train)
    buffer_rng, augment_key = train_root.spawn(2)
    return RunState(
        model=DualHeadNet(model_cfg, seed=seeds.model),
        buffer=ReplayBuffer(cfg.buffer_size, model_cfg.input_dim, rng=np.random.default_rng(buffer_rng)),
        prior=ClassPrior(model_cfg.num_classes),
        augmenter=AugmentConfig(
            noise_sigma=cfg.noise_sigma,
            mask_prob=cfg.mask_prob,
            seed=int(augment_key.generate_state(1, dtype=np.uint64)[0]),
        ),
        sgd=SgdConfig(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay),
        cfg=cfg,
        stage_hook=stage_hook,
    )


def _update_prior(state: RunState, labels: np.ndarray) -> None:
    if state.cfg.prior_scope == "batch":
        state.prior.reset_counts()
    state.prior.update(labels)


def delta_step(state: RunState, batch: Batch):
    """One dual-stage update on a fresh stream batch.

    Order: retrieve exemplars, build the combined batch, stage-1 contrastive
    update, prior update over every combined-batch label, stage-2 classifier
    update(s) on recomputed frozen embeddings, then offer only the raw stream
    samples to the reservoir. Returns the combined batch that was trained on.
    """
    cfg = state.cfg
    model = state.model
    exemplars = state.buffer.pair_exemplars(batch, cfg.pairing)
    combined = compose_combined_batch(batch, exemplars, state.augmenter)

    model.set_stage(STAGE_ONE)
    state._hook("pre_stage1")
    e, enc_cache = model.encode(combined.features)
    z, pre_norm = model.project(e)
    stage1 = supcon_loss(z, combined.labels, cfg.tau)
    grad_e = model.backward_projection(stage1.grad, pre_norm, e)
    model.backward_encoder(grad_e, enc_cache)
    sgd_step(model.parameters(), state.sgd)
    state._hook("post_stage1")

    _update_prior(state, combined.labels)

    model.set_stage(STAGE_TWO)
    state._hook("pre_stage2")
    # embeddings recomputed once after the stage-1 update; the encoder is
    # frozen here, so repeated classifier steps can reuse them
    e2, _ = model.encode(combined.features)
    stage2_value = np.nan
    for _ in range(cfg.stage2_steps_per_batch):
        logits = model.classify(e2)
        if cfg.stage2_loss == "eq":
            stage2 = equalization_loss(logits, combined.labels, state.prior)
        else:
            stage2 = cross_entropy_loss(logits, combined.labels, state.prior.seen_classes())
        model.backward_classifier(stage2.grad, e2)
        sgd_step(model.parameters(), state.sgd)
        stage2_value = stage2.value
    state._hook("post_stage2")

    state.buffer.reservoir_update(batch)
    state.step_counter += 1
    state.samples_consumed += len(batch)
    state.loss_log.append(StepLog(state.step_counter, stage1.value, stage2_value))
    return combined


def _set_all_trainable(model: DualHeadNet) -> None:
    for p in model.parameters():
        p.trainable = True


def er_ce_step(state: RunState, batch: Batch):
    """Single-stage baseline: cross-entropy on stream plus exemplars, no views.

    Returns the combined batch that was trained on.
    """
    cfg = state.cfg
    model = state.model
    exemplars = state.buffer.pair_exemplars(batch, cfg.pairing)
    combined = batch if len(exemplars) == 0 else Batch.concat([batch, exemplars])

    _update_prior(state, combined.labels)

    _set_all_trainable(model)
    e, enc_cache = model.encode(combined.features)
    logits = model.classify(e)
    result = cross_entropy_loss(logits, combined.labels, state.prior.seen_classes())
    grad_e = model.backward_classifier(result.grad, e)
    model.backward_encoder(grad_e, enc_cache)
    sgd_step(model.parameters(), state.sgd)

    state.buffer.reservoir_update(batch)
    state.step_counter += 1
    state.samples_consumed += len(batch)
    state.loss_log.append(StepLog(state.step_counter, np.nan, result.value))
    return combined


_STEP_FUNCTIONS = {METHOD_DELTA: delta_step, METHOD_ER_CE: er_ce_step}


@dataclass
class RunResult:
    accuracy_matrix: np.ndarray              # (T, T), NaN above the diagonal
    confusions: list[np.ndarray]             # full-grid counts after each task
    seen_sets: list[np.ndarray]              # sorted seen class ids after each task
    loss_log: list[StepLog]
    class_counts: np.ndarray                 # training samples per class
    average_accuracy: float
    forgetting: float | None                 # None for a single-task run
    group_accuracies: dict[str, float]
    per_class_accuracy: np.ndarray
    buffer_occupancy: int
    buffer_seen_count: int
    buffer_class_histogram: np.ndarray
    buffer_contents: Batch
    samples_consumed: int
    samples_generated: int
    wall_clock_seconds: float


def _count_training_samples(tasks: list[TaskStream], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for task in tasks:
        for b in task.batches:
            np.add.at(counts, b.labels, 1)
    return counts


def run_experiment(
    tasks: list[TaskStream],
    test_set: Batch,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    stage_hook: Callable[[str, DualHeadNet], None] | None = None,
) -> RunResult:
    """Consume every task once, evaluating on all seen tasks after each.

    The per-class accuracy breakdown at the end uses the final confusion
    matrix and the actual training counts recounted from the stream.
    """
    if not tasks:
        raise ConfigError("need at least one task")
    if model_cfg is None:
        num_classes = 1 + max(max(t.class_ids) for t in tasks)
        model_cfg = ModelConfig(input_dim=test_set.dim, num_classes=num_classes)

    start = time.perf_counter()
    state = make_run_state(model_cfg, cfg, stage_hook)
    step_fn = _STEP_FUNCTIONS[cfg.method]
    class_counts = _count_training_samples(tasks, model_cfg.num_classes)
    samples_generated = sum(t.num_samples for t in tasks)

    n_tasks = len(tasks)
    matrix = np.full((n_tasks, n_tasks), np.nan)
    confusions: list[np.ndarray] = []
    seen_sets: list[np.ndarray] = []
    task_test = []
    for task in tasks:
        mask = np.isin(test_set.labels, task.class_ids)
        task_test.append(Batch(test_set.features[mask], test_set.labels[mask]))

    for task in tasks:
        state.task_id = task.task_id
        if cfg.prior_scope == "task":
            state.prior.reset_counts()
        for batch in task:
            step_fn(state, batch)

        seen = state.prior.seen_classes()
        seen_sets.append(seen.copy())
        for j in range(task.task_id + 1):
            matrix[task.task_id, j] = evaluate(
                state.model, task_test[j], seen, model_cfg.num_classes
            )[0]
        seen_rows = np.isin(test_set.labels, seen)
        _, conf = evaluate(
            state.model,
            Batch(test_set.features[seen_rows], test_set.labels[seen_rows]),
            seen,
            model_cfg.num_classes,
        )
        confusions.append(conf)

    final_conf = confusions[-1].astype(np.float64)
    row_sums = final_conf.sum(axis=1)
    per_class = np.full(model_cfg.num_classes, np.nan)
    present = row_sums > 0
    per_class[present] = np.diag(final_conf)[present] / row_sums[present]

    return RunResult(
        accuracy_matrix=matrix,
        confusions=confusions,
        seen_sets=seen_sets,
        loss_log=state.loss_log,
        class_counts=class_counts,
        average_accuracy=average_accuracy(matrix),
        forgetting=forgetting(matrix) if n_tasks > 1 else None,
        group_accuracies=headtail_breakdown(confusions[-1], class_counts),
        per_class_accuracy=per_class,
        buffer_occupancy=state.buffer.occupancy,
        buffer_seen_count=state.buffer.seen_count,
        buffer_class_histogram=state.buffer.class_histogram(model_cfg.num_classes),
        buffer_contents=state.buffer.contents(),
        samples_consumed=state.samples_consumed,
        samples_generated=samples_generated,
        wall_clock_seconds=time.perf_counter() - start,
    )
