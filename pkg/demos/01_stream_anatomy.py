"""Walk through the long-tailed stream: class counts, task layout, one pass."""

import numpy as np

from ltocl.stream import (
    SinglePassError,
    StreamConfig,
    SyntheticSource,
    augment,
    AugmentConfig,
    build_stream,
    long_tail_counts,
)

print("== class counts under an exponential long-tail profile ==")
print(f"{'rho':>6} | counts for 10 classes, cap 100")
for rho in (1.0, 0.5, 0.1, 0.01):
    counts = long_tail_counts(rho=rho, num_classes=10, n_max=100)
    print(f"{rho:>6} | {counts}")
print("rho is the tail/head ratio; rho=1 is the balanced special case.\n")

cfg = StreamConfig(
    rho=0.1,
    num_classes=6,
    max_per_class=40,
    num_tasks=3,
    classes_per_task=(2, 2, 2),
    batch_size=16,
    seed=5,
)
source = SyntheticSource(num_classes=6, dim=8, cluster_spread=0.2, seed=5)
tasks = build_stream(source, cfg)

print("== task layout (classes arrive two at a time) ==")
for t, task in enumerate(tasks):
    sizes = [len(b) for b in task.batches]
    labels = sorted({int(l) for b in task.batches for l in b.labels})
    print(f"task {t}: classes {labels}, batch sizes {sizes}")

print("\n== the stream is single-pass ==")
consumed = sum(len(b) for b in tasks[0])
print(f"task 0 consumed once: {consumed} samples")
try:
    for _ in tasks[0]:  # a second pass over the same task must fail
        pass
except SinglePassError as exc:
    print(f"second pass refused: {exc}")

print("\n== augmented views stay near their source ==")
aug = AugmentConfig(noise_sigma=0.1, mask_prob=0.1, seed=5)
batch = tasks[1].batches[0]
views = augment(batch, aug)
dist = np.linalg.norm(views.features - batch.features, axis=1)
print(f"mean view distance {dist.mean():.3f} over {len(batch)} samples")
print(f"labels preserved: {bool((views.labels == batch.labels).all())}")
