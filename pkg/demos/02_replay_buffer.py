"""Reservoir buffer behavior: fill, steady state, retrieval, batch composition."""

import numpy as np

from ltocl.buffer import AugmentConfig, Batch, ReplayBuffer, compose_combined_batch

rng = np.random.default_rng(0)


def labeled_batch(start: int, n: int, label: int) -> Batch:
    feats = np.arange(start, start + n, dtype=np.float64).reshape(n, 1)
    return Batch(feats, np.full(n, label, dtype=np.int64))


print("== fill phase keeps everything, then slots are contested ==")
buf = ReplayBuffer(capacity=20, dim=1, rng=np.random.default_rng(1))
for step in range(5):
    buf.reservoir_update(labeled_batch(step * 10, 10, label=step))
    hist = buf.class_histogram(num_classes=5)
    print(f"after {10 * (step + 1):3d} offered: occupancy {len(buf.contents()):2d}, "
          f"per-class slots {hist.tolist()}")

print("\n== each offered item survives with probability capacity/seen ==")
trials = 1000
hits = np.zeros(60)
stream = Batch(np.arange(60, dtype=np.float64).reshape(60, 1),
               np.zeros(60, dtype=np.int64))
for t in range(trials):
    b = ReplayBuffer(capacity=20, dim=1, rng=np.random.default_rng((7, t)))
    b.reservoir_update(stream)
    hits[b.contents().features[:, 0].astype(int)] += 1
freq = hits / trials
print(f"60 items into 20 slots, {trials} trials: "
      f"inclusion min {freq.min():.3f}, mean {freq.mean():.3f}, "
      f"max {freq.max():.3f} (ideal 1/3)")

print("\n== retrieval is a uniform read, never a write ==")
got = buf.random_retrieve(5)
before = buf.contents().features.copy()
got.features[:] = -999.0  # scribbling on the view must not reach the store
unchanged = bool((buf.contents().features == before).all())
print(f"retrieved {len(got)} items; store unchanged after caller scribble: {unchanged}")

print("\n== the combined batch pairs stream samples with replayed exemplars ==")
stream_batch = labeled_batch(900, 4, label=9)
exemplars = buf.pair_exemplars(stream_batch, m=2)
combined = compose_combined_batch(
    stream_batch, exemplars, AugmentConfig(noise_sigma=0.05, mask_prob=0.1, seed=3)
)
print(f"stream 4 + replay {len(exemplars)} -> combined {len(combined)} "
       "(each half once raw, once augmented)")
print(f"from_buffer flags: {combined.from_buffer.astype(int).tolist()}")
print(f"is_augmented flags: {combined.is_augmented.astype(int).tolist()}")
mutual = all(combined.view_pair[combined.view_pair[i]] == i
             for i in range(len(combined)))
print(f"view pairing is mutual: {mutual}")
