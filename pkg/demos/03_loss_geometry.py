"""What the two training losses reward.

The contrastive loss scores embedding geometry: same-class samples should sit
close on the unit sphere, different classes far apart. The equalized
classification loss scores logits, with a frequency prior baked into the
softmax so rare classes are not drowned out by common ones.
"""

import numpy as np

from ltocl.losses import (
    ClassPrior,
    cross_entropy_loss,
    equalization_loss,
    supcon_loss,
)

print("== contrastive loss falls as same-class points align ==")
# two classes on the unit circle; rotate one member of class 0 toward the other
anchor = np.array([1.0, 0.0])
other = np.array([-1.0, 0.0])
labels = np.array([0, 0, 1])
for deg in (90, 45, 10, 1):
    theta = np.deg2rad(deg)
    partner = np.array([np.cos(theta), np.sin(theta)])
    z = np.stack([anchor, partner, other])
    value = supcon_loss(z, labels, tau=0.2).value
    print(f"class-0 pair {deg:2d} degrees apart: loss {value:.4f}")

print("\n== the prior rebalances the classification loss ==")
# class 0 seen 9 times for every class-1 sample; logits mildly favor class 0
prior = ClassPrior(2)
prior.update(np.array([0] * 9 + [1]))
logits = np.array([[1.0, 0.4], [1.0, 0.4]])
labels = np.array([0, 1])
eq = equalization_loss(logits, labels, prior)
ce = cross_entropy_loss(logits, labels, prior.seen_classes())
print(f"counts 9:1, prior {np.round(prior.prior_vector(), 2).tolist()}")
print(f"plain cross-entropy {ce.value:.4f}, equalized {eq.value:.4f}")
print("per-sample gradient rows (d loss / d logits):")
for name, res in (("ce", ce), ("eq", eq)):
    print(f"  {name}: {np.round(res.grad, 4).tolist()}")
print("the equalized gradient leans harder on the rare class-1 sample and")
print("eases off the common class-0 one; the shift is exactly the log prior.")

print("\n== with equal counts the two losses coincide ==")
prior = ClassPrior(2)
prior.update(np.array([0, 1]))
eq = equalization_loss(logits, labels, prior)
ce = cross_entropy_loss(logits, labels, prior.seen_classes())
print(f"uniform prior: |eq - ce| = {abs(eq.value - ce.value):.2e}")

print("\n== never-seen classes are excluded, not just downweighted ==")
prior = ClassPrior(3)
prior.update(np.array([0, 1]))  # class 2 never observed
wild = np.array([[0.2, 0.1, 50.0]])  # a huge logit in the unseen column
res = equalization_loss(wild, np.array([0]), prior)
print(f"loss stays finite at {res.value:.4f}; unseen-column gradient "
      f"{res.grad[0, 2]:.1f} (no signal flows there)")
