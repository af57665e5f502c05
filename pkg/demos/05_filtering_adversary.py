"""Filtering & fusion plus the adversarial game, in isolation.

K filter stacks see the full hidden state; their average is the
group-free representation.  The discriminator maps that representation
and the soft assignments into one space and scores their distance; a few
discriminator-only updates visibly shrink that distance, which is exactly
the signal the forecaster later learns to deny it.
"""

import numpy as np

from faircast import (
    Adam,
    adversarial_loss,
    filter_apply,
    fuse,
    init_discriminator,
    init_filter_bank,
    orthogonality_loss,
)
from faircast.autodiff import Tensor, zero_grads

rng = np.random.default_rng(8)
hidden_dim, k = 6, 3
hidden = Tensor(rng.normal(size=(4, 5, hidden_dim)))
assignments = Tensor(rng.dirichlet(np.ones(k), size=(4, 5)))

bank = init_filter_bank(hidden_dim, k, rng)
filtered = filter_apply(hidden, bank, training=True)
fused = fuse(filtered)
print(f"{k} filters -> {len(filtered)} outputs, fused to {fused.shape}")

ortho = orthogonality_loss(hidden, fused)
print(f"orthogonality penalty (mean |cos| per variable row): {ortho.item():.4f}  (in [0, 1])")

disc = init_discriminator(hidden_dim, k, rng)
params = {f"disc.{i}": p for i, p in enumerate(disc.parameters())}
opt = Adam(params, lr=5e-3)

print("\ndiscriminator-only updates on a frozen representation:")
for step in range(41):
    zero_grads(params.values())
    loss = adversarial_loss(fused.detach(), assignments.detach(), disc)
    loss.backward()
    opt.step()
    if step % 10 == 0:
        print(f"  step {step}: matching distance {loss.item():.5f}")
print("the discriminator gets better at matching group structure to the fused state;")
print("during full training the forecaster is rewarded for pushing this number back up")
