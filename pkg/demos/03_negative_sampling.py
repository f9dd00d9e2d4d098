"""How often each slot of a triple gets corrupted, with and without relation corruption."""
import numpy as np

from kgdlr.dataset import TripleSet, compute_bern_stats
from kgdlr.sampling import NegativeSampler, SamplerConfig, slot_probabilities

n_ent, n_rel = 14951, 1345  # a Freebase-sized vocabulary
print("NSER slot probabilities (head, relation, tail):",
      tuple(round(p, 5) for p in slot_probabilities("nser", n_ent, n_rel)))

pos = np.zeros((200_000, 3), dtype=np.int64)
for scheme in ("nse", "nser"):
    neg, _ = NegativeSampler(SamplerConfig(scheme, seed=0), n_ent, n_rel).corrupt_batch(pos)
    freq = np.bincount((neg != pos).argmax(axis=1), minlength=3) / len(pos)
    print(f"{scheme:>4}: empirical {np.round(freq, 4)}")

# one-to-many relation: each head has two tails, so heads are the safer slot to corrupt
train = TripleSet([(0, 0, 1), (0, 0, 2), (3, 0, 4), (3, 0, 5)])
bern = compute_bern_stats(train)
print(f"\nrelation 0: tph={bern.tph[0]}, hpt={bern.hpt[0]}, P(corrupt head)={bern.head_probability(0):.3f}")
sampler = NegativeSampler(SamplerConfig("nse", "bern", seed=1), 10, 1, bern=bern)
neg, _ = sampler.corrupt_batch(np.tile([0, 0, 1], (100_000, 1)))
print(f"empirical head share: {np.mean(neg[:, 0] != 0):.3f}")
