"""Naive vs. blocked/parallel link-prediction ranking on a WordNet-sized vocabulary.

Both engines accumulate distances in the same coordinate order, so the ranks
they return are identical; only the wallclock differs.

Run: python3 demos/02_parallel_evaluation.py [workers]
"""
import sys

import numpy as np

from kgdlr.dataset import build_filter_index
from kgdlr.evaluation import evaluate, evaluate_naive
from kgdlr.models import init_random
from kgdlr.synthetic import wn18_shaped_split

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 4
n_ent, n_rel = 40943, 18
train = wn18_shaped_split(20000, seed=1)
valid = wn18_shaped_split(300, seed=2)
filt = build_filter_index([train, valid])

for kind in ("TransE", "TransR"):
    params = init_random(kind, n_ent, n_rel, 50, seed=0)
    naive = evaluate_naive(params, "L1", valid.subset(np.arange(20)), filt)
    par = evaluate(params, "L1", valid, filt, "parallel", workers)
    same = np.array_equal(par.ranks.reshape(2, -1)[:, :20].ravel(), naive.ranks)
    print(f"{kind}: naive {naive.ms_per_triple:8.2f} ms/triple, "
          f"parallel({workers}) {par.ms_per_triple:7.2f} ms/triple, "
          f"ratio {par.ms_per_triple / naive.ms_per_triple:.3f}, ranks identical on overlap: {same}")
