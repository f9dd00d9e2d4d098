"""Train TransE on a graph whose true embeddings are known, then rank the held-out facts.

Run: python3 demos/01_planted_graph.py
"""
from kgdlr.evaluation import evaluate
from kgdlr.pipeline import MetricsLog, RunConfig, train_model
from kgdlr.synthetic import planted_transe_graph

data, true_ent, true_rel = planted_transe_graph(n_entities=200, n_relations=10, dim=20, seed=0)
print(f"planted graph: {data.stats()}")

cfg = RunConfig(model="transe", dim=50, margin=0.25, batch_size=100, dis="L2", lr=0.01,
                eval_every=5, patience=5, max_decreases=5, max_epochs=500, workers=1)
log = MetricsLog()
out = train_model(cfg, data, log)

print("\nvalidation checkpoints (epoch, MeanRank, scheduler action):")
for rec in log.records:
    if rec.get("event") == "eval":
        print(f"  {rec['epoch']:4d}  {rec['val_mean_rank']:7.2f}  {rec['action']}")

m = evaluate(out["best_params"], cfg.dis, data.test, out["filter"], workers=1)
print(f"\nstopped after {out['epochs']} epochs")
print(f"test: MeanRank {m.mean_rank:.2f}, hits@10 {m.hits_at_10:.3f} "
      f"(head {m.head_hits_at_10:.3f} / tail {m.tail_hits_at_10:.3f})")
