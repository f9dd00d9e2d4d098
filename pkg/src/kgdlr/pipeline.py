"""End-to-end runs: resolved configs, presets, the DLR training loop and run outputs."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, build_filter_index, compute_bern_stats, load_dataset
from .evaluation import default_workers, evaluate, validation_sample_metric
from .models import (Dissimilarity, ModelKind, ModelParams, init_pretrained, init_random,
                     save_checkpoint)
from .sampling import EntityChoice, NegativeSampler, SamplerConfig, Scheme
from .scheduler import STOP, DLRScheduler, Mode, Phase, SchedulerConfig
from .training import AdamState, TrainConfig, train_epoch

logger = logging.getLogger(__name__)

# hyperparameters chosen by cross-validation for each benchmark
PRESETS = {
    "fb15k": {
        "dim": 100, "margin": 1.0, "batch_size": 4800, "lr_factor": 0.5, "eval_every": 5,
        "patience": 5, "max_decreases": 20, "dis": "L1",
        "per_model": {
            "transe": {"schedule": "dlr", "lr": 0.001},
            "transh": {"schedule": "dlr", "lr": 0.001},
            "transr": {"schedule": "dlr2", "lr1": 0.001, "lr2": 0.0005},
            "transd": {"schedule": "dlr2", "lr1": 0.001, "lr2": 0.001},
        },
    },
    "wn18": {
        "dim": 50, "margin": 4.0, "batch_size": 1440, "lr_factor": 0.5, "eval_every": 5,
        "patience": 5, "max_decreases": 20, "dis": "L1",
        "per_model": {
            "transe": {"schedule": "dlr", "lr": 0.001},
            "transh": {"schedule": "dlr", "lr": 0.001},
            "transr": {"schedule": "dlr2", "lr1": 0.001, "lr2": 0.001},
            "transd": {"schedule": "dlr2", "lr1": 0.001, "lr2": 0.001},
        },
    },
}


@dataclass
class RunConfig:
    data_dir: str = ""
    output_dir: str = "runs"
    run_name: str = "run"
    model: str = "transe"
    dim: int = 50
    dim_relation: int | None = None
    margin: float = 1.0
    batch_size: int = 100
    dis: str = "L1"
    schedule: str = "dlr"           # dlr | dlr2
    lr: float = 0.001               # DLR initial rate
    lr1: float = 0.001              # DLR2 dropping-phase rate
    lr2: float = 0.001              # DLR2 tuning-phase rate
    lr_factor: float = 0.5
    eval_every: int = 5
    patience: int = 5
    max_decreases: int = 20
    max_epochs: int = 1000
    sampler: str = "nser"
    bern: bool = False
    max_resample: int = 100
    filter_scope: str = "all"       # all | train: triples treated as known while sampling
    val_sample: int = 1000
    pretrain: bool | None = None    # None: automatic for TransR/TransD
    pretrain_max_epochs: int | None = None
    seed: int = 0
    workers: int | None = None
    preset: str | None = None

    @classmethod
    def fields(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        unknown = set(values) - set(cls.fields())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @property
    def kind(self) -> ModelKind:
        return ModelKind.parse(self.model)

    @property
    def needs_pretrain(self) -> bool:
        if self.pretrain is not None:
            return self.pretrain
        return self.kind in (ModelKind.TRANSR, ModelKind.TRANSD)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.margin, self.dis, self.seed)

    def scheduler_config(self) -> SchedulerConfig:
        mode = Mode(self.schedule.lower())
        if mode is Mode.DLR2:
            return SchedulerConfig(self.eval_every, self.max_decreases, self.patience, self.lr_factor,
                                   self.lr1, self.lr2, mode, self.max_epochs)
        return SchedulerConfig(self.eval_every, self.max_decreases, self.patience, self.lr_factor,
                               self.lr, None, mode, self.max_epochs)

    def sampler_config(self, seed_offset: int = 1) -> SamplerConfig:
        return SamplerConfig(Scheme(self.sampler.lower()),
                             EntityChoice.BERN if self.bern else EntityChoice.UNIFORM,
                             self.max_resample, self.seed + seed_offset)


def preset_values(preset: str, model: str) -> dict:
    try:
        table = PRESETS[preset.lower()]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    values = {k: v for k, v in table.items() if k != "per_model"}
    values.update(table["per_model"][ModelKind.parse(model).value.lower()])
    return values


def resolve_config(model: str | None = None, preset: str | None = None, config_file=None,
                   overrides: dict | None = None) -> RunConfig:
    """Merge defaults < preset < config file < explicit overrides."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    values = RunConfig().to_dict()
    file_values = {}
    if config_file:
        with open(config_file, encoding="utf-8") as fh:
            file_values = json.load(fh)
    model = overrides.get("model") or file_values.get("model") or model or values["model"]
    preset = overrides.get("preset") or file_values.get("preset") or preset
    if preset:
        values.update(preset_values(preset, model))
        values["preset"] = preset
    values.update(file_values)
    values.update(overrides)
    values["model"] = model
    cfg = RunConfig.from_dict(values)
    ModelKind.parse(cfg.model)
    Dissimilarity.parse(cfg.dis)
    return cfg


# ------------------------------------------------------------------ fitting

@dataclass
class FitResult:
    params: ModelParams
    best_params: ModelParams
    best_metric: float
    epochs: int
    history: list = field(default_factory=list)


class MetricsLog:
    """Append-only JSON-lines log; also keeps records in memory."""

    def __init__(self, path=None):
        self.path = path
        self.records: list[dict] = []

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def fit(params: ModelParams, data: Dataset, filter_index, train_cfg: TrainConfig, sampler: NegativeSampler,
        sched_cfg: SchedulerConfig, val_sample: int = 1000, val_seed: int = 0, workers: int | None = None,
        log: MetricsLog | None = None, stage: str = "train") -> FitResult:
    """Train until the scheduler stops or ``sched_cfg.max_epochs`` is reached.

    The best parameters are the ones with the lowest validation MeanRank seen
    in the tuning phase.
    """
    log = log or MetricsLog()
    sched = DLRScheduler(sched_cfg)
    adam = AdamState.for_params(params, sched.lr)
    best_metric, best_params = np.inf, None
    epoch = 0
    for epoch in range(1, sched_cfg.max_epochs + 1):
        adam.lr = sched.lr
        t0 = time.perf_counter()
        loss = train_epoch(params, data.train, train_cfg, sampler, adam, epoch)
        log.write({"stage": stage, "epoch": epoch, "loss": loss, "lr": adam.lr,
                   "wallclock_s": time.perf_counter() - t0})
        if not sched.should_evaluate(epoch):
            continue
        metric = validation_sample_metric(params, train_cfg.dis, data.valid, filter_index,
                                          val_sample, val_seed, workers)
        action = sched.observe(metric)
        st = sched.state
        log.write({"stage": stage, "epoch": epoch, "event": "eval", "val_mean_rank": metric,
                   "action": repr(action), "lr": st.current_lr, "phase": st.phase.value,
                   "decreases": st.decrease_count})
        if st.phase is Phase.TUNING and metric < best_metric:
            best_metric, best_params = metric, params.copy()
        if action is STOP:
            break
    return FitResult(params, best_params if best_params is not None else params.copy(),
                     float(best_metric), epoch, log.records)


def _filter_for_sampling(cfg: RunConfig, data: Dataset):
    if cfg.filter_scope == "train":
        return build_filter_index([data.train], data.vocab)
    if cfg.filter_scope != "all":
        raise ValueError(f"filter_scope must be 'all' or 'train', got {cfg.filter_scope!r}")
    return build_filter_index([data.train, data.valid, data.test], data.vocab)


def train_model(cfg: RunConfig, data: Dataset, log: MetricsLog | None = None) -> dict:
    """Run the full schedule for ``cfg`` on in-memory data.

    Returns a dict with ``params``, ``best_params``, ``pretrained`` (or None),
    ``best_metric`` and ``epochs``.
    """
    log = log or MetricsLog()
    if cfg.batch_size > len(data.train):
        raise ValueError(f"batch size {cfg.batch_size} exceeds training split size {len(data.train)}")
    workers = cfg.workers if cfg.workers is not None else default_workers()
    eval_filter = build_filter_index([data.train, data.valid, data.test], data.vocab)
    sample_filter = eval_filter if cfg.filter_scope == "all" else _filter_for_sampling(cfg, data)
    bern = compute_bern_stats(data.train) if cfg.bern else None
    n_ent, n_rel = data.vocab.n_entities, data.vocab.n_relations
    kind = cfg.kind
    train_cfg = cfg.train_config()

    pretrained = None
    if cfg.needs_pretrain and kind is not ModelKind.TRANSE:
        d_r = cfg.dim_relation or cfg.dim
        if d_r != cfg.dim:
            raise ValueError("pretraining from TransE needs dim_relation == dim")
        base = init_random(ModelKind.TRANSE, n_ent, n_rel, cfg.dim, seed=cfg.seed)
        sched = SchedulerConfig(cfg.eval_every, cfg.max_decreases, cfg.patience, cfg.lr_factor,
                                cfg.lr1 if cfg.schedule == "dlr2" else cfg.lr, None, Mode.DLR,
                                cfg.pretrain_max_epochs or cfg.max_epochs)
        sampler = NegativeSampler(cfg.sampler_config(101), n_ent, n_rel, sample_filter, bern)
        res = fit(base, data, eval_filter, train_cfg, sampler, sched, cfg.val_sample, cfg.seed + 2,
                  workers, log, stage="pretrain")
        pretrained = res.best_params
        params = init_pretrained(kind, pretrained, seed=cfg.seed + 3)
    else:
        params = init_random(kind, n_ent, n_rel, cfg.dim, cfg.dim_relation, seed=cfg.seed)

    sampler = NegativeSampler(cfg.sampler_config(1), n_ent, n_rel, sample_filter, bern)
    res = fit(params, data, eval_filter, train_cfg, sampler, cfg.scheduler_config(), cfg.val_sample,
              cfg.seed + 2, workers, log)
    return {"params": res.params, "best_params": res.best_params, "pretrained": pretrained,
            "best_metric": res.best_metric, "epochs": res.epochs, "filter": eval_filter}


RUN_FILES = ("config.json", "metrics.jsonl", "final.ckpt", "best.ckpt")


def run_training(cfg: RunConfig, data: Dataset | None = None) -> str:
    """Train and write the run directory; returns its path."""
    run_dir = os.path.join(cfg.output_dir, cfg.run_name)
    os.makedirs(run_dir, exist_ok=True)
    marker = os.path.join(run_dir, "INCOMPLETE")
    with open(marker, "w") as fh:
        fh.write("run in progress or aborted\n")
    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    if os.path.exists(metrics_path):
        os.unlink(metrics_path)
    cfg.save(os.path.join(run_dir, "config.json"))
    if data is None:
        data = load_dataset(cfg.data_dir)
    log = MetricsLog(metrics_path)
    out = train_model(cfg, data, log)
    if out["pretrained"] is not None:
        save_checkpoint(os.path.join(run_dir, "pretrain_transe.ckpt"), out["pretrained"], cfg.dis)
    save_checkpoint(os.path.join(run_dir, "final.ckpt"), out["params"], cfg.dis)
    save_checkpoint(os.path.join(run_dir, "best.ckpt"), out["best_params"], cfg.dis)
    test = evaluate(out["best_params"], cfg.dis, data.test, out["filter"], "parallel",
                    cfg.workers if cfg.workers is not None else default_workers())
    rec = test.to_record()
    rec.update(event="test", checkpoint="best.ckpt", epochs=out["epochs"])
    log.write(rec)
    os.unlink(marker)
    return run_dir
