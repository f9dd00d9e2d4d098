"""Plateau-driven learning-rate control (DLR) and its two-phase variant (DLR2).

The scheduler is a pure state machine: it sees one validation MeanRank per
evaluation point and answers Continue, DecreaseLr or Stop. Replaying the same
metric sequence always reproduces the same actions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class SchedulerError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    DLR = "dlr"
    DLR2 = "dlr2"


class Phase(str, enum.Enum):
    DROPPING = "dropping"
    TUNING = "tuning"


@dataclass(frozen=True)
class Action:
    kind: str  # "continue" | "decrease" | "stop"
    lr: float | None = None

    def __repr__(self):
        return f"DecreaseLr({self.lr:g})" if self.kind == "decrease" else self.kind.capitalize()


CONTINUE = Action("continue")
STOP = Action("stop")


def decrease(lr: float) -> Action:
    return Action("decrease", lr)


@dataclass(frozen=True)
class SchedulerConfig:
    eval_every: int = 5          # E
    max_decreases: int = 20      # D
    patience: int = 5            # P
    factor: float = 0.5          # s
    lr: float = 0.001            # lambda, or lambda_1 under DLR2
    lr_tuning: float | None = None  # lambda_2 (DLR2 only)
    mode: Mode = Mode.DLR
    max_epochs: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(getattr(self.mode, "value", self.mode)))
        for name in ("eval_every", "max_decreases", "patience", "max_epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        if self.lr <= 0 or (self.lr_tuning is not None and self.lr_tuning <= 0):
            raise ValueError("learning rates must be positive")

    @property
    def tuning_lr(self) -> float:
        if self.mode is Mode.DLR2 and self.lr_tuning is not None:
            return self.lr_tuning
        return self.lr


@dataclass
class SchedulerState:
    mode: Mode
    phase: Phase
    current_lr: float
    best_metric: float = math.inf
    patience_count: int = 0
    decrease_count: int = 0
    prev_metric: float | None = None
    stopped: bool = False


def initial_state(cfg: SchedulerConfig) -> SchedulerState:
    phase = Phase.DROPPING if cfg.mode is Mode.DLR2 else Phase.TUNING
    return SchedulerState(cfg.mode, phase, cfg.lr)


def should_evaluate(epoch: int, eval_every: int) -> bool:
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    return epoch % eval_every == 0


def observe(state: SchedulerState, cfg: SchedulerConfig, metric: float) -> Action:
    """Feed one validation metric (lower is better); mutates ``state``."""
    if state.stopped:
        raise SchedulerError("observe() called after Stop")
    if state.phase is Phase.DROPPING:
        # fixed lr until the metric stops getting worse; that value becomes the baseline
        if state.prev_metric is not None and not metric > state.prev_metric:
            state.phase = Phase.TUNING
            state.best_metric = metric
            state.current_lr = cfg.tuning_lr
        state.prev_metric = metric
        return CONTINUE

    if metric < state.best_metric:
        state.best_metric = metric
        state.patience_count = 0
        return CONTINUE
    state.patience_count += 1
    if state.patience_count < cfg.patience:
        return CONTINUE
    if state.decrease_count >= cfg.max_decreases:
        state.stopped = True
        return STOP
    state.decrease_count += 1
    state.patience_count = 0
    # recomputed from the base value so repeated decreases never drift
    state.current_lr = cfg.tuning_lr * cfg.factor ** state.decrease_count
    return decrease(state.current_lr)


class DLRScheduler:
    """Convenience wrapper bundling a config with its running state."""

    def __init__(self, cfg: SchedulerConfig):
        self.cfg = cfg
        self.state = initial_state(cfg)

    @property
    def lr(self) -> float:
        return self.state.current_lr

    def should_evaluate(self, epoch: int) -> bool:
        return should_evaluate(epoch, self.cfg.eval_every)

    def observe(self, metric: float) -> Action:
        return observe(self.state, self.cfg, metric)


def replay(cfg: SchedulerConfig, metrics) -> list[Action]:
    sched = DLRScheduler(cfg)
    out = []
    for m in metrics:
        out.append(sched.observe(m))
        if out[-1] is STOP:
            break
    return out
