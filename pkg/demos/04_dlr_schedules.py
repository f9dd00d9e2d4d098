"""Replay validation curves through the plateau scheduler and its two-phase variant."""
from kgdlr.scheduler import DLRScheduler, SchedulerConfig

curve = [120, 95, 80, 82, 81, 79, 79, 80, 78, 78, 78, 78, 78, 78]

for cfg in (SchedulerConfig(patience=2, max_decreases=2, lr=0.001),
            SchedulerConfig(patience=2, max_decreases=2, lr=0.001, mode="dlr2", lr_tuning=0.0005)):
    sched = DLRScheduler(cfg)
    print(f"\n{cfg.mode.value}: lr starts at {sched.lr}")
    for i, metric in enumerate([140, 150, *curve] if cfg.mode.value == "dlr2" else curve, 1):
        action = sched.observe(metric)
        print(f"  eval {i:2d}  metric {metric:5}  {sched.state.phase.value:8}  lr {sched.lr:.6f}  {action!r}")
        if action.kind == "stop":
            break
