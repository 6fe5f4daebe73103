"""Curriculum stratification and step scheduling.

Entities are split into K difficulty strata (highest node degree first),
accumulated into nested sets G_1 .. G_K, and mapped onto a training
schedule of a warm-up window followed by stage windows that cycle 1..K
until the step budget is exhausted.  Alternative orderings used as
baselines (frequency, rank-sum concept, reverse, ratio ramp) share the
same split rules.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path
from typing import Mapping, Sequence

STRATEGIES = (
    "node-degree",
    "frequency",
    "concept",
    "masking-ratio",
    "reverse",
    "none",
)

WARMUP_MODES = ("random", "g1")

DEFAULT_K = 3
DEFAULT_WARMUP_STEPS = 10_000
DEFAULT_STAGE_STEPS = 10_000
DEFAULT_TOTAL_STEPS = 100_000
RATIO_RAMP = (0.10, 0.20)


@dataclass(frozen=True)
class ScheduleWindow:
    start: int          # inclusive step
    end: int            # exclusive step
    phase: str          # "warmup" or "stage"
    stage: int | None   # 1-based stage index when phase == "stage"


def _ranked(values: Mapping[str, int | float]) -> list[str]:
    """Entities by value descending, ties by ascending entity string."""
    return sorted(values, key=lambda e: (-values[e], e))


def _chunk(ordered: Sequence[str], k: int) -> list[list[str]]:
    """K contiguous groups of size ceil(n/k); trailing groups may shrink
    to empty when n is not a multiple of the group size."""
    n = len(ordered)
    if k < 1:
        raise ValueError("K must be >= 1")
    if k > n:
        raise ValueError("more stages than entities")
    size = ceil(n / k)
    return [list(ordered[i * size: (i + 1) * size]) for i in range(k)]


def stratify_by_degree(degrees: Mapping[str, int], k: int) -> list[list[str]]:
    """N_1 holds the highest-degree entities, N_K the lowest."""
    return _chunk(_ranked(degrees), k)


def stratify_by_frequency(frequencies: Mapping[str, int], k: int) -> list[list[str]]:
    return _chunk(_ranked(frequencies), k)


def stratify_by_concept(
    degrees: Mapping[str, int],
    frequencies: Mapping[str, int],
    k: int,
) -> list[list[str]]:
    """Rank-sum of ordinal frequency rank and degree rank, best rank-sum
    first.  Entities missing from the frequency map count as 0."""
    freq = {e: frequencies.get(e, 0) for e in degrees}
    degree_rank = {e: i for i, e in enumerate(_ranked(degrees), 1)}
    freq_rank = {e: i for i, e in enumerate(_ranked(freq), 1)}
    ordered = sorted(degrees, key=lambda e: (degree_rank[e] + freq_rank[e], e))
    return _chunk(ordered, k)


def cumulative_sets(strata: Sequence[Sequence[str]]) -> list[set[str]]:
    """G_i = G_{i-1} union N_i with G_1 = N_1."""
    out: list[set[str]] = []
    acc: set[str] = set()
    for stratum in strata:
        acc = acc | set(stratum)
        out.append(set(acc))
    return out


def build_windows(
    k: int,
    warmup_steps: int,
    stage_steps: int,
    total_steps: int,
) -> list[ScheduleWindow]:
    """Warm-up window then stage windows cycling 1..K until total_steps."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if warmup_steps < 0:
        raise ValueError("warmup_steps must be >= 0")
    if stage_steps < 1:
        raise ValueError("stage_steps must be >= 1")
    if total_steps < warmup_steps:
        raise ValueError("total_steps must be >= warmup_steps")
    windows: list[ScheduleWindow] = []
    if warmup_steps > 0:
        windows.append(ScheduleWindow(0, min(warmup_steps, total_steps),
                                      "warmup", None))
    step = warmup_steps
    stage = 1
    while step < total_steps:
        end = min(step + stage_steps, total_steps)
        windows.append(ScheduleWindow(step, end, "stage", stage))
        step = end
        stage = stage % k + 1
    return windows


def phase_at(windows: Sequence[ScheduleWindow], step: int) -> ScheduleWindow:
    starts = [w.start for w in windows]
    i = bisect_right(starts, step) - 1
    if i < 0 or step >= windows[i].end:
        raise ValueError(f"step {step} outside the schedule")
    return windows[i]


def masking_ratio_at(
    step: int,
    total_steps: int,
    ramp: tuple[float, float] = RATIO_RAMP,
) -> float:
    """Linear ramp from ramp[0] at step 0 toward ramp[1] at total_steps."""
    if not 0 <= step < total_steps:
        raise ValueError("step outside [0, total_steps)")
    start, end = ramp
    return start + (end - start) * step / total_steps


@dataclass
class CurriculumPlan:
    strategy: str
    k: int
    strata: list[list[str]]
    warmup_steps: int = DEFAULT_WARMUP_STEPS
    stage_steps: int = DEFAULT_STAGE_STEPS
    total_steps: int = DEFAULT_TOTAL_STEPS
    warmup_mode: str = "random"
    ratio_ramp: tuple[float, float] | None = None
    windows: list[ScheduleWindow] = field(default_factory=list)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown curriculum strategy: {self.strategy}")
        if self.warmup_mode not in WARMUP_MODES:
            raise ValueError(f"unknown warmup mode: {self.warmup_mode}")
        if len(self.strata) != self.k:
            raise ValueError("strata count must equal K")
        if not self.windows:
            self.windows = build_windows(
                self.k, self.warmup_steps, self.stage_steps, self.total_steps
            )

    @property
    def cumulative(self) -> list[set[str]]:
        return cumulative_sets(self.strata)

    def entities(self) -> set[str]:
        return set().union(*map(set, self.strata)) if self.strata else set()

    def universe_at(self, step: int) -> tuple[str, set[str] | None]:
        """(phase label, maskable entity set) for a step; the set is None
        during random warm-up."""
        window = phase_at(self.windows, step)
        if window.phase == "warmup":
            if self.warmup_mode == "g1":
                return "warmup", self.cumulative[0]
            return "warmup", None
        return f"stage{window.stage}", self.cumulative[window.stage - 1]

    # -- serialization ------------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = {
            "strategy": self.strategy,
            "k": self.k,
            "warmup_steps": self.warmup_steps,
            "stage_steps": self.stage_steps,
            "total_steps": self.total_steps,
            "warmup_mode": self.warmup_mode,
            "ratio_ramp": list(self.ratio_ramp) if self.ratio_ramp else None,
            "strata": self.strata,
            "windows": [
                {"start": w.start, "end": w.end, "phase": w.phase,
                 "stage": w.stage}
                for w in self.windows
            ],
        }
        with open(out / "plan.json", "w", encoding="utf-8", newline="\n") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, in_dir: str | Path) -> "CurriculumPlan":
        with open(Path(in_dir) / "plan.json", encoding="utf-8") as f:
            doc = json.load(f)
        return cls(
            strategy=doc["strategy"],
            k=doc["k"],
            strata=[list(s) for s in doc["strata"]],
            warmup_steps=doc["warmup_steps"],
            stage_steps=doc["stage_steps"],
            total_steps=doc["total_steps"],
            warmup_mode=doc["warmup_mode"],
            ratio_ramp=tuple(doc["ratio_ramp"]) if doc["ratio_ramp"] else None,
            windows=[
                ScheduleWindow(w["start"], w["end"], w["phase"], w["stage"])
                for w in doc["windows"]
            ],
        )


def make_plan(
    strategy: str,
    degrees: Mapping[str, int],
    frequencies: Mapping[str, int] | None = None,
    k: int = DEFAULT_K,
    warmup_steps: int = DEFAULT_WARMUP_STEPS,
    stage_steps: int = DEFAULT_STAGE_STEPS,
    total_steps: int = DEFAULT_TOTAL_STEPS,
    warmup_mode: str = "random",
) -> CurriculumPlan:
    """Dispatch to the strategy-specific stratification.

    masking-ratio and none collapse to one stratum: the former anneals
    difficulty through the mask ratio instead of the entity set, the
    latter masks the full universe from the first post-warm-up step.
    """
    ratio_ramp = None
    if strategy == "node-degree":
        strata = stratify_by_degree(degrees, k)
    elif strategy == "frequency":
        if frequencies is None:
            raise ValueError("frequency strategy needs corpus frequencies")
        strata = stratify_by_frequency(
            {e: frequencies.get(e, 0) for e in degrees}, k)
    elif strategy == "concept":
        if frequencies is None:
            raise ValueError("concept strategy needs corpus frequencies")
        strata = stratify_by_concept(degrees, frequencies, k)
    elif strategy == "reverse":
        strata = list(reversed(stratify_by_degree(degrees, k)))
    elif strategy == "masking-ratio":
        strata = [sorted(degrees)]
        k = 1
        ratio_ramp = RATIO_RAMP
    elif strategy == "none":
        strata = [sorted(degrees)]
        k = 1
    else:
        raise ValueError(f"unknown curriculum strategy: {strategy}")
    return CurriculumPlan(
        strategy=strategy,
        k=k,
        strata=strata,
        warmup_steps=warmup_steps,
        stage_steps=stage_steps,
        total_steps=total_steps,
        warmup_mode=warmup_mode,
        ratio_ramp=ratio_ramp,
    )
