"""Targeted label-flipping benchmark: EOD of task probes vs. flip fraction.

For every (embedding kind, task, target group, fraction) cell the train
labels of one sex group are flipped, a fresh task probe is fitted, and EOD
is measured on the clean test split. The flip set depends only on labels and
the seed, so original and debiased embeddings are attacked identically.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .data import TASKS, EmbeddingDataset, PoisonSpec, poison_labels
from .evaluation import GROUPS, eod, fit_logistic_probe, group_tags

DEFAULT_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
SEX_GROUPS = {"female": 0, "male": 1}
CURVE_COLUMNS = ("embedding", "task", "target_group", "fraction", "eod", "tpr_a", "tpr_b")


@dataclass
class PoisonSweepConfig:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    target_groups: tuple[str, ...] = ("male", "female")
    tasks: tuple[str, ...] = TASKS
    seed: int = 0

    def validate(self) -> None:
        if not self.fractions:
            raise ValueError("fractions must be non-empty")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ValueError("fractions must lie in [0, 1]")
        if list(self.fractions) != sorted(self.fractions):
            raise ValueError("fractions must be sorted ascending")
        for g in self.target_groups:
            if g not in SEX_GROUPS:
                raise ValueError(f"unknown target group {g!r}")
        for t in self.tasks:
            if t not in TASKS:
                raise ValueError(f"unknown task {t!r}")


@dataclass
class PoisonCurve:
    """One row per grid cell. ``tpr_a`` is the female TPR, ``tpr_b`` the male TPR."""

    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def get(self, embedding: str, task: str, target_group: str, fraction: float) -> dict:
        for r in self.rows:
            if (r["embedding"], r["task"], r["target_group"], r["fraction"]) == (
                    embedding, task, target_group, fraction):
                return r
        raise KeyError((embedding, task, target_group, fraction))

    def series(self, embedding: str, task: str, target_group: str) -> list[tuple[float, float | None]]:
        return [(r["fraction"], r["eod"]) for r in self.rows
                if (r["embedding"], r["task"], r["target_group"]) == (embedding, task, target_group)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CURVE_COLUMNS) + "\n")
        for r in self.rows:
            vals = [r["embedding"], r["task"], r["target_group"], repr(float(r["fraction"]))]
            vals += ["" if r[c] is None else repr(float(r[c])) for c in ("eod", "tpr_a", "tpr_b")]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()


def _check_aligned(a: EmbeddingDataset, b: EmbeddingDataset) -> None:
    if a.n != b.n or not np.array_equal(a.record_id, b.record_id):
        raise ValueError("original and debiased datasets are not aligned on record_id")
    for c in ("sex", "split", *TASKS):
        if not np.array_equal(a.column(c), b.column(c)):
            raise ValueError(f"original and debiased datasets disagree on column {c}")


def poison_cell(ds: EmbeddingDataset, task: str, target_group: str, fraction: float, seed: int) -> dict:
    spec = PoisonSpec(target_group=SEX_GROUPS[target_group], task=task, fraction=fraction, seed=seed)
    poisoned = poison_labels(ds, spec)
    probe = fit_logistic_probe(poisoned, task)
    test = ds.test_mask
    # clean labels: poisoning never touches the test split
    res = eod(probe.predict_proba(ds.features[test]), ds.column(task)[test],
              group_tags(ds, "sex", 0.0)[test], groups=GROUPS["sex"])
    return {"eod": res.value, "tpr_a": res.tpr["female"], "tpr_b": res.tpr["male"]}


def run_poison_sweep(original: EmbeddingDataset, debiased: EmbeddingDataset,
                     config: PoisonSweepConfig | None = None) -> PoisonCurve:
    config = config or PoisonSweepConfig()
    config.validate()
    _check_aligned(original, debiased)
    rows = []
    for kind, ds in (("original", original), ("debiased", debiased)):
        for task in config.tasks:
            for group in config.target_groups:
                for frac in config.fractions:
                    cell = poison_cell(ds, task, group, float(frac), config.seed)
                    rows.append({"embedding": kind, "task": task, "target_group": group,
                                 "fraction": float(frac), **cell})
    cfg = dataclasses.asdict(config)
    cfg = {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}
    return PoisonCurve(rows, cfg)
