"""Linear probes, ranking/fairness metrics, and the before/after report.

Probes only ever see train-split rows while fitting; scoring happens on the
test split. The logistic probe recipe is fixed (z-scored inputs, zero init,
full-batch gradient descent, lr 0.1, at most 500 iterations) so AUC values
are reproducible across runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .data import TASKS, EmbeddingDataset, binarize_age, fit_standardization
from .tensor import sigmoid

REPORT_VERSION = 1
DEMOGRAPHICS = ("sex", "age")


class SingleClassError(ValueError):
    pass


# --------------------------------------------------------------------------
# metrics

def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction correct; a score equal to the threshold predicts positive."""
    scores = np.asarray(scores, dtype=np.float64)
    pred = (scores >= threshold).astype(int)
    return float(np.mean(pred == np.asarray(labels)))


def mae(predictions, targets) -> float:
    p, t = np.asarray(predictions, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mae of empty input")
    return float(np.mean(np.abs(p - t)))


@dataclass
class EodResult:
    """EOD with its per-group TPRs; ``value`` is None when undefined."""

    value: float | None
    tpr: dict[str, float | None]
    positives: dict[str, int]

    @property
    def defined(self) -> bool:
        return self.value is not None


def eod(task_scores, task_labels, group_tags, threshold: float = 0.5, groups=None) -> EodResult:
    """|TPR_a - TPR_b| between exactly two groups at a fixed threshold.

    TPRs are compared as exact fractions, so e.g. 4/5 vs 3/5 gives 0.2 and
    not 0.20000000000000007. A group with no positives makes EOD undefined.
    Passing ``groups`` fixes the pair, so an absent group also yields None.
    """
    scores = np.asarray(task_scores, dtype=np.float64)
    labels = np.asarray(task_labels)
    tags = np.asarray(group_tags)
    if groups is None:
        groups = sorted(set(tags.tolist()), key=str)
    else:
        groups = list(groups)
        extra = set(tags.tolist()) - set(groups)
        if extra:
            raise ValueError(f"unexpected group tags {sorted(extra, key=str)}")
    if len(groups) != 2:
        raise ValueError(f"EOD needs exactly two groups, got {len(groups)}: {groups}")
    fracs, tpr, positives = {}, {}, {}
    for g in groups:
        pos = (tags == g) & (labels == 1)
        key = str(g)
        positives[key] = int(pos.sum())
        if positives[key] == 0:
            fracs[key] = None
            tpr[key] = None
        else:
            fracs[key] = Fraction(int((scores[pos] >= threshold).sum()), positives[key])
            tpr[key] = float(fracs[key])
    a, b = (fracs[str(g)] for g in groups)
    value = None if a is None or b is None else float(abs(a - b))
    return EodResult(value, tpr, positives)


# --------------------------------------------------------------------------
# probes

@dataclass
class LogisticProbe:
    weights: np.ndarray  # (D,) on z-scored inputs
    bias: float
    mean: np.ndarray
    std: np.ndarray
    iterations: int
    final_loss: float

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return sigmoid(((features - self.mean) / self.std) @ self.weights + self.bias)


@dataclass
class LinearProbe:
    weights: np.ndarray
    bias: float

    def predict(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.bias


def fit_logistic(x: np.ndarray, y: np.ndarray, lr: float = 0.1, max_iter: int = 500,
                 tol: float = 1e-6) -> LogisticProbe:
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic probe needs both classes in the train split")
    mean, std = fit_standardization(x, np.ones(len(x), dtype=bool))
    xs = (x - mean) / std
    n, d = xs.shape
    w, b = np.zeros(d), 0.0
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(xs @ w + b)
        r = (p - y) / n
        gw, gb = xs.T @ r, r.sum()
        if np.sqrt(gw @ gw + gb * gb) < tol:
            break
        w -= lr * gw
        b -= lr * gb
    p = np.clip(sigmoid(xs @ w + b), 1e-12, 1 - 1e-12)
    loss = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    return LogisticProbe(w, float(b), mean, std, it, loss)


def fit_linear(x: np.ndarray, y: np.ndarray, ridge: float = 1e-6) -> LinearProbe:
    xa = np.hstack([x, np.ones((len(x), 1))])
    gram = xa.T @ xa + ridge * np.eye(xa.shape[1])
    coef = np.linalg.solve(gram, xa.T @ np.asarray(y, dtype=np.float64))
    return LinearProbe(coef[:-1], float(coef[-1]))


def fit_logistic_probe(ds: EmbeddingDataset, label: str) -> LogisticProbe:
    m = ds.train_mask
    return fit_logistic(ds.features[m], ds.column(label)[m])


def fit_linear_probe(ds: EmbeddingDataset, label: str = "age") -> LinearProbe:
    m = ds.train_mask
    if not m.any():
        raise ValueError("train split is empty")
    return fit_linear(ds.features[m], ds.column(label)[m])


# --------------------------------------------------------------------------
# reports

@dataclass
class FairnessReport:
    label: str
    probes: dict[str, dict[str, float]]
    tpr: dict[str, dict[str, dict[str, float | None]]]
    eod: dict[str, dict[str, float | None]]
    age_threshold: float
    config: dict = field(default_factory=dict)
    format_version: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        return cls(**d)


GROUPS = {"sex": ("female", "male"), "age": ("old", "young")}


def group_tags(ds: EmbeddingDataset, attribute: str, age_threshold: float) -> np.ndarray:
    if attribute == "sex":
        return np.where(ds.sex == 1, "male", "female")
    if attribute == "age":
        return np.where(ds.age > age_threshold, "old", "young")
    raise ValueError(f"unknown group attribute {attribute!r}")


def probe_report(ds: EmbeddingDataset, label: str, *, attributes=DEMOGRAPHICS, tasks=TASKS,
                 age_threshold: float | None = None, config: dict | None = None) -> FairnessReport:
    """Fit every probe on ``ds``'s train split and score its test split."""
    if age_threshold is None:
        age_threshold = binarize_age(ds).threshold
    test = ds.test_mask
    xt = ds.features[test]
    probes: dict[str, dict[str, float]] = {}
    for attr in attributes:
        if attr == "age":
            lin = fit_linear_probe(ds, "age")
            train_mean = float(ds.age[ds.train_mask].mean())
            probes["age"] = {
                "mae": mae(lin.predict(xt), ds.age[test]),
                "mean_baseline_mae": mae(np.full(test.sum(), train_mean), ds.age[test]),
            }
        else:
            p = fit_logistic_probe(ds, attr).predict_proba(xt)
            probes[attr] = {"auc": auc(p, ds.column(attr)[test]), "accuracy": accuracy(p, ds.column(attr)[test])}
    tpr: dict = {}
    eods: dict = {}
    for task in tasks:
        p = fit_logistic_probe(ds, task).predict_proba(xt)
        y = ds.column(task)[test]
        probes[task] = {"auc": auc(p, y), "accuracy": accuracy(p, y)}
        tpr[task], eods[task] = {}, {}
        for attr in DEMOGRAPHICS:
            res = eod(p, y, group_tags(ds, attr, age_threshold)[test], groups=GROUPS[attr])
            tpr[task][attr] = res.tpr
            eods[task][attr] = res.value
    return FairnessReport(label, probes, tpr, eods, float(age_threshold), dict(config or {}))


def fairness_report(original: EmbeddingDataset, debiased: EmbeddingDataset,
                    config: dict | None = None) -> tuple[FairnessReport, FairnessReport]:
    """Before/after reports on aligned datasets (same records and labels)."""
    if original.n != debiased.n or not np.array_equal(original.record_id, debiased.record_id):
        raise ValueError("original and debiased datasets do not contain the same records")
    for c in ("sex", "age", "split", *TASKS):
        if not np.array_equal(original.column(c), debiased.column(c)):
            raise ValueError(f"original and debiased datasets disagree on column {c}")
    threshold = binarize_age(original).threshold
    before = probe_report(original, "original", age_threshold=threshold, config=config)
    after = probe_report(debiased, "debiased", age_threshold=threshold, config=config)
    return before, after


def reports_to_json(before: FairnessReport, after: FairnessReport) -> str:
    doc = {"format_version": REPORT_VERSION, "before": before.to_dict(), "after": after.to_dict()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> tuple[FairnessReport, FairnessReport]:
    doc = json.loads(text)
    if doc.get("format_version") != REPORT_VERSION:
        raise ValueError(f"unsupported report format_version {doc.get('format_version')}")
    return FairnessReport.from_dict(doc["before"]), FairnessReport.from_dict(doc["after"])


# --------------------------------------------------------------------------
# latent-dimension sweep

SWEEP_COLUMNS = ("latent_dim", "sex_auc", "age_mae", "task1_auc", "task2_auc")


@dataclass
class SweepResult:
    rows: list[dict[str, float]]
    config: dict = field(default_factory=dict)
    format_version: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        for r in self.rows:
            lines.append(",".join([str(int(r["latent_dim"]))] + [repr(float(r[c])) for c in SWEEP_COLUMNS[1:]]))
        return "\n".join(lines) + "\n"


def sweep_row(dim: int, report: FairnessReport) -> dict[str, float]:
    return {
        "latent_dim": dim,
        "sex_auc": report.probes["sex"]["auc"],
        "age_mae": report.probes["age"]["mae"],
        "task1_auc": report.probes["cancer_1y"]["auc"],
        "task2_auc": report.probes["cancer_2y"]["auc"],
    }


def latent_sweep(dataset: EmbeddingDataset, dims, config=None) -> SweepResult:
    """Train one debiaser per latent width and probe its reconstructions."""
    from .trainer import TrainConfig, train, transform_dataset

    dims = sorted(int(d) for d in dims)
    if not dims:
        raise ValueError("dims must be non-empty")
    for d in dims:
        if d < 1 or d > dataset.dimension:
            raise ValueError(f"latent dim {d} outside [1, {dataset.dimension}]")
    config = config or TrainConfig()
    threshold = binarize_age(dataset).threshold
    rows = []
    for d in dims:
        cfg = dataclasses.replace(config, latent_dim=d)
        ckpt = train(dataset, cfg)
        rep = probe_report(transform_dataset(ckpt, dataset), f"debiased_L{d}", age_threshold=threshold)
        rows.append(sweep_row(d, rep))
    return SweepResult(rows, config.to_dict())
