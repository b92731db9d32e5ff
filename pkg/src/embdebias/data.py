"""Embedding datasets: schema, CSV I/O, standardization, synthesis, poisoning.

A dataset is stored column-wise (numpy arrays aligned by row). Operations
never mutate their input; they return a new dataset.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import make_rng

META_COLUMNS = ("record_id", "patient_id", "sex", "age", "cancer_1y", "cancer_2y", "split")
TASKS = ("cancer_1y", "cancer_2y")
BINARY_COLUMNS = ("sex", "cancer_1y", "cancer_2y")
SPLITS = ("train", "test")
STD_FLOOR = 1e-8
FOUNDATION_DIMENSION = 1408


class ParseError(ValueError):
    pass


class IntegrityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    record_id: np.ndarray  # str
    patient_id: np.ndarray  # str
    sex: np.ndarray  # int, 1 = male
    age: np.ndarray  # float, years
    cancer_1y: np.ndarray
    cancer_2y: np.ndarray
    split: np.ndarray  # "train" / "test"
    features: np.ndarray  # (n, D)
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        n = len(self.record_id)
        for name in META_COLUMNS:
            if len(getattr(self, name)) != n:
                raise IntegrityError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise IntegrityError(f"features shape {self.features.shape} does not match {n} records")
        bad = set(np.unique(self.split)) - set(SPLITS)
        if bad:
            raise IntegrityError(f"unknown split values {sorted(bad)}")
        check_patient_disjoint(self.patient_id, self.split)

    @property
    def n(self) -> int:
        return len(self.record_id)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def train_mask(self) -> np.ndarray:
        return self.split == "train"

    @property
    def test_mask(self) -> np.ndarray:
        return self.split == "test"

    def column(self, name: str) -> np.ndarray:
        if name not in META_COLUMNS:
            raise KeyError(f"unknown column {name!r}")
        return getattr(self, name)

    def replace(self, **changes) -> "EmbeddingDataset":
        return dataclasses.replace(self, **changes)

    def with_features(self, features: np.ndarray) -> "EmbeddingDataset":
        return self.replace(features=np.asarray(features, dtype=np.float64), standardization=None)

    def equals(self, other: "EmbeddingDataset") -> bool:
        if self.n != other.n or self.features.shape != other.features.shape:
            return False
        same = all(np.array_equal(self.column(c), other.column(c)) for c in META_COLUMNS)
        return same and np.array_equal(self.features, other.features)


def check_patient_disjoint(patient_id: np.ndarray, split: np.ndarray) -> None:
    shared = set(patient_id[split == "train"]) & set(patient_id[split == "test"])
    if shared:
        example = sorted(shared)[0]
        raise IntegrityError(
            f"{len(shared)} patient(s) appear in both train and test splits, e.g. {example!r}"
        )


def header(dimension: int) -> list[str]:
    return [*META_COLUMNS, *(f"f{i}" for i in range(dimension))]


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips to the same double
    return repr(float(x))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_csv_text(ds: EmbeddingDataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(header(ds.dimension)) + "\n")
    for i in range(ds.n):
        meta = [
            str(ds.record_id[i]), str(ds.patient_id[i]), str(int(ds.sex[i])), _fmt(ds.age[i]),
            str(int(ds.cancer_1y[i])), str(int(ds.cancer_2y[i])), str(ds.split[i]),
        ]
        buf.write(",".join(meta + [_fmt(v) for v in ds.features[i]]) + "\n")
    return buf.getvalue()


def write_csv(ds: EmbeddingDataset, path: str | os.PathLike) -> None:
    atomic_write_text(path, dataset_to_csv_text(ds))


def load_csv(path: str | os.PathLike) -> EmbeddingDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            cols = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: file is empty, expected a header row") from None
        missing = [c for c in META_COLUMNS if c not in cols]
        if missing:
            raise ParseError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        feat_cols = [c for c in cols if c not in META_COLUMNS]
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if feat_cols != expected:
            raise ParseError(f"{path}: line 1: feature columns must be f0..f{len(feat_cols) - 1} in order")
        idx = {c: cols.index(c) for c in META_COLUMNS}
        feat_idx = [cols.index(c) for c in feat_cols]

        rows: dict[str, list] = {c: [] for c in META_COLUMNS}
        feats: list[list[float]] = []
        seen: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise ParseError(f"{path}: line {lineno}: {len(row)} fields, header has {len(cols)}")
            rid = row[idx["record_id"]]
            if rid in seen:
                raise ParseError(f"{path}: line {lineno}: duplicate record_id {rid!r} (first on line {seen[rid]})")
            seen[rid] = lineno
            for c in BINARY_COLUMNS:
                if row[idx[c]] not in ("0", "1"):
                    raise ParseError(f"{path}: line {lineno}: column {c} must be 0 or 1, got {row[idx[c]]!r}")
            if row[idx["split"]] not in SPLITS:
                raise ParseError(f"{path}: line {lineno}: split must be train or test, got {row[idx['split']]!r}")
            try:
                age = float(row[idx["age"]])
                vec = [float(row[j]) for j in feat_idx]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-numeric value ({exc})") from None
            if not (math.isfinite(age) and all(math.isfinite(v) for v in vec)):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            for c in META_COLUMNS:
                rows[c].append(row[idx[c]])
            rows["age"][-1] = age
            feats.append(vec)

    d = len(feat_cols)
    return EmbeddingDataset(
        record_id=np.array(rows["record_id"], dtype=object),
        patient_id=np.array(rows["patient_id"], dtype=object),
        sex=np.array(rows["sex"], dtype=np.int64),
        age=np.array(rows["age"], dtype=np.float64),
        cancer_1y=np.array(rows["cancer_1y"], dtype=np.int64),
        cancer_2y=np.array(rows["cancer_2y"], dtype=np.int64),
        split=np.array(rows["split"], dtype=object),
        features=np.array(feats, dtype=np.float64).reshape(-1, d),
    )


def fit_standardization(features: np.ndarray, train_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    train = features[train_mask]
    if train.shape[0] == 0:
        raise ValueError("cannot standardize: train split is empty")
    mean = train.mean(axis=0)
    std = np.maximum(train.std(axis=0), STD_FLOOR)
    return mean, std


def standardize_fit_transform(ds: EmbeddingDataset) -> EmbeddingDataset:
    mean, std = fit_standardization(ds.features, ds.train_mask)
    return ds.replace(features=(ds.features - mean) / std, standardization=(mean, std))


def apply_standardization(ds: EmbeddingDataset, mean: np.ndarray, std: np.ndarray) -> EmbeddingDataset:
    return ds.replace(features=(ds.features - mean) / std, standardization=(np.asarray(mean), np.asarray(std)))


# --------------------------------------------------------------------------
# synthetic embeddings

@dataclass
class SynthConfig:
    """Knobs for the planted-signal generator.

    Features are ``noise + sex * s_sex + age_z * s_age + task * s_task`` on
    disjoint coordinate blocks, plus a low-rank background shared by all
    coordinates. Task labels depend on sex (``task_group_bias``) and age
    (``age_task_bias``) through the logit, which is what makes EOD nonzero.
    """

    n_train: int = 2000
    n_test: int = 500
    dimension: int = 64
    sex_signal_dims: tuple[int, ...] = (0, 1, 2, 3)
    age_signal_dims: tuple[int, ...] = (4, 5, 6, 7)
    task_signal_dims: tuple[int, ...] = (8, 9, 10, 11, 12, 13, 14, 15)
    sex_strength: float = 3.0
    age_strength: float = 2.0
    task_strength: float = 1.25
    task_group_bias: float = -0.5
    age_task_bias: float = 0.3
    task_base_rate: float = 0.2
    task_2y_extra_rate: float = 0.05
    noise_sigma: float = 1.0
    n_background: int = 16
    background_strength: float = 1.5
    overlap_dims: int = 0
    male_fraction: float = 0.592
    age_mean: float = 61.6
    age_sd: float = 5.0
    age_range: tuple[float, float] = (55.0, 74.0)
    seed: int = 0

    def validate(self) -> None:
        """Raise ValueError whose message starts with the offending field name."""
        for name in ("n_train", "n_test", "dimension"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("noise_sigma", "age_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("sex_strength", "age_strength", "task_strength", "background_strength",
                     "task_2y_extra_rate", "n_background"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        blocks = {"sex_signal_dims": self.sex_signal_dims, "age_signal_dims": self.age_signal_dims,
                  "task_signal_dims": self.task_signal_dims}
        for name, b in blocks.items():
            if any(i < 0 or i >= self.dimension for i in b):
                raise ValueError(f"dimension {self.dimension} is too small for {name} {list(b)}")
        seen: set[int] = set()
        for name, b in blocks.items():
            if seen & set(b) or len(set(b)) != len(b):
                raise ValueError(f"{name} overlaps another signal block")
            seen |= set(b)
        if len(self.task_signal_dims) < 2:
            raise ValueError("task_signal_dims needs at least two indices (one block per horizon)")
        if not 0 <= self.overlap_dims <= min(len(self.sex_signal_dims), len(self.task_signal_dims)):
            raise ValueError(f"overlap_dims must lie in [0, {min(len(self.sex_signal_dims), len(self.task_signal_dims))}]")
        lo, hi = self.age_range
        if not lo < hi:
            raise ValueError("age_range must be increasing")
        for name in ("task_base_rate", "male_fraction"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if self.task_2y_extra_rate >= 1:
            raise ValueError("task_2y_extra_rate must be < 1")


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def synth_generate(config: SynthConfig) -> EmbeddingDataset:
    config.validate()
    rng = make_rng(config.seed, "synth")
    n = config.n_train + config.n_test
    d = config.dimension

    sex = (rng.random(n) < config.male_fraction).astype(np.int64)
    lo, hi = config.age_range
    age = np.clip(config.age_mean + config.age_sd * rng.standard_normal(n), lo, hi)
    age = np.round(age, 1)
    age_z = (age - config.age_mean) / config.age_sd

    logit = (_logit(config.task_base_rate) + config.task_group_bias * (2 * sex - 1)
             + config.age_task_bias * age_z)
    cancer_1y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    cancer_2y = np.maximum(cancer_1y, (rng.random(n) < config.task_2y_extra_rate).astype(np.int64))

    x = config.noise_sigma * rng.standard_normal((n, d))
    if config.n_background > 0:
        factors = rng.standard_normal((n, config.n_background))
        loadings = rng.standard_normal((config.n_background, d)) / math.sqrt(config.n_background)
        x += config.background_strength * factors @ loadings

    task_dims = list(config.task_signal_dims)
    half = len(task_dims) // 2
    t1, t2 = task_dims[:half], task_dims[half:]
    x[:, list(config.sex_signal_dims)] += config.sex_strength * sex[:, None]
    x[:, list(config.age_signal_dims)] += config.age_strength * age_z[:, None]
    x[:, t1] += config.task_strength * cancer_1y[:, None]
    x[:, t2] += config.task_strength * cancer_2y[:, None]
    if config.overlap_dims:
        # leak sex into the first task coordinates so debiasing costs some utility
        shared = task_dims[: config.overlap_dims]
        x[:, shared] += config.sex_strength * sex[:, None]

    # one record per patient; first n_train patients form the train split
    split = np.array(["train"] * config.n_train + ["test"] * config.n_test, dtype=object)
    return EmbeddingDataset(
        record_id=np.array([f"r{i:06d}" for i in range(n)], dtype=object),
        patient_id=np.array([f"p{i:06d}" for i in range(n)], dtype=object),
        sex=sex, age=age, cancer_1y=cancer_1y, cancer_2y=cancer_2y,
        split=split, features=x,
    )


# --------------------------------------------------------------------------
# label poisoning and age groups

@dataclass
class PoisonSpec:
    target_group: int  # value of target_attribute to attack
    task: str = "cancer_1y"
    fraction: float = 0.0
    target_attribute: str = "sex"
    seed: int = 0


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def poison_indices(ds: EmbeddingDataset, spec: PoisonSpec) -> np.ndarray:
    """Row indices whose task label the attack flips."""
    if spec.target_attribute != "sex":
        raise ValueError(f"unknown poison target attribute {spec.target_attribute!r}")
    if spec.task not in TASKS:
        raise ValueError(f"unknown task {spec.task!r}")
    if not 0.0 <= spec.fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {spec.fraction}")
    group = np.flatnonzero(ds.train_mask & (ds.column(spec.target_attribute) == spec.target_group))
    k = round_half_away(spec.fraction * len(group))
    rng = make_rng(spec.seed, "poison")
    order = rng.permutation(len(group))
    return np.sort(group[order[:k]])


def poison_labels(ds: EmbeddingDataset, spec: PoisonSpec) -> EmbeddingDataset:
    flip = poison_indices(ds, spec)
    labels = ds.column(spec.task).copy()
    labels[flip] = 1 - labels[flip]
    return ds.replace(**{spec.task: labels})


@dataclass
class AgeGroups:
    threshold: float
    old: np.ndarray  # bool per record; False = young

    @property
    def tags(self) -> np.ndarray:
        return np.where(self.old, "old", "young")


def binarize_age(ds: EmbeddingDataset) -> AgeGroups:
    if ds.n == 0:
        raise ValueError("cannot binarize age of an empty dataset")
    train_age = ds.age[ds.train_mask]
    threshold = float(np.median(train_age if len(train_age) else ds.age))
    return AgeGroups(threshold, ds.age > threshold)
