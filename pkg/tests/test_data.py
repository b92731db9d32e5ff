import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from embdebias.data import (
    IntegrityError,
    ParseError,
    PoisonSpec,
    SynthConfig,
    apply_standardization,
    binarize_age,
    dataset_to_csv_text,
    fit_standardization,
    load_csv,
    poison_indices,
    poison_labels,
    round_half_away,
    standardize_fit_transform,
    synth_generate,
    write_csv,
)
from embdebias.data import EmbeddingDataset
from embdebias.evaluation import auc, fit_linear_probe, fit_logistic_probe, mae


def make_ds(n_train=3, n_test=2, d=4, seed=0, sex=None, age=None):
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    return EmbeddingDataset(
        record_id=np.array([f"r{i}" for i in range(n)], dtype=object),
        patient_id=np.array([f"p{i}" for i in range(n)], dtype=object),
        sex=np.array(sex if sex is not None else [i % 2 for i in range(n)]),
        age=np.array(age if age is not None else 55.0 + rng.integers(0, 20, n), dtype=float),
        cancer_1y=np.array([(i // 2) % 2 for i in range(n)]),
        cancer_2y=np.array([1 - (i % 3 == 0) for i in range(n)]),
        split=np.array(["train"] * n_train + ["test"] * n_test, dtype=object),
        features=rng.normal(size=(n, d)),
    )


SMALL = SynthConfig(n_train=300, n_test=100, seed=3)


# --------------------------------------------------------------------------
# CSV

def test_three_row_round_trip(tmp_path):
    ds = make_ds(2, 1, 4)
    write_csv(ds, tmp_path / "a.csv")
    back = load_csv(tmp_path / "a.csv")
    assert back.n == 3 and back.dimension == 4
    assert back.equals(ds)


def test_point_one_survives_exactly(tmp_path):
    ds = make_ds(1, 1, 2)
    ds.features[0, 0] = 0.1
    write_csv(ds, tmp_path / "a.csv")
    assert load_csv(tmp_path / "a.csv").features[0, 0] == 0.1


def test_header_only_file_is_empty_dataset(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(dataset_to_csv_text(make_ds()).splitlines()[0] + "\n")
    ds = load_csv(p)
    assert ds.n == 0 and ds.dimension == 4


def test_shared_patient_is_integrity_error(tmp_path):
    text = dataset_to_csv_text(make_ds(2, 1)).replace("p2,", "p0,")
    p = tmp_path / "x.csv"
    p.write_text(text)
    with pytest.raises(IntegrityError, match="p0"):
        load_csv(p)


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda lines: [lines[0].replace("sex,", "")] + lines[1:], "line 1: missing column"),
        (lambda lines: [lines[0].replace("f1", "f9")] + lines[1:], "line 1: feature columns"),
        (lambda lines: lines[:2] + [lines[2] + ",1.0"] + lines[3:], "line 3: "),
        (lambda lines: lines[:2] + [lines[1]] + lines[2:], "line 3: duplicate record_id"),
        (lambda lines: lines[:1] + [lines[1].replace(",train,", ",val,")] + lines[2:], "line 2: split"),
        (lambda lines: lines[:1] + [lines[1].rsplit(",", 1)[0] + ",abc"] + lines[2:], "line 2: non-numeric"),
        (lambda lines: lines[:1] + [lines[1].rsplit(",", 1)[0] + ",nan"] + lines[2:], "line 2: non-finite"),
    ],
)
def test_malformed_csv_reports_line(tmp_path, mutate, match):
    lines = dataset_to_csv_text(make_ds()).splitlines()
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(mutate(lines)) + "\n")
    with pytest.raises(ParseError, match=match):
        load_csv(p)


def test_non_binary_sex_rejected(tmp_path):
    lines = dataset_to_csv_text(make_ds()).splitlines()
    fields = lines[1].split(",")
    fields[2] = "2"
    lines[1] = ",".join(fields)
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 2: column sex"):
        load_csv(p)


def test_completely_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(ParseError, match="line 1"):
        load_csv(p)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6))
def test_csv_round_trip_is_identity(tmp_path_factory, values):
    ds = make_ds(2, 1, 2)
    ds.features[:] = np.array(values).reshape(3, 2)
    p = tmp_path_factory.mktemp("rt") / "a.csv"
    write_csv(ds, p)
    assert load_csv(p).equals(ds)


def test_large_round_trip_fast(tmp_path):
    import time

    ds = make_ds(900, 100, 64)
    t = time.perf_counter()
    write_csv(ds, tmp_path / "big.csv")
    back = load_csv(tmp_path / "big.csv")
    assert time.perf_counter() - t < 1.0
    assert back.equals(ds)


# --------------------------------------------------------------------------
# standardization

def test_constant_column_maps_to_zero():
    ds = make_ds(4, 2, 3)
    ds.features[:, 1] = 7.0
    out = standardize_fit_transform(ds)
    np.testing.assert_array_equal(out.features[:, 1], 0.0)


def test_standardized_train_moments():
    ds = make_ds(50, 10, 5)
    out = standardize_fit_transform(ds)
    tr = out.features[out.train_mask]
    assert np.max(np.abs(tr.mean(axis=0))) < 1e-10
    assert np.max(np.abs(tr.std(axis=0) - 1.0)) < 1e-10


def test_standardization_fixed_point():
    ds = standardize_fit_transform(make_ds(50, 10, 5))
    again = apply_standardization(ds, *fit_standardization(ds.features, ds.train_mask))
    np.testing.assert_allclose(again.features, ds.features, atol=1e-12, rtol=0)


def test_standardization_ignores_test_rows():
    ds = make_ds(20, 5, 3)
    moved = ds.features.copy()
    moved[ds.test_mask] += 1000.0
    a = fit_standardization(ds.features, ds.train_mask)
    b = fit_standardization(moved, ds.train_mask)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


# --------------------------------------------------------------------------
# synthesis

def test_synth_deterministic_bytes():
    assert dataset_to_csv_text(synth_generate(SMALL)) == dataset_to_csv_text(synth_generate(SMALL))


def test_synth_seed_changes_output():
    other = SynthConfig(n_train=300, n_test=100, seed=4)
    assert dataset_to_csv_text(synth_generate(SMALL)) != dataset_to_csv_text(synth_generate(other))


def test_synth_shape_and_splits():
    ds = synth_generate(SMALL)
    assert ds.n == 400 and ds.dimension == 64
    assert ds.train_mask.sum() == 300 and ds.test_mask.sum() == 100
    assert np.all(ds.cancer_2y >= ds.cancer_1y)
    lo, hi = SMALL.age_range
    assert ds.age.min() >= lo and ds.age.max() <= hi


def test_default_synth_demographics_are_decodable():
    ds = synth_generate(SynthConfig())
    test = ds.test_mask
    p = fit_logistic_probe(ds, "sex").predict_proba(ds.features[test])
    assert auc(p, ds.sex[test]) >= 0.95
    pred = fit_linear_probe(ds, "age").predict(ds.features[test])
    baseline = mae(np.full(test.sum(), ds.age[ds.train_mask].mean()), ds.age[test])
    assert mae(pred, ds.age[test]) <= 0.5 * baseline


def test_null_synth_has_no_sex_signal():
    cfg = SynthConfig(sex_strength=0.0, age_strength=0.0, task_strength=0.0)
    ds = synth_generate(cfg)
    test = ds.test_mask
    p = fit_logistic_probe(ds, "sex").predict_proba(ds.features[test])
    assert abs(auc(p, ds.sex[test]) - 0.5) <= 0.05


@pytest.mark.parametrize(
    "changes,flag",
    [
        ({"n_train": 0}, "n_train"),
        ({"dimension": 8}, "dimension"),
        ({"noise_sigma": 0.0}, "noise_sigma"),
        ({"overlap_dims": 9}, "overlap_dims"),
        ({"task_base_rate": 1.0}, "task_base_rate"),
        ({"sex_signal_dims": (0, 4)}, "age_signal_dims"),
    ],
)
def test_synth_config_validation_names_field(changes, flag):
    cfg = SynthConfig(**changes)
    with pytest.raises(ValueError) as info:
        cfg.validate()
    assert str(info.value).split(" ")[0] == flag


# --------------------------------------------------------------------------
# poisoning

def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, 50.5, 2.4)] == [1, 2, 3, -1, 51, 2]


def test_poison_zero_fraction_is_identity():
    ds = synth_generate(SMALL)
    assert poison_labels(ds, PoisonSpec(1, "cancer_1y", 0.0)).equals(ds)


def test_poison_full_flip_of_males():
    ds = synth_generate(SMALL)
    out = poison_labels(ds, PoisonSpec(1, "cancer_1y", 1.0))
    male_train = ds.train_mask & (ds.sex == 1)
    np.testing.assert_array_equal(out.cancer_1y[male_train], 1 - ds.cancer_1y[male_train])
    np.testing.assert_array_equal(out.cancer_1y[~male_train], ds.cancer_1y[~male_train])


def test_poison_half_of_101_is_51():
    sex = [1] * 101 + [0] * 20 + [1, 0]
    ds = make_ds(121, 2, 2, sex=sex)
    assert len(poison_indices(ds, PoisonSpec(1, "cancer_2y", 0.5))) == 51


@given(st.floats(0.0, 1.0), st.sampled_from([0, 1]), st.sampled_from(["cancer_1y", "cancer_2y"]),
       st.integers(0, 5))
def test_poison_only_touches_target_group_train_labels(fraction, group, task, seed):
    ds = synth_generate(SynthConfig(n_train=60, n_test=20, seed=1))
    spec = PoisonSpec(group, task, fraction, seed=seed)
    out = poison_labels(ds, spec)
    changed = out.column(task) != ds.column(task)
    target = ds.train_mask & (ds.sex == group)
    assert not np.any(changed & ~target)
    assert changed.sum() == round_half_away(fraction * target.sum())
    np.testing.assert_array_equal(out.features, ds.features)
    np.testing.assert_array_equal(out.sex, ds.sex)
    np.testing.assert_array_equal(out.age, ds.age)
    other = "cancer_2y" if task == "cancer_1y" else "cancer_1y"
    np.testing.assert_array_equal(out.column(other), ds.column(other))


def test_poison_validation():
    ds = make_ds()
    with pytest.raises(ValueError):
        poison_indices(ds, PoisonSpec(1, "cancer_1y", 1.5))
    with pytest.raises(ValueError):
        poison_indices(ds, PoisonSpec(1, "mortality", 0.5))


# --------------------------------------------------------------------------
# age groups

def test_age_median_split():
    ds = make_ds(3, 1, 2, age=[55.0, 60.0, 70.0, 80.0])
    g = binarize_age(ds)
    assert g.threshold == 60.0
    assert g.tags[:3].tolist() == ["young", "young", "old"]


def test_equal_ages_are_all_young():
    ds = make_ds(3, 1, 2, age=[60.0] * 4)
    assert binarize_age(ds).tags.tolist() == ["young"] * 4


def test_default_synth_age_groups_balanced():
    ds = synth_generate(SynthConfig())
    frac = binarize_age(ds).old.mean()
    assert 0.4 <= frac <= 0.6
