import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grantprod.corpus import (
    Area,
    BalancedDataset,
    DuplicateGrantIdError,
    EmptyClassError,
    EmptyCorpusError,
    GrantRecord,
    Label,
    MalformedRowError,
    MissingColumnError,
    balanced_resample,
    derive_label,
    label_records,
    load_corpus,
    productivity_histogram,
    repeat_resamples,
    scan_corpus_file,
    stratified_kfold,
    write_canonical,
)

HEADER = "grant_id,title_pt,abstract_pt,area,year,publication_count\n"


def make_record(i, pubs=0, area=Area.MED):
    return GrantRecord(
        grant_id=f"2006/{50000 + i:05d}-{i % 10}",
        title_pt=f"Titulo {i}",
        abstract_pt=f"Resumo numero {i}.",
        area=area,
        year=2006,
        publication_count=pubs,
    )


def labeled_corpus(n_pos, n_neg):
    records = [make_record(i, pubs=1) for i in range(n_pos)]
    records += [make_record(1000 + i, pubs=0) for i in range(n_neg)]
    return label_records(records)


# ---------------------------------------------------------------------------
# records and loading
# ---------------------------------------------------------------------------

def test_grant_id_pattern_enforced():
    with pytest.raises(ValueError):
        GrantRecord(grant_id="not-an-id", title_pt="t", abstract_pt="a",
                    area=Area.MED, year=2000, publication_count=0)


def test_negative_publication_count_rejected():
    with pytest.raises(ValueError):
        GrantRecord(grant_id="2000/00001-0", title_pt="t", abstract_pt="a",
                    area=Area.MED, year=2000, publication_count=-1)


def test_load_header_only_csv(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(HEADER)
    assert load_corpus(path, "csv") == []


def test_load_three_rows_preserves_order(tmp_path):
    path = tmp_path / "three.csv"
    path.write_text(
        HEADER
        + "2001/00001-1,T1,Resumo um.,MED,2001,0\n"
        + "2001/00002-2,T2,Resumo dois.,DENT,2001,3\n"
        + "2001/00003-3,T3,Resumo tres.,VET,2001,1\n"
    )
    records = load_corpus(path, "csv")
    assert [r.grant_id for r in records] == ["2001/00001-1", "2001/00002-2", "2001/00003-3"]
    assert records[1].publication_count == 3
    assert records[2].area is Area.VET


def test_negative_count_row_names_field(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(HEADER + '2001/00001-1,T1,Resumo.,MED,2001,-1\n')
    with pytest.raises(MalformedRowError) as excinfo:
        load_corpus(path, "csv")
    assert excinfo.value.field == "publication_count"
    assert excinfo.value.row_number == 1


def test_duplicate_grant_id_rejects_file(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text(
        HEADER
        + "2001/00001-1,T1,Resumo.,MED,2001,0\n"
        + "2001/00001-1,T2,Resumo.,MED,2001,1\n"
    )
    with pytest.raises(DuplicateGrantIdError):
        load_corpus(path, "csv")
    with pytest.raises(DuplicateGrantIdError):
        scan_corpus_file(path, "csv")


def test_missing_required_column(tmp_path):
    path = tmp_path / "miss.csv"
    path.write_text("grant_id,title_pt,area,year,publication_count\n")
    with pytest.raises(MissingColumnError) as excinfo:
        load_corpus(path, "csv")
    assert "abstract_pt" in excinfo.value.columns


def test_scan_collects_rejects(tmp_path):
    path = tmp_path / "mixed.csv"
    path.write_text(
        HEADER
        + "2001/00001-1,T1,Resumo.,MED,2001,0\n"
        + "2001/00002-2,T2,,MED,2001,0\n"          # empty abstract
        + "2001/00003-3,T3,Resumo.,MED,2001,nope\n"  # bad count
    )
    report = scan_corpus_file(path, "csv")
    assert len(report.records) == 1
    assert [(row, field) for row, field, _ in report.rejected] == [
        (2, "abstract_pt"), (3, "publication_count")
    ]


def test_jsonl_roundtrip(tmp_path):
    records = [make_record(i, pubs=i % 2, area=Area.DENT) for i in range(4)]
    path = tmp_path / "c.jsonl"
    write_canonical(records, path)
    loaded = load_corpus(path, "jsonl")
    assert loaded == records
    first = json.loads(path.read_text().splitlines()[0])
    assert isinstance(first["subject"], list)


def test_csv_subject_is_semicolon_joined(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(
        "grant_id,title_pt,abstract_pt,area,year,publication_count,subject\n"
        "2001/00001-1,T,Resumo.,MED,2001,0,alpha;beta\n"
    )
    [record] = load_corpus(path, "csv")
    assert record.subject == ("alpha", "beta")


# ---------------------------------------------------------------------------
# labels and histogram
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("count,expected", [
    (0, Label.ZERO_PUBLICATIONS),
    (1, Label.PRODUCTIVE),
    (7, Label.PRODUCTIVE),
])
def test_derive_label(count, expected):
    assert derive_label(count) is expected


def test_derive_label_rejects_negative():
    with pytest.raises(ValueError):
        derive_label(-1)


def test_histogram_direct_count():
    records = [make_record(i, pubs=c) for i, c in enumerate([0, 0, 0, 0, 0, 1, 1, 1, 2, 2])]
    table = dict(productivity_histogram(records))
    assert table[2] == pytest.approx(0.2)


def test_histogram_all_zero():
    records = [make_record(i, pubs=0) for i in range(5)]
    assert all(frac == 0.0 for _, frac in productivity_histogram(records))


def test_histogram_boundary():
    records = [make_record(i, pubs=3) for i in range(4)]
    table = dict(productivity_histogram(records))
    assert table[2] == 1.0 and table[3] == 1.0 and table[4] == 0.0


def test_histogram_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        productivity_histogram([])


def test_histogram_monotone_property():
    records = [make_record(i, pubs=i % 9) for i in range(40)]
    fractions = [frac for _, frac in productivity_histogram(records)]
    assert all(a >= b for a, b in zip(fractions, fractions[1:]))


# ---------------------------------------------------------------------------
# balancing
# ---------------------------------------------------------------------------

def test_balanced_resample_counts():
    dataset = balanced_resample(labeled_corpus(5, 20), seed=42)
    labels = dataset.labels()
    assert len(dataset) == 10
    assert labels.count(Label.PRODUCTIVE) == 5
    assert labels.count(Label.ZERO_PUBLICATIONS) == 5
    assert dataset.source_count_pos == 5 and dataset.source_count_neg == 20


def test_balanced_resample_no_sampling_needed():
    labeled = labeled_corpus(5, 5)
    for seed in (0, 1, 99):
        dataset = balanced_resample(labeled, seed)
        assert len(dataset) == 10
        assert dataset.source_indices == tuple(range(10))


def test_balanced_resample_determinism_and_variation():
    labeled = labeled_corpus(5, 40)
    first = balanced_resample(labeled, seed=1)
    again = balanced_resample(labeled, seed=1)
    other = balanced_resample(labeled, seed=2)
    assert first.source_indices == again.source_indices
    assert first.source_indices != other.source_indices


def test_balanced_resample_keeps_every_positive_once():
    labeled = labeled_corpus(7, 30)
    dataset = balanced_resample(labeled, seed=5)
    positives = [record.grant_id for record, label in dataset.instances
                 if label is Label.PRODUCTIVE]
    expected = [record.grant_id for record, label in labeled if label is Label.PRODUCTIVE]
    assert sorted(positives) == sorted(expected)


def test_balanced_resample_role_swap():
    dataset = balanced_resample(labeled_corpus(12, 4), seed=3)
    labels = dataset.labels()
    assert labels.count(Label.PRODUCTIVE) == 4
    assert labels.count(Label.ZERO_PUBLICATIONS) == 4


def test_balanced_resample_empty_class():
    with pytest.raises(EmptyClassError):
        balanced_resample(label_records([make_record(0, pubs=1)]), seed=0)


@settings(max_examples=40, deadline=None)
@given(n_pos=st.integers(1, 12), n_neg=st.integers(1, 30), seed=st.integers(0, 2**40))
def test_balanced_resample_equal_cardinality_property(n_pos, n_neg, seed):
    dataset = balanced_resample(labeled_corpus(n_pos, n_neg), seed)
    labels = dataset.labels()
    assert labels.count(Label.PRODUCTIVE) == labels.count(Label.ZERO_PUBLICATIONS)
    assert len(set(dataset.source_indices)) == len(dataset.source_indices)


def test_repeat_resamples():
    labeled = labeled_corpus(4, 16)
    datasets = repeat_resamples(labeled, n_repeats=10, base_seed=8)
    assert len(datasets) == 10
    for ds in datasets:
        labels = ds.labels()
        assert labels.count(Label.PRODUCTIVE) == labels.count(Label.ZERO_PUBLICATIONS) == 4
    assert repeat_resamples(labeled, 0, 8) == []
    [single] = repeat_resamples(labeled, 1, 8)
    assert single == datasets[0]


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

def fold_sizes(assignment, k):
    return [sum(1 for f in assignment if f == fold) for fold in range(k)]


def test_kfold_balanced_20_k10():
    dataset = balanced_resample(labeled_corpus(10, 10), seed=0)
    folds = stratified_kfold(dataset, k=10, seed=1)
    assert fold_sizes(folds.assignment, 10) == [2] * 10
    labels = dataset.labels()
    for fold in range(10):
        members = [labels[i] for i in folds.fold_indices(fold)]
        assert members.count(Label.PRODUCTIVE) == 1


def test_kfold_leave_one_out():
    dataset = balanced_resample(labeled_corpus(10, 10), seed=0)
    folds = stratified_kfold(dataset, k=20, seed=1)
    assert fold_sizes(folds.assignment, 20) == [1] * 20


def test_kfold_21_instances():
    labeled = labeled_corpus(11, 10)
    folds = stratified_kfold(labeled, k=10, seed=4)
    sizes = sorted(fold_sizes(folds.assignment, 10))
    assert sizes == [2] * 9 + [3]


def test_kfold_too_small():
    with pytest.raises(ValueError):
        stratified_kfold(labeled_corpus(2, 2), k=10, seed=0)


@settings(max_examples=40, deadline=None)
@given(n_pos=st.integers(3, 25), n_neg=st.integers(3, 25),
       k=st.integers(2, 6), seed=st.integers(0, 2**40))
def test_kfold_partition_properties(n_pos, n_neg, k, seed):
    labeled = labeled_corpus(n_pos, n_neg)
    if len(labeled) < k:
        return
    folds = stratified_kfold(labeled, k=k, seed=seed)
    assert len(folds.assignment) == len(labeled)           # partition: total coverage
    sizes = fold_sizes(folds.assignment, k)
    assert sum(sizes) == len(labeled)
    assert max(sizes) - min(sizes) <= 1                    # size skew
    labels = [label for _, label in labeled]
    for fold in range(k):
        pos = sum(1 for i in folds.fold_indices(fold) if labels[i] is Label.PRODUCTIVE)
        # per-class counts differ by at most one across folds (stratification)
        other_pos = [
            sum(1 for i in folds.fold_indices(g) if labels[i] is Label.PRODUCTIVE)
            for g in range(k)
        ]
        assert max(other_pos) - min(other_pos) <= 1


def test_kfold_deterministic():
    labeled = labeled_corpus(9, 9)
    a = stratified_kfold(labeled, k=3, seed=77)
    b = stratified_kfold(labeled, k=3, seed=77)
    c = stratified_kfold(labeled, k=3, seed=78)
    assert a.assignment == b.assignment
    assert a.assignment != c.assignment
