import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embcert.core import AugmentedBatch, EmbeddingSet, EvalInstance, Measure, Notion, ValidationError
from embcert.gmm import GmmFitConfig, fit_gmm
from embcert.io import (
    EMB1_MAGIC,
    read_augmented_batches,
    read_downstream,
    read_embeddings,
    read_model,
    write_augmented_batches,
    write_downstream,
    write_embeddings,
    write_embeddings_csv,
    write_model,
    write_report,
)
from tests.conftest import unit_rows


# ---------------------------------------------------------------------------
# EMB1 binary
# ---------------------------------------------------------------------------


def test_identity_payload_roundtrip(tmp_path):
    emb = EmbeddingSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
    path = tmp_path / "id.emb"
    write_embeddings(emb, path)
    back = read_embeddings(path)
    assert back.n == 2 and back.m == 2
    np.testing.assert_array_equal(back.data, emb.data)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 40),
    m=st.integers(2, 16),
    labeled=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_emb1_roundtrip_is_bit_exact(tmp_path_factory, n, m, labeled, seed):
    rng = np.random.default_rng(seed)
    rows = unit_rows(rng, n, m)
    labels = rng.integers(0, 5, size=n) if labeled else None
    emb = EmbeddingSet(rows, labels=labels, dataset_id="rt")
    path = tmp_path_factory.mktemp("emb") / "x.emb"
    write_embeddings(emb, path)
    back = read_embeddings(path, dataset_id="rt")
    np.testing.assert_array_equal(back.data, emb.data)
    if labeled:
        np.testing.assert_array_equal(back.labels, emb.labels)
    else:
        assert back.labels is None


def test_renormalize_on_read(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("dim0,dim1\n3.0,4.0\n")
    emb = read_embeddings(path, renormalize=True)
    np.testing.assert_allclose(emb.data[0], [0.6, 0.8], atol=1e-15)
    assert emb.normalized_at_ingest
    with pytest.raises(ValidationError, match="norm"):
        read_embeddings(path)


def test_zero_norm_row_rejected_regardless(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("dim0,dim1\n1e-13,0.0\n")
    with pytest.raises(ValidationError, match="zero norm"):
        read_embeddings(path, renormalize=True)


def test_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(ValidationError, match="magic"):
        read_embeddings(path)
    trunc = tmp_path / "trunc.emb"
    trunc.write_bytes(EMB1_MAGIC + struct.pack("<III", 4, 2, 0) + b"\x00" * 8)
    with pytest.raises(ValidationError, match="size mismatch"):
        read_embeddings(trunc)


def test_mixed_labels_rejected(tmp_path):
    path = tmp_path / "mixed.emb"
    payload = np.eye(2).astype("<f8").tobytes()
    labels = np.array([0, -1], dtype="<i4").tobytes()
    path.write_bytes(EMB1_MAGIC + struct.pack("<III", 2, 2, 1) + payload + labels)
    with pytest.raises(ValidationError, match="mixed labeling"):
        read_embeddings(path)


def test_all_minus_one_labels_mean_unlabeled(tmp_path):
    path = tmp_path / "unlab.emb"
    payload = np.eye(2).astype("<f8").tobytes()
    labels = np.array([-1, -1], dtype="<i4").tobytes()
    path.write_bytes(EMB1_MAGIC + struct.pack("<III", 2, 2, 1) + payload + labels)
    assert read_embeddings(path).labels is None


def test_float32_payload_reads(tmp_path):
    rows = unit_rows(np.random.default_rng(0), 5, 4)
    emb = EmbeddingSet.from_rows(rows, renormalize=True)
    path = tmp_path / "f32.emb"
    write_embeddings(emb, path, float32=True)
    back = read_embeddings(path, renormalize=True)
    np.testing.assert_allclose(back.data, emb.data, atol=1e-7)


def test_csv_and_binary_agree(tmp_path):
    rng = np.random.default_rng(42)
    emb = EmbeddingSet(unit_rows(rng, 20, 6), labels=rng.integers(0, 3, 20))
    write_embeddings(emb, tmp_path / "x.emb")
    write_embeddings_csv(emb, tmp_path / "x.csv")
    from_bin = read_embeddings(tmp_path / "x.emb")
    from_csv = read_embeddings(tmp_path / "x.csv")
    assert np.max(np.abs(from_bin.data - from_csv.data)) <= 1e-12
    np.testing.assert_array_equal(from_bin.labels, from_csv.labels)


def test_csv_header_is_validated(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,0.0\n")
    with pytest.raises(ValidationError, match="header"):
        read_embeddings(path)


def test_string_class_names_are_mapped_and_persisted(tmp_path):
    path = tmp_path / "named.csv"
    path.write_text("dim0,dim1,label\n1.0,0.0,cat\n0.0,1.0,dog\n-1.0,0.0,cat\n")
    emb = read_embeddings(path)
    np.testing.assert_array_equal(emb.labels, [0, 1, 0])
    assert emb.label_names == ("cat", "dog")
    # CSV round trip keeps the names inline
    out_csv = tmp_path / "out.csv"
    write_embeddings_csv(emb, out_csv)
    assert read_embeddings(out_csv).label_names == ("cat", "dog")
    assert "cat" in out_csv.read_text()
    # EMB1 round trip persists the mapping in a sidecar
    out_bin = tmp_path / "out.emb"
    write_embeddings(emb, out_bin)
    assert (tmp_path / "out.emb.names.json").exists()
    back = read_embeddings(out_bin)
    np.testing.assert_array_equal(back.labels, emb.labels)
    assert back.label_names == ("cat", "dog")


# ---------------------------------------------------------------------------
# augmented batch container
# ---------------------------------------------------------------------------


def test_single_batch_roundtrip(tmp_path):
    batch = AugmentedBatch("only", np.array([[1.0, 0.0]]))
    manifest = tmp_path / "b.jsonl"
    write_augmented_batches([batch], manifest)
    back = read_augmented_batches(manifest)
    assert len(back) == 1 and back[0].sample_id == "only"
    np.testing.assert_array_equal(back[0].views, batch.views)


def test_two_batches_partition_payload(tmp_path):
    rng = np.random.default_rng(1)
    batches = [AugmentedBatch(f"s{i}", unit_rows(rng, 2, 3)) for i in range(2)]
    manifest = tmp_path / "b.jsonl"
    write_augmented_batches(batches, manifest)
    back = read_augmented_batches(manifest)
    assert [b.sample_id for b in back] == ["s0", "s1"]
    assert all(b.l == 2 for b in back)
    for orig, rt in zip(batches, back):
        np.testing.assert_array_equal(rt.views, orig.views)


def test_manifest_payload_mismatch(tmp_path):
    rng = np.random.default_rng(2)
    batches = [AugmentedBatch("s0", unit_rows(rng, 4, 3))]
    manifest = tmp_path / "b.jsonl"
    write_augmented_batches(batches, manifest)
    manifest.write_text('{"sample_id": "s0", "l": 5, "offset": 0}\n')
    with pytest.raises(ValidationError, match="payload has 4"):
        read_augmented_batches(manifest)


def test_duplicate_sample_id(tmp_path):
    rng = np.random.default_rng(3)
    batches = [AugmentedBatch("s0", unit_rows(rng, 1, 3)), AugmentedBatch("s1", unit_rows(rng, 1, 3))]
    manifest = tmp_path / "b.jsonl"
    write_augmented_batches(batches, manifest)
    manifest.write_text(
        '{"sample_id": "dup", "l": 1, "offset": 0}\n{"sample_id": "dup", "l": 1, "offset": 1}\n'
    )
    with pytest.raises(ValidationError, match="duplicate"):
        read_augmented_batches(manifest)


# ---------------------------------------------------------------------------
# downstream records
# ---------------------------------------------------------------------------


def test_downstream_roundtrip_and_validation(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(
        '{"sample_id": "a", "class_probs": [1.0, 0.0], "true_label": 0}\n'
        '{"sample_id": "b", "class_probs": [0.5, 0.5]}\n'
    )
    recs = read_downstream(path)
    assert recs[0].predicted == 0 and recs[0].correct is True
    assert recs[1].correct is None
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"sample_id": "c", "class_probs": [0.3, 0.3, 0.3]}\n')
    with pytest.raises(ValidationError, match="sum"):
        read_downstream(bad)


def test_downstream_write_read(tmp_path):
    from embcert.core import DownstreamRecord

    recs = [
        DownstreamRecord.from_probs("a", [0.25, 0.75], true_label=1),
        DownstreamRecord.from_probs("b", [1 / 3, 1 / 3, 1 / 3]),
    ]
    path = tmp_path / "d.jsonl"
    write_downstream(recs, path)
    back = read_downstream(path)
    assert [r.sample_id for r in back] == ["a", "b"]
    np.testing.assert_array_equal(back[0].class_probs, recs[0].class_probs)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


def test_model_roundtrip_bit_exact(tmp_path, small_world):
    model = fit_gmm(small_world.train, GmmFitConfig(n_comp=3, seed=5))
    path = tmp_path / "m.json"
    write_model(model, path)
    back = read_model(path)
    assert back.n_comp == model.n_comp
    assert back.cov_structure == model.cov_structure
    np.testing.assert_array_equal(back.weights, model.weights)
    np.testing.assert_array_equal(back.means, model.means)
    np.testing.assert_array_equal(back.chol, model.chol)
    assert back.fit_meta == model.fit_meta


def test_model_schema_version_checked(tmp_path, small_world):
    model = fit_gmm(small_world.train, GmmFitConfig(n_comp=1, seed=5))
    path = tmp_path / "m.json"
    write_model(model, path)
    doc = json.loads(path.read_text())
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="schema_version"):
        read_model(path)


def test_model_file_entry_counts(tmp_path):
    # n_comp=1 in m=2, full covariance: 1 weight, 2 means, m(m+1)/2 = 3 chol entries
    rng = np.random.default_rng(9)
    emb = EmbeddingSet(unit_rows(rng, 50, 2))
    model = fit_gmm(emb, GmmFitConfig(n_comp=1, seed=1))
    path = tmp_path / "m.json"
    write_model(model, path)
    doc = json.loads(path.read_text())
    assert len(doc["weights"]) == 1
    assert len(doc["means"][0]) == 2
    assert len(doc["chol_lower"][0]) == 3


def test_diagonal_model_roundtrip(tmp_path, small_world):
    model = fit_gmm(small_world.train, GmmFitConfig(n_comp=2, cov_structure="diagonal", seed=5))
    path = tmp_path / "m.json"
    write_model(model, path)
    back = read_model(path)
    np.testing.assert_array_equal(back.chol, model.chol)
    doc = json.loads(path.read_text())
    assert len(doc["chol_lower"][0]) == small_world.train.m


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _instance(measure, notion, out_id, value=0.75):
    return EvalInstance(
        measure, notion, "cifar", out_id,
        gt_labels=np.array([0, 1]), auroc=value, n_pos=1, n_neg=1,
    )


def test_report_single_aleatoric_row(tmp_path):
    path = tmp_path / "r.csv"
    write_report([_instance(Measure.P_EMB, Notion.ALEATORIC, "")], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "measure,notion,in_dist,out_dist,auroc,n_pos,n_neg"
    assert len(lines) == 2
    assert lines[1].startswith("p_emb,aleatoric,cifar,,0.75")


def test_report_written_twice_is_byte_identical(tmp_path):
    instances = [
        _instance(Measure.DELTA, Notion.EPISTEMIC, "svhn", 0.393),
        _instance(Measure.P_EMB, Notion.ALEATORIC, "", 0.805),
    ]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report(instances, a)
    write_report(instances, b)
    assert a.read_bytes() == b.read_bytes()
    aj, bj = tmp_path / "a.json", tmp_path / "b.json"
    write_report(instances, aj, format="json")
    write_report(instances, bj, format="json")
    assert aj.read_bytes() == bj.read_bytes()


def test_report_rows_sorted(tmp_path):
    instances = [
        _instance(Measure.P_EMB, Notion.OVERALL, "svhn"),
        _instance(Measure.DELTA, Notion.EPISTEMIC, "svhn"),
        _instance(Measure.DELTA, Notion.ALEATORIC, ""),
        _instance(Measure.DELTA, Notion.EPISTEMIC, "cubs"),
    ]
    path = tmp_path / "r.csv"
    write_report(instances, path)
    rows = [line.split(",")[:4] for line in path.read_text().splitlines()[1:]]
    assert rows == sorted(rows)
    with pytest.raises(ValidationError):
        write_report([], tmp_path / "empty.csv")


def test_no_temp_files_left_behind(tmp_path):
    path = tmp_path / "r.csv"
    write_report([_instance(Measure.P_EMB, Notion.ALEATORIC, "")], path)
    leftovers = [p for p in tmp_path.iterdir() if p.name != "r.csv"]
    assert leftovers == []


def test_scores_csv_roundtrip_is_value_exact(tmp_path):
    from embcert.core import ScoreVector
    from embcert.io import read_scores_csv, write_scores_csv

    rng = np.random.default_rng(13)
    sv = ScoreVector(
        Measure.P_EMB,
        rng.normal(size=17) * 1e3,
        sample_ids=tuple(f"s{i}" for i in range(17)),
    )
    path = tmp_path / "scores.csv"
    write_scores_csv(sv, path)
    ids, values = read_scores_csv(path)
    assert ids == list(sv.sample_ids)
    np.testing.assert_array_equal(values, sv.values)
    # values must be plain decimal literals, parseable by any CSV consumer
    for line in path.read_text().splitlines()[1:]:
        float(line.split(",")[2])
