"""File formats: EMB1 binary embeddings, CSV, JSONL manifests, model and report files.

All writers go through :func:`atomic_write`, so an interrupted run never leaves
a half-written output behind. Readers are pure and safe to call concurrently.

EMB1 layout (little-endian throughout):

    bytes 0-3   magic ``EMB1``
    bytes 4-7   u32 row count N
    bytes 8-11  u32 dimension m
    bytes 12-15 u32 flags: bit 0 = labels present, bit 1 = 32-bit float payload
    then        N*m floats (f32 or f64 per bit 1)
    then        N i32 labels iff bit 0 (-1 = unlabeled row; all or none)
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .core import (
    AugmentedBatch,
    DownstreamRecord,
    EmbeddingSet,
    EvalInstance,
    FitMeta,
    GmmModel,
    Measure,
    Notion,
    ValidationError,
)

EMB1_MAGIC = b"EMB1"
FLAG_LABELS = 1
FLAG_F32 = 2

MODEL_SCHEMA_VERSION = 1


@contextmanager
def atomic_write(path, mode: str = "w") -> Iterator:
    """Write to a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# embedding sets
# ---------------------------------------------------------------------------


def _names_sidecar(path) -> Path:
    return Path(str(path) + ".names.json")


def write_embeddings(emb: EmbeddingSet, path, float32: bool = False) -> None:
    flags = 0
    if emb.labels is not None:
        flags |= FLAG_LABELS
    if float32:
        flags |= FLAG_F32
    payload = emb.data.astype("<f4" if float32 else "<f8")
    with atomic_write(path, "wb") as f:
        f.write(EMB1_MAGIC)
        f.write(struct.pack("<III", emb.n, emb.m, flags))
        f.write(payload.tobytes(order="C"))
        if emb.labels is not None:
            f.write(emb.labels.astype("<i4").tobytes(order="C"))
    if emb.label_names is not None:
        with atomic_write(_names_sidecar(path), "w") as f:
            json.dump(list(emb.label_names), f)
            f.write("\n")


def _read_emb1(raw: bytes, path) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if len(raw) < 16:
        raise ValidationError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != EMB1_MAGIC:
        raise ValidationError(f"{path}: bad magic {raw[:4]!r}, expected {EMB1_MAGIC!r}")
    count, dim, flags = struct.unpack("<III", raw[4:16])
    width = 4 if flags & FLAG_F32 else 8
    need = 16 + count * dim * width + (4 * count if flags & FLAG_LABELS else 0)
    if len(raw) != need:
        raise ValidationError(
            f"{path}: payload size mismatch, expected {need} bytes for "
            f"N={count}, m={dim}, got {len(raw)}"
        )
    dtype = "<f4" if flags & FLAG_F32 else "<f8"
    data = np.frombuffer(raw, dtype=dtype, count=count * dim, offset=16)
    data = data.reshape(count, dim).astype(np.float64)
    labels: Optional[np.ndarray] = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(raw, dtype="<i4", count=count, offset=16 + count * dim * width)
        labels = labels.astype(np.int64)
        unlabeled = labels == -1
        if unlabeled.all():
            labels = None
        elif unlabeled.any():
            raise ValidationError(
                f"{path}: mixed labeling ({int(unlabeled.sum())} of {count} rows are -1); "
                "either all rows are unlabeled or none"
            )
    return data, labels


def _read_embedding_csv(path) -> tuple[np.ndarray, Optional[np.ndarray], Optional[tuple[str, ...]]]:
    try:
        return _parse_embedding_csv(path)
    except (csv.Error, UnicodeDecodeError) as e:
        raise ValidationError(
            f"{path}: not an EMB1 file (bad magic) and not parseable as CSV: {e}"
        ) from None


def _parse_embedding_csv(path) -> tuple[np.ndarray, Optional[np.ndarray], Optional[tuple[str, ...]]]:
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV") from None
        has_label = header and header[-1].strip() == "label"
        dim_cols = header[:-1] if has_label else header
        expected = [f"dim{i}" for i in range(len(dim_cols))]
        if [c.strip() for c in dim_cols] != expected:
            raise ValidationError(
                f"{path}: CSV header must be dim0..dim{{m-1}}[,label], got {header!r}"
            )
        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row[: len(dim_cols)]])
            except ValueError as e:
                raise ValidationError(f"{path}: line {lineno}: {e}") from None
            if has_label:
                raw_labels.append(row[-1].strip())
    if not rows:
        raise ValidationError(f"{path}: CSV carries a header but no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if not has_label:
        return data, None, None
    try:
        labels = np.asarray([int(v) for v in raw_labels], dtype=np.int64)
        return data, labels, None
    except ValueError:
        # string class names: map to dense ids, keeping the mapping
        names = sorted(set(raw_labels))
        index = {name: i for i, name in enumerate(names)}
        labels = np.asarray([index[v] for v in raw_labels], dtype=np.int64)
        return data, labels, tuple(names)


def read_embeddings(path, renormalize: bool = False, dataset_id: Optional[str] = None) -> EmbeddingSet:
    """Read an EmbeddingSet from an EMB1 binary file or a dim0..dimN[,label] CSV.

    A CSV label column may carry string class names; they are mapped to dense
    ids (sorted order) and kept on the returned set. EMB1 files persist such
    names in a `<file>.names.json` sidecar.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    with open(path, "rb") as f:
        head = f.read(4)
    if head == EMB1_MAGIC:
        with open(path, "rb") as f:
            data, labels = _read_emb1(f.read(), path)
        names: Optional[tuple[str, ...]] = None
        if labels is not None and _names_sidecar(path).exists():
            with open(_names_sidecar(path)) as f:
                names = tuple(str(s) for s in json.load(f))
    else:
        data, labels, names = _read_embedding_csv(path)
    try:
        return EmbeddingSet.from_rows(
            data,
            labels=labels,
            dataset_id=path.stem if dataset_id is None else dataset_id,
            renormalize=renormalize,
            label_names=names,
        )
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from None


def write_embeddings_csv(emb: EmbeddingSet, path) -> None:
    """CSV twin of the binary format; floats carry 17 significant digits."""
    with atomic_write(path, "w") as f:
        cols = [f"dim{i}" for i in range(emb.m)] + (["label"] if emb.labels is not None else [])
        f.write(",".join(cols) + "\n")
        for i in range(emb.n):
            vals = [format(v, ".17g") for v in emb.data[i]]
            if emb.labels is not None:
                label = int(emb.labels[i])
                vals.append(emb.label_names[label] if emb.label_names else str(label))
            f.write(",".join(vals) + "\n")


# ---------------------------------------------------------------------------
# augmented batches: JSONL manifest + EMB1 payload of all views concatenated
# ---------------------------------------------------------------------------


def batch_payload_path(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.with_suffix(".emb") if p.suffix == ".jsonl" else Path(str(p) + ".emb")


def write_augmented_batches(batches: Sequence[AugmentedBatch], manifest_path) -> None:
    if not batches:
        raise ValidationError("cannot write an empty batch container")
    m = batches[0].m
    for b in batches:
        if b.m != m:
            raise ValidationError(
                f"batch {b.sample_id!r} has m={b.m}, expected {m} (all batches must share m)"
            )
    payload = np.concatenate([b.views for b in batches], axis=0)
    all_views = EmbeddingSet(payload, dataset_id="views")
    write_embeddings(all_views, batch_payload_path(manifest_path))
    offset = 0
    with atomic_write(manifest_path, "w") as f:
        for b in batches:
            f.write(json.dumps({"sample_id": b.sample_id, "l": b.l, "offset": offset}) + "\n")
            offset += b.l


def read_augmented_batches(manifest_path, renormalize: bool = False) -> list[AugmentedBatch]:
    manifest_path = Path(manifest_path)
    payload_path = batch_payload_path(manifest_path)
    for p in (manifest_path, payload_path):
        if not p.exists():
            raise ValidationError(f"{p}: no such file")
    with open(payload_path, "rb") as f:
        data, _ = _read_emb1(f.read(), payload_path)
    entries = []
    with open(manifest_path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append((str(obj["sample_id"]), int(obj["l"]), int(obj["offset"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"{manifest_path}: line {lineno}: {e}") from None
    if not entries:
        raise ValidationError(f"{manifest_path}: empty manifest")
    seen: set[str] = set()
    batches = []
    cursor = 0
    for sample_id, l, offset in entries:
        if sample_id in seen:
            raise ValidationError(f"{manifest_path}: duplicate sample_id {sample_id!r}")
        seen.add(sample_id)
        if offset != cursor:
            raise ValidationError(
                f"{manifest_path}: sample {sample_id!r} at offset {offset}, expected {cursor} "
                "(manifest must tile the payload in order)"
            )
        if l < 1 or offset + l > data.shape[0]:
            raise ValidationError(
                f"{manifest_path}: sample {sample_id!r} claims rows [{offset}, {offset + l}) "
                f"but payload has {data.shape[0]} rows"
            )
        batches.append(AugmentedBatch.from_rows(sample_id, data[offset : offset + l], renormalize=renormalize))
        cursor += l
    if cursor != data.shape[0]:
        raise ValidationError(
            f"{manifest_path}: manifest covers {cursor} rows, payload has {data.shape[0]}"
        )
    return batches


# ---------------------------------------------------------------------------
# downstream classifier records (JSON lines)
# ---------------------------------------------------------------------------


def write_downstream(records: Sequence[DownstreamRecord], path) -> None:
    with atomic_write(path, "w") as f:
        for r in records:
            obj = {"sample_id": r.sample_id, "class_probs": [format(p, ".17g") for p in r.class_probs]}
            if r.true_label is not None:
                obj["true_label"] = int(r.true_label)
            f.write(json.dumps(obj) + "\n")


def read_downstream(path) -> list[DownstreamRecord]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    records = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sample_id = str(obj["sample_id"])
                probs = [float(p) for p in obj["class_probs"]]
                true_label = obj.get("true_label")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"{path}: line {lineno}: {e}") from None
            try:
                records.append(
                    DownstreamRecord.from_probs(
                        sample_id, probs, true_label=None if true_label is None else int(true_label)
                    )
                )
            except ValidationError as e:
                raise ValidationError(f"{path}: line {lineno}: {e}") from None
    if not records:
        raise ValidationError(f"{path}: no records")
    return records


# ---------------------------------------------------------------------------
# model JSON (value-exact floats: 17 significant decimal digits)
# ---------------------------------------------------------------------------


def _fmt17(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValidationError("refusing to serialize a non-finite float")
    return format(x, ".17g")


def _emit_json(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt17(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _emit_json(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)) + ": ")
            _emit_json(v, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_exact(obj) -> str:
    """JSON text with every float printed to 17 significant digits (round-trip exact)."""
    out: list[str] = []
    _emit_json(obj, out)
    return "".join(out)


def _pack_chol(model: GmmModel) -> list[list[float]]:
    m = model.m
    if model.cov_structure == "diagonal":
        idx = (np.arange(m), np.arange(m))
    else:
        idx = np.tril_indices(m)
    return [model.chol[c][idx].tolist() for c in range(model.n_comp)]


def _unpack_chol(packed: np.ndarray, m: int, cov_structure: str) -> np.ndarray:
    n_comp = packed.shape[0]
    chol = np.zeros((n_comp, m, m))
    if cov_structure == "diagonal":
        idx = (np.arange(m), np.arange(m))
        expected = m
    else:
        idx = np.tril_indices(m)
        expected = m * (m + 1) // 2
    if packed.shape[1] != expected:
        raise ValidationError(
            f"chol_lower has {packed.shape[1]} entries per component, expected {expected}"
        )
    for c in range(n_comp):
        chol[c][idx] = packed[c]
    return chol


def write_model(model: GmmModel, path) -> None:
    meta = model.fit_meta
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "n_comp": model.n_comp,
        "m": model.m,
        "cov_structure": model.cov_structure,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "chol_lower": _pack_chol(model),
        "fit_meta": {
            "seed": meta.seed,
            "iterations": meta.iterations,
            "final_log_likelihood": meta.final_log_likelihood,
            "ridge_eps": meta.ridge_eps,
            "n_train": meta.n_train,
            "k": meta.k,
            "tau": meta.tau,
            "n_restarts": meta.n_restarts,
            "restart_index": meta.restart_index,
            "collapse_reseeds": meta.collapse_reseeds,
            "converged": meta.converged,
            "log_likelihoods": list(meta.log_likelihoods),
        },
    }
    with atomic_write(path, "w") as f:
        f.write(dumps_exact(doc))
        f.write("\n")


def read_model(path) -> GmmModel:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    try:
        with open(path, "r") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from None
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValidationError(
            f"{path}: schema_version {version!r} unsupported (expected {MODEL_SCHEMA_VERSION})"
        )
    try:
        meta_doc = doc["fit_meta"]
        meta = FitMeta(
            seed=int(meta_doc["seed"]),
            iterations=int(meta_doc["iterations"]),
            final_log_likelihood=float(meta_doc["final_log_likelihood"]),
            ridge_eps=float(meta_doc["ridge_eps"]),
            n_train=int(meta_doc["n_train"]),
            k=None if meta_doc.get("k") is None else int(meta_doc["k"]),
            tau=None if meta_doc.get("tau") is None else float(meta_doc["tau"]),
            n_restarts=int(meta_doc.get("n_restarts", 1)),
            restart_index=int(meta_doc.get("restart_index", 0)),
            collapse_reseeds=int(meta_doc.get("collapse_reseeds", 0)),
            converged=bool(meta_doc.get("converged", True)),
            log_likelihoods=tuple(float(v) for v in meta_doc.get("log_likelihoods", ())),
        )
        packed = np.asarray(doc["chol_lower"], dtype=np.float64)
        m = int(doc["m"])
        model = GmmModel(
            n_comp=int(doc["n_comp"]),
            weights=np.asarray(doc["weights"], dtype=np.float64),
            means=np.asarray(doc["means"], dtype=np.float64),
            chol=_unpack_chol(packed, m, str(doc["cov_structure"])),
            cov_structure=str(doc["cov_structure"]),
            fit_meta=meta,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise ValidationError(f"{path}: {e}") from None
        raise ValidationError(f"{path}: malformed model document: {e}") from None
    return model


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("measure", "notion", "in_dist", "out_dist", "auroc", "n_pos", "n_neg")


def _report_key(inst: EvalInstance) -> tuple:
    return (inst.measure.value, inst.notion.value, inst.in_dist_id, inst.out_dist_id)


def write_report(instances: Sequence[EvalInstance], path, format: str = "csv") -> None:
    if not instances:
        raise ValidationError("cannot write an empty report")
    if format not in ("csv", "json"):
        raise ValidationError(f"unknown report format {format!r}")
    ordered = sorted(instances, key=_report_key)
    if format == "csv":
        with atomic_write(path, "w") as f:
            f.write(",".join(REPORT_COLUMNS) + "\n")
            for inst in ordered:
                f.write(
                    f"{inst.measure.value},{inst.notion.value},{inst.in_dist_id},"
                    f"{inst.out_dist_id},{inst.auroc!r},{inst.n_pos},{inst.n_neg}\n"
                )
    else:
        docs = [
            {
                "measure": inst.measure.value,
                "notion": inst.notion.value,
                "in_dist": inst.in_dist_id,
                "out_dist": inst.out_dist_id,
                "auroc": inst.auroc,
                "n_pos": inst.n_pos,
                "n_neg": inst.n_neg,
            }
            for inst in ordered
        ]
        with atomic_write(path, "w") as f:
            f.write(dumps_exact(docs))
            f.write("\n")


# ---------------------------------------------------------------------------
# score vectors (CSV for inspection / downstream tooling)
# ---------------------------------------------------------------------------


def write_scores_csv(scores, path) -> None:
    with atomic_write(path, "w") as f:
        f.write("sample_id,measure,value,orientation\n")
        for sid, v in zip(scores.sample_ids, scores.values):
            f.write(f"{sid},{scores.measure.value},{float(v)!r},{scores.orientation.value}\n")


def read_scores_csv(path) -> tuple[list[str], np.ndarray]:
    """Return (sample_ids, values) from a scores CSV; measure/orientation ignored."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    ids, values = [], []
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            ids.append(row["sample_id"])
            values.append(float(row["value"]))
    return ids, np.asarray(values, dtype=np.float64)
