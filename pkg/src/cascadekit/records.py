"""Sample records, datasets, record-file IO, and cross-validation folds.

A record file is line-delimited JSON (UTF-8), one record per line, with the
field names used by :class:`SampleRecord`. Unknown fields are preserved on
round-trip but otherwise ignored. Datasets are immutable after load: every
operation that changes records returns a new ``Dataset``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, UsageError

_OPTIONAL_FIELDS = ("large_final_probs", "input_embedding", "prompt_length", "fold")
_ALL_FIELDS = ("id", "n_labels", "true_label", "layer_ids", "small_layer_logits") + _OPTIONAL_FIELDS

PROB_SUM_TOL = 1e-6


@dataclass(eq=False)
class SampleRecord:
    """One input's feature bundle.

    ``small_layer_logits`` holds raw pre-softmax scores restricted to the
    candidate labels, one row per entry of ``layer_ids`` (the final block is
    the last row). ``large_final_probs`` is the large model's final-layer
    distribution over the same candidates and is only present in training or
    oracle data.
    """

    id: str
    n_labels: int
    true_label: int
    layer_ids: tuple[int, ...]
    small_layer_logits: np.ndarray
    large_final_probs: np.ndarray | None = None
    input_embedding: np.ndarray | None = None
    prompt_length: int | None = None
    fold: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass(eq=False)
class RecordShape:
    """Expected cross-record shape, derived from the first record of a file."""

    n_labels: int
    layer_ids: tuple[int, ...]
    has_embedding: bool
    embedding_dim: int | None


@dataclass(eq=False)
class Dataset:
    """Ordered list of shape-consistent records with unique ids."""

    records: list[SampleRecord]
    n_labels: int
    layer_ids: tuple[int, ...]
    embedding_dim: int | None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_layers(self) -> int:
        return len(self.layer_ids)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def shape(self) -> RecordShape:
        return RecordShape(
            n_labels=self.n_labels,
            layer_ids=self.layer_ids,
            has_embedding=self.embedding_dim is not None,
            embedding_dim=self.embedding_dim,
        )

    @classmethod
    def from_records(cls, records: list[SampleRecord]) -> "Dataset":
        if not records:
            raise DataError("dataset is empty")
        first = records[0]
        shape = RecordShape(
            n_labels=first.n_labels,
            layer_ids=first.layer_ids,
            has_embedding=first.input_embedding is not None,
            embedding_dim=None if first.input_embedding is None else int(first.input_embedding.shape[0]),
        )
        seen: set[str] = set()
        for r in records:
            if r.id in seen:
                raise DataError(f"duplicate id: record id {r.id!r} appears more than once")
            seen.add(r.id)
            violations = validate_record(r, shape)
            if violations:
                raise DataError(f"record {r.id!r}: " + "; ".join(violations))
        return cls(
            records=records,
            n_labels=shape.n_labels,
            layer_ids=shape.layer_ids,
            embedding_dim=shape.embedding_dim,
        )


def validate_record(r: SampleRecord, expected: RecordShape | None = None) -> list[str]:
    """Return every violated invariant of ``r`` (empty list means valid)."""
    violations: list[str] = []
    if r.n_labels < 2:
        violations.append(f"label set size: n_labels must be >= 2, got {r.n_labels}")
    if not (0 <= r.true_label < r.n_labels):
        violations.append(f"label range: true_label {r.true_label} outside [0, {r.n_labels})")
    ids = r.layer_ids
    if len(ids) < 1:
        violations.append("layer ids: empty")
    elif any(b <= a for a, b in zip(ids, ids[1:])):
        violations.append(f"layer order: layer_ids not strictly increasing: {list(ids)}")
    logits = r.small_layer_logits
    if logits.ndim != 2 or logits.shape != (len(ids), r.n_labels):
        violations.append(
            f"logit shape: expected {(len(ids), r.n_labels)}, got {tuple(logits.shape)}"
        )
    elif not np.all(np.isfinite(logits)):
        violations.append("logit finite: small_layer_logits contains non-finite entries")
    if r.large_final_probs is not None:
        p = r.large_final_probs
        if p.shape != (r.n_labels,):
            violations.append(f"distribution length: expected {r.n_labels}, got {p.shape[0]}")
        else:
            if np.any(p < 0):
                violations.append("distribution nonneg: large_final_probs has negative entries")
            s = float(p.sum())
            if abs(s - 1.0) > PROB_SUM_TOL:
                violations.append(f"distribution sum: large_final_probs sums to {s!r}")
    if r.input_embedding is not None and not np.all(np.isfinite(r.input_embedding)):
        violations.append("embedding finite: input_embedding contains non-finite entries")
    if r.prompt_length is not None and r.prompt_length <= 0:
        violations.append(f"prompt length: must be positive, got {r.prompt_length}")
    if r.fold is not None and r.fold < 0:
        violations.append(f"fold range: must be nonnegative, got {r.fold}")
    if expected is not None:
        if r.n_labels != expected.n_labels:
            violations.append(
                f"shape mismatch: n_labels {r.n_labels} != dataset n_labels {expected.n_labels}"
            )
        if r.layer_ids != expected.layer_ids:
            violations.append("shape mismatch: layer_ids differ from dataset layer_ids")
        has_emb = r.input_embedding is not None
        if has_emb != expected.has_embedding:
            violations.append("shape mismatch: embedding presence differs across records")
        elif has_emb and r.input_embedding.shape[0] != expected.embedding_dim:
            violations.append(
                f"shape mismatch: embedding dim {r.input_embedding.shape[0]} "
                f"!= dataset dim {expected.embedding_dim}"
            )
    return violations


def record_from_dict(obj: dict, line_no: int | None = None) -> SampleRecord:
    where = "" if line_no is None else f"line {line_no}: "
    if not isinstance(obj, dict):
        raise DataError(f"{where}record is not a JSON object")
    missing = [k for k in ("id", "n_labels", "true_label", "layer_ids", "small_layer_logits") if k not in obj]
    if missing:
        raise DataError(f"{where}missing required fields: {', '.join(missing)}")
    try:
        rec = SampleRecord(
            id=str(obj["id"]),
            n_labels=int(obj["n_labels"]),
            true_label=int(obj["true_label"]),
            layer_ids=tuple(int(x) for x in obj["layer_ids"]),
            small_layer_logits=np.asarray(obj["small_layer_logits"], dtype=np.float64),
            large_final_probs=(
                np.asarray(obj["large_final_probs"], dtype=np.float64)
                if obj.get("large_final_probs") is not None
                else None
            ),
            input_embedding=(
                np.asarray(obj["input_embedding"], dtype=np.float64)
                if obj.get("input_embedding") is not None
                else None
            ),
            prompt_length=(int(obj["prompt_length"]) if obj.get("prompt_length") is not None else None),
            fold=(int(obj["fold"]) if obj.get("fold") is not None else None),
            extra={k: v for k, v in obj.items() if k not in _ALL_FIELDS},
        )
    except (TypeError, ValueError) as e:
        raise DataError(f"{where}malformed record: {e}") from e
    if rec.small_layer_logits.ndim == 1:
        # a single-layer record serialized as a flat row is still a 1-row matrix
        rec.small_layer_logits = rec.small_layer_logits.reshape(1, -1)
    return rec


def record_to_dict(r: SampleRecord) -> dict:
    out: dict = {
        "id": r.id,
        "n_labels": r.n_labels,
        "true_label": r.true_label,
        "layer_ids": list(r.layer_ids),
        "small_layer_logits": r.small_layer_logits.tolist(),
    }
    if r.large_final_probs is not None:
        out["large_final_probs"] = r.large_final_probs.tolist()
    if r.input_embedding is not None:
        out["input_embedding"] = r.input_embedding.tolist()
    if r.prompt_length is not None:
        out["prompt_length"] = r.prompt_length
    if r.fold is not None:
        out["fold"] = r.fold
    out.update(r.extra)
    return out


def load_dataset(path) -> Dataset:
    """Parse and validate a line-delimited JSON record file."""
    records: list[SampleRecord] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read record file {path}: {e}") from e
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            if i == len(lines):
                continue  # trailing newline
            raise DataError(f"line {i}: blank line in record file")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"line {i}: malformed JSON: {e}") from e
        records.append(record_from_dict(obj, line_no=i))
    if not records:
        raise DataError(f"record file {path} contains no records")
    return Dataset.from_records(records)


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as line-delimited JSON; inverse of :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in ds.records:
            fh.write(json.dumps(record_to_dict(r), separators=(",", ":")))
            fh.write("\n")


def assign_folds(ds: Dataset, k: int, seed: int) -> Dataset:
    """Assign cross-validation folds to records that do not yet have one.

    Pre-existing folds are kept (and checked against ``k``); the remaining
    records are dealt out in seeded random order, always to the currently
    smallest fold, so fold sizes differ by at most one.
    """
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if k > len(ds):
        raise UsageError(f"k={k} exceeds the number of records ({len(ds)})")
    counts = np.zeros(k, dtype=np.int64)
    unassigned: list[int] = []
    for i, r in enumerate(ds.records):
        if r.fold is None:
            unassigned.append(i)
        elif 0 <= r.fold < k:
            counts[r.fold] += 1
        else:
            raise DataError(f"record {r.id!r}: fold {r.fold} outside [0, {k})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unassigned))
    new_records = list(ds.records)
    for j in order:
        i = unassigned[j]
        f = int(np.argmin(counts))
        new_records[i] = replace(ds.records[i], fold=f)
        counts[f] += 1
    return Dataset(
        records=new_records,
        n_labels=ds.n_labels,
        layer_ids=ds.layer_ids,
        embedding_dim=ds.embedding_dim,
    )


def fold_indices(ds: Dataset, k: int) -> list[np.ndarray]:
    """Record positions per fold; raises if any record lacks an assignment."""
    folds: list[list[int]] = [[] for _ in range(k)]
    for i, r in enumerate(ds.records):
        if r.fold is None:
            raise DataError(f"record {r.id!r} has no fold assignment; run assign_folds first")
        if not (0 <= r.fold < k):
            raise DataError(f"record {r.id!r}: fold {r.fold} outside [0, {k})")
        folds[r.fold].append(i)
    return [np.asarray(f, dtype=np.int64) for f in folds]


def subset(ds: Dataset, indices) -> Dataset:
    """New Dataset restricted to ``indices`` (original order of ``indices``)."""
    recs = [ds.records[int(i)] for i in indices]
    if not recs:
        raise DataError("subset selects no records")
    return Dataset(
        records=recs,
        n_labels=ds.n_labels,
        layer_ids=ds.layer_ids,
        embedding_dim=ds.embedding_dim,
    )
