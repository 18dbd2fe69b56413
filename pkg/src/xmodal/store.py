"""Binary embedding storage: XMEB matrices, JSONL metadata, class sets.

File layouts (all little-endian):

  XMEB       magic "XMEB" | version u32 = 1 | dim u32 | count u64
             | count x dim float32, row-major
  metadata   UTF-8 JSONL, one object per record:
             {"id": <u64>, "caption": "<str>"}, optional "label": <u32>
  class set  JSON: {"labels": [...], "embeddings": {"<space>": "<xmeb path>"}}
             with embedding paths resolved relative to the class-set file

Vectors are stored unnormalized on disk; spaces flagged ``normalized`` are
brought to unit L2 norm at load time. Rows that are already unit to float32
precision are left untouched so save/load round-trips stay bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    DimMismatchError,
    DuplicateIdError,
    IoFailureError,
    MalformedMetadataError,
    MissingSpaceError,
    TruncatedFileError,
    ZeroVectorError,
)

XMEB_MAGIC = b"XMEB"
XMEB_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

# Row norms below this cannot be renormalized meaningfully.
ZERO_NORM = 1e-12

# |norm - 1| at or below one float32 ULP means the row is already unit to
# working precision; dividing again would only churn low bits and break the
# bit-exact round-trip guarantee.
_UNIT_SLACK = 2.0 ** -23

_U64_MAX = 2**64 - 1
_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class EmbeddingSpace:
    """A named vector space produced by one encoder role."""

    name: str
    dim: int
    normalized: bool = True

    def __post_init__(self):
        if not self.name:
            raise ValueError("space name must be non-empty")
        if self.dim < 1:
            raise ValueError(f"space dim must be >= 1, got {self.dim}")


@dataclass
class EmbeddingMatrix:
    """Immutable count x dim float32 matrix tied to a space."""

    space: EmbeddingSpace
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DimMismatchError(f"matrix data must be 2-d, got shape {data.shape}")
        if data.shape[1] != self.space.dim:
            raise DimMismatchError(
                f"matrix has dim {data.shape[1]}, space '{self.space.name}' declares {self.space.dim}"
            )
        data.setflags(write=False)
        self.data = data

    @property
    def count(self) -> int:
        return int(self.data.shape[0])


@dataclass
class CorpusRecord:
    """One external image-text pair; ``row_index`` addresses every attached matrix."""

    id: int
    caption: str
    row_index: int
    label: int | None = None


@dataclass
class Corpus:
    records: list[CorpusRecord]
    matrices: dict[str, EmbeddingMatrix]
    _row_by_id: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._row_by_id = {r.id: r.row_index for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def matrix(self, space_name: str) -> EmbeddingMatrix:
        try:
            return self.matrices[space_name]
        except KeyError:
            raise MissingSpaceError(
                f"corpus has no matrix for space '{space_name}' "
                f"(available: {sorted(self.matrices)})"
            ) from None

    def row_of(self, record_id: int) -> int:
        return self._row_by_id[record_id]


@dataclass
class QuerySet:
    """Query embeddings in one or more spaces plus optional class labels."""

    ids: list[int]
    labels: list[int | None]
    matrices: dict[str, EmbeddingMatrix]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def has_labels(self) -> bool:
        return len(self.ids) > 0 and all(lab is not None for lab in self.labels)

    def matrix(self, space_name: str) -> EmbeddingMatrix:
        try:
            return self.matrices[space_name]
        except KeyError:
            raise MissingSpaceError(
                f"query set has no matrix for space '{space_name}' "
                f"(available: {sorted(self.matrices)})"
            ) from None


@dataclass
class ClassSet:
    """Ordered class labels with per-space prompt embedding matrices."""

    labels: list[str]
    embeddings: dict[str, EmbeddingMatrix]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise MalformedMetadataError(
                f"class set needs at least 2 labels, got {len(self.labels)}"
            )
        for name, mat in self.embeddings.items():
            if mat.count != len(self.labels):
                raise CountMismatchError(
                    f"class matrix for space '{name}' has {mat.count} rows, "
                    f"expected {len(self.labels)}"
                )

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def matrix(self, space_name: str) -> EmbeddingMatrix:
        try:
            return self.embeddings[space_name]
        except KeyError:
            raise MissingSpaceError(
                f"class set has no matrix for space '{space_name}' "
                f"(available: {sorted(self.embeddings)})"
            ) from None


def _renormalize(data: np.ndarray, space: EmbeddingSpace, origin: str) -> np.ndarray:
    norms = np.linalg.norm(data.astype(np.float64), axis=1)
    bad = norms < ZERO_NORM
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ZeroVectorError(
            f"{origin}: row {row} has norm {norms[row]:.3g} < {ZERO_NORM} "
            f"under normalized space '{space.name}'"
        )
    off = np.abs(norms - 1.0) > _UNIT_SLACK
    if off.any():
        data = data.copy()
        data[off] = (data[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return data


def load_matrix(path, expected_space: EmbeddingSpace) -> EmbeddingMatrix:
    """Load an XMEB file, validating the header against ``expected_space``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read embedding file {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != XMEB_MAGIC:
        raise BadMagicError(f"{path}: not an XMEB embedding file")
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated at {len(raw)} bytes")
    _, version, dim, count = _HEADER.unpack_from(raw)
    if version != XMEB_VERSION:
        raise BadMagicError(f"{path}: unsupported XMEB version {version}")
    if dim != expected_space.dim:
        raise DimMismatchError(
            f"{path}: header dim {dim} != {expected_space.dim} declared by "
            f"space '{expected_space.name}'"
        )
    expected_bytes = _HEADER.size + count * dim * 4
    if len(raw) != expected_bytes:
        raise TruncatedFileError(
            f"{path}: {len(raw)} bytes on disk, header implies {expected_bytes}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    if expected_space.normalized:
        data = _renormalize(data, expected_space, str(path))
    return EmbeddingMatrix(expected_space, data)


def save_matrix(matrix: EmbeddingMatrix, path) -> None:
    """Write an XMEB file; ``load_matrix`` reproduces the matrix bit-exactly."""
    path = Path(path)
    header = _HEADER.pack(XMEB_MAGIC, XMEB_VERSION, matrix.space.dim, matrix.count)
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailureError(f"cannot write embedding file {path}: {exc}") from exc


def _parse_metadata_line(obj, origin: str, require_caption: bool) -> dict:
    if not isinstance(obj, dict):
        raise MalformedMetadataError(f"{origin}: expected a JSON object")
    entry: dict = {}
    rec_id = obj.get("id")
    if not isinstance(rec_id, int) or isinstance(rec_id, bool) or not 0 <= rec_id <= _U64_MAX:
        raise MalformedMetadataError(f"{origin}: 'id' must be a u64, got {rec_id!r}")
    entry["id"] = rec_id
    caption = obj.get("caption")
    if require_caption:
        if not isinstance(caption, str) or not caption:
            raise MalformedMetadataError(f"{origin}: missing or empty 'caption'")
        entry["caption"] = caption
    elif isinstance(caption, str):
        entry["caption"] = caption
    label = obj.get("label")
    if label is not None:
        if not isinstance(label, int) or isinstance(label, bool) or not 0 <= label <= _U32_MAX:
            raise MalformedMetadataError(f"{origin}: 'label' must be a u32, got {label!r}")
        entry["label"] = label
    return entry


def read_metadata(path, require_caption: bool = True) -> list[dict]:
    """Read a JSONL metadata file into per-record dicts, line order preserved."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read metadata file {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedMetadataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        entries.append(_parse_metadata_line(obj, f"{path}:{lineno}", require_caption))
    return entries


def write_metadata(entries: Sequence[Mapping], path) -> None:
    path = Path(path)
    lines = []
    for entry in entries:
        obj = {"id": entry["id"]}
        if "caption" in entry:
            obj["caption"] = entry["caption"]
        if entry.get("label") is not None:
            obj["label"] = entry["label"]
        lines.append(json.dumps(obj, ensure_ascii=False))
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write metadata file {path}: {exc}") from exc


def _load_joined_matrices(
    matrix_paths: Mapping[str, object],
    spaces: Mapping[str, EmbeddingSpace],
) -> dict[str, EmbeddingMatrix]:
    matrices: dict[str, EmbeddingMatrix] = {}
    for name, mpath in matrix_paths.items():
        if name not in spaces:
            raise MissingSpaceError(f"space '{name}' is not declared")
        matrices[name] = load_matrix(mpath, spaces[name])
    counts = {name: mat.count for name, mat in matrices.items()}
    if len(set(counts.values())) > 1:
        raise CountMismatchError(f"matrices disagree on row count: {counts}")
    return matrices


def load_corpus(
    matrix_paths: Mapping[str, object],
    metadata_path,
    spaces: Mapping[str, EmbeddingSpace],
) -> Corpus:
    """Join per-space matrices with caption metadata by line order."""
    if not matrix_paths:
        raise MissingSpaceError("corpus needs at least one embedding matrix")
    matrices = _load_joined_matrices(matrix_paths, spaces)
    count = next(iter(matrices.values())).count
    entries = read_metadata(metadata_path, require_caption=True)
    if len(entries) != count:
        raise CountMismatchError(
            f"{metadata_path}: {len(entries)} metadata lines, matrices have {count} rows"
        )
    seen: set[int] = set()
    records = []
    for row, entry in enumerate(entries):
        if entry["id"] in seen:
            raise DuplicateIdError(f"{metadata_path}: duplicate record id {entry['id']}")
        seen.add(entry["id"])
        records.append(
            CorpusRecord(
                id=entry["id"],
                caption=entry["caption"],
                row_index=row,
                label=entry.get("label"),
            )
        )
    return Corpus(records=records, matrices=matrices)


def load_queries(
    matrix_paths: Mapping[str, object],
    metadata_path,
    spaces: Mapping[str, EmbeddingSpace],
) -> QuerySet:
    """Load a query/test set: per-space matrices plus ids and optional labels."""
    if not matrix_paths:
        raise MissingSpaceError("query set needs at least one embedding matrix")
    matrices = _load_joined_matrices(matrix_paths, spaces)
    count = next(iter(matrices.values())).count
    entries = read_metadata(metadata_path, require_caption=False)
    if len(entries) != count:
        raise CountMismatchError(
            f"{metadata_path}: {len(entries)} metadata lines, matrices have {count} rows"
        )
    return QuerySet(
        ids=[e["id"] for e in entries],
        labels=[e.get("label") for e in entries],
        matrices=matrices,
    )


def load_classset(path, spaces: Mapping[str, EmbeddingSpace]) -> ClassSet:
    """Load a class-set JSON file; embedding paths resolve relative to it."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailureError(f"cannot read class set {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedMetadataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedMetadataError(f"{path}: expected a JSON object")
    labels = obj.get("labels")
    if not isinstance(labels, list) or not all(isinstance(s, str) and s for s in labels):
        raise MalformedMetadataError(f"{path}: 'labels' must be a list of non-empty strings")
    emb_paths = obj.get("embeddings")
    if not isinstance(emb_paths, dict) or not emb_paths:
        raise MalformedMetadataError(f"{path}: 'embeddings' must map space names to paths")
    embeddings: dict[str, EmbeddingMatrix] = {}
    for name, rel in emb_paths.items():
        if name not in spaces:
            raise MissingSpaceError(f"{path}: space '{name}' is not declared")
        if not isinstance(rel, str):
            raise MalformedMetadataError(f"{path}: embedding path for '{name}' must be a string")
        embeddings[name] = load_matrix(path.parent / rel, spaces[name])
    return ClassSet(labels=list(labels), embeddings=embeddings)


def write_classset(labels: Sequence[str], embedding_paths: Mapping[str, str], path) -> None:
    """Write a class-set JSON file pointing at already-written XMEB matrices."""
    path = Path(path)
    obj = {"labels": list(labels), "embeddings": dict(embedding_paths)}
    try:
        path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write class set {path}: {exc}") from exc
