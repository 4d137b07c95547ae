"""Paired multi-modal embedding datasets, the EMBD on-disk format, and a
synthetic correlated-mixture corpus generator for desk-scale experiments.

EMBD file layout (all integers little-endian):

    bytes 0..3    magic "EMBD"
    u32           format version (currently 1)
    u32           embedding dimension D
    u64           row count N
    u8            dtype code (0 = float32, 1 = float64)
    N*D values    row-major embedding matrix
    N u32         class labels

The layout is bit-exact: writing the same set twice yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    NonFiniteDataError,
    NotFoundError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)

MAGIC = b"EMBD"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<IIQB")  # version, dim, count, dtype code
_DTYPE_BY_CODE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_BY_NAME = {"float32": 0, "float64": 1}

# Modality names used by the corpus generator, in declaration order.
_MODALITY_NAMES = ("audio", "vision", "text", "depth", "thermal", "imu")


@dataclass
class EmbeddingSet:
    """Embeddings of one modality: an (N, D) float matrix plus one integer
    label per row."""

    modality_name: str
    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValidationError(
                f"embedding matrix must be 2-D and non-empty, got shape {self.data.shape}"
            )
        if self.data.dtype != np.float64:
            self.data = self.data.astype(np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteDataError(
                f"modality {self.modality_name!r} contains non-finite values"
            )
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.data.shape[0],):
            raise ValidationError(
                f"labels length {self.labels.shape} does not match row count {self.data.shape[0]}"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValidationError("labels must be non-negative")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class PairedMultiModalDataset:
    """Row-aligned embedding sets: row i of every modality is the same
    underlying sample and shares label y_i."""

    modalities: list[EmbeddingSet]
    num_classes: int

    def __post_init__(self):
        if not self.modalities:
            raise ValidationError("dataset needs at least one modality")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")
        first = self.modalities[0]
        for m in self.modalities[1:]:
            if m.count != first.count:
                raise ValidationError(
                    f"modality {m.modality_name!r} has {m.count} rows, expected {first.count}"
                )
            if m.dim != first.dim:
                raise ValidationError(
                    f"modality {m.modality_name!r} has dim {m.dim}, expected {first.dim}"
                )
            if not np.array_equal(m.labels, first.labels):
                raise ValidationError(
                    f"modality {m.modality_name!r} labels differ from {first.modality_name!r};"
                    " rows are not paired"
                )
        if first.labels.max() >= self.num_classes:
            raise ValidationError(
                f"label {first.labels.max()} out of range for {self.num_classes} classes"
            )
        present = np.unique(first.labels)
        if present.size != self.num_classes:
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            raise ValidationError(f"classes with no samples: {missing}")

    @property
    def labels(self) -> np.ndarray:
        return self.modalities[0].labels

    @property
    def count(self) -> int:
        return self.modalities[0].count

    @property
    def dim(self) -> int:
        return self.modalities[0].dim

    @property
    def modality_names(self) -> list[str]:
        return [m.modality_name for m in self.modalities]

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def matrices(self) -> list[np.ndarray]:
        return [m.data for m in self.modalities]


@dataclass
class SyntheticSet:
    """Learnable per-class synthetic embeddings, one matrix per modality.

    Labels are fixed at construction and never change; matrices are the only
    mutable state in the package (single writer: the condenser loop).
    """

    modalities: list[np.ndarray]
    labels: np.ndarray
    dpc: int
    num_classes: int
    modality_names: list[str]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.modalities = [np.array(m, dtype=np.float64) for m in self.modalities]
        self.validate()

    def validate(self):
        m_total = self.num_classes * self.dpc
        if self.labels.shape != (m_total,):
            raise ValidationError(
                f"expected {m_total} labels (= classes x dpc), got {self.labels.shape}"
            )
        counts = np.bincount(self.labels, minlength=self.num_classes)
        if not np.all(counts == self.dpc):
            raise ValidationError("labels must contain exactly dpc entries per class")
        for name, mat in zip(self.modality_names, self.modalities):
            if mat.shape[0] != m_total:
                raise ValidationError(
                    f"modality {name!r} has {mat.shape[0]} rows, expected {m_total}"
                )
            if not np.all(np.isfinite(mat)):
                raise NonFiniteDataError(f"synthetic modality {name!r} is non-finite")

    @property
    def count(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.modalities[0].shape[1]

    def class_rows(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def as_dataset(self) -> PairedMultiModalDataset:
        sets = [
            EmbeddingSet(name, mat.copy(), self.labels.copy())
            for name, mat in zip(self.modality_names, self.modalities)
        ]
        return PairedMultiModalDataset(sets, self.num_classes)


@dataclass
class DatasetManifest:
    """JSON sidecar describing a set of EMBD files that form one dataset."""

    num_classes: int
    class_names: list[str]
    dim: int
    count: int
    dtype: str
    seed: int | None
    modalities: list[dict]  # [{"name": ..., "path": ...}] in modality order
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "num_classes": self.num_classes,
            "class_names": self.class_names,
            "dim": self.dim,
            "count": self.count,
            "dtype": self.dtype,
            "seed": self.seed,
            "modalities": self.modalities,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            return cls(
                num_classes=int(d["num_classes"]),
                class_names=list(d["class_names"]),
                dim=int(d["dim"]),
                count=int(d["count"]),
                dtype=str(d["dtype"]),
                seed=d.get("seed"),
                modalities=list(d["modalities"]),
                format_version=int(d["format_version"]),
            )
        except KeyError as e:
            raise ValidationError(f"manifest missing field {e}") from e


def write_embedding_file(es: EmbeddingSet, path, dtype: str = "float64") -> None:
    """Serialize one modality to the EMBD layout. Rejects non-finite data
    before touching the file; identical input yields identical bytes."""
    if dtype not in _CODE_BY_NAME:
        raise ValidationError(f"unsupported dtype {dtype!r}")
    if not np.all(np.isfinite(es.data)):
        raise NonFiniteDataError("refusing to write non-finite embeddings")
    if es.labels.size and es.labels.max() >= 2**32:
        raise ValidationError("labels do not fit in u32")
    code = _CODE_BY_NAME[dtype]
    values = np.ascontiguousarray(es.data, dtype=_DTYPE_BY_CODE[code])
    blob = b"".join(
        (
            MAGIC,
            _HEADER.pack(FORMAT_VERSION, es.dim, es.count, code),
            values.tobytes(),
            np.ascontiguousarray(es.labels, dtype="<u4").tobytes(),
        )
    )
    Path(path).write_bytes(blob)


def read_embedding_file(path, modality_name: str | None = None) -> EmbeddingSet:
    """Inverse of :func:`write_embedding_file`. Values are upcast to float64
    for internal math; the storage dtype is recorded only in manifests."""
    p = Path(path)
    if not p.exists():
        raise NotFoundError(f"no such file: {p}")
    blob = p.read_bytes()
    if len(blob) < len(MAGIC):
        raise TruncatedFileError(f"{p}: shorter than the magic prefix")
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{p}: bad magic {blob[:4]!r}")
    header_end = len(MAGIC) + _HEADER.size
    if len(blob) < header_end:
        raise TruncatedFileError(f"{p}: truncated header")
    version, dim, count, code = _HEADER.unpack(blob[len(MAGIC) : header_end])
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{p}: unsupported version {version}")
    if code not in _DTYPE_BY_CODE:
        raise UnsupportedVersionError(f"{p}: unknown dtype code {code}")
    value_dtype = _DTYPE_BY_CODE[code]
    payload = count * dim * value_dtype.itemsize
    expected = header_end + payload + count * 4
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{p}: expected {expected} bytes, file has {len(blob)}"
        )
    if len(blob) > expected:
        raise TruncatedFileError(f"{p}: {len(blob) - expected} trailing bytes")
    values = np.frombuffer(blob, dtype=value_dtype, count=count * dim, offset=header_end)
    data = values.reshape(count, dim).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError(f"{p}: payload contains non-finite values")
    labels = np.frombuffer(blob, dtype="<u4", count=count, offset=header_end + payload)
    name = modality_name if modality_name is not None else p.stem
    return EmbeddingSet(name, data, labels.astype(np.int64))


def storage_dtype_name(code_or_name) -> str:
    if code_or_name in _CODE_BY_NAME:
        return code_or_name
    raise ValidationError(f"unsupported dtype {code_or_name!r}")


def save_dataset(
    dataset: PairedMultiModalDataset,
    out_dir,
    dtype: str = "float64",
    seed: int | None = None,
    class_names: list[str] | None = None,
    manifest_name: str = "manifest.json",
) -> Path:
    """Write one EMBD file per modality plus a JSON manifest; returns the
    manifest path. File paths in the manifest are relative to its directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if class_names is None:
        class_names = [f"class{c:02d}" for c in range(dataset.num_classes)]
    if len(class_names) != dataset.num_classes:
        raise ValidationError("class_names length must equal num_classes")
    entries = []
    for m in dataset.modalities:
        fname = f"{m.modality_name}.embd"
        write_embedding_file(m, out / fname, dtype=dtype)
        entries.append({"name": m.modality_name, "path": fname})
    manifest = DatasetManifest(
        num_classes=dataset.num_classes,
        class_names=class_names,
        dim=dataset.dim,
        count=dataset.count,
        dtype=storage_dtype_name(dtype),
        seed=seed,
        modalities=entries,
    )
    manifest_path = out / manifest_name
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return manifest_path


def normalize_rows(dataset: PairedMultiModalDataset) -> PairedMultiModalDataset:
    """L2-normalize every embedding row of every modality. Zero rows are left
    unchanged (there is no direction to keep)."""
    sets = []
    for m in dataset.modalities:
        norms = np.linalg.norm(m.data, axis=1, keepdims=True)
        scaled = m.data / np.where(norms > 0, norms, 1.0)
        sets.append(EmbeddingSet(m.modality_name, scaled, m.labels.copy()))
    return PairedMultiModalDataset(sets, dataset.num_classes)


def load_dataset(manifest_path, normalize: bool = False) -> PairedMultiModalDataset:
    """Load a dataset from its manifest, checking that every referenced file
    exists and that EMBD headers match the manifest exactly.

    Rows are stored and returned as-is; pass normalize=True to L2-normalize
    them on load (off by default, matching the on-disk values).
    """
    mp = Path(manifest_path)
    if not mp.exists():
        raise NotFoundError(f"no such manifest: {mp}")
    try:
        manifest = DatasetManifest.from_dict(json.loads(mp.read_text()))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{mp}: not valid JSON: {e}") from e
    if manifest.format_version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{mp}: unsupported manifest version {manifest.format_version}"
        )
    sets = []
    for entry in manifest.modalities:
        fpath = mp.parent / entry["path"]
        es = read_embedding_file(fpath, modality_name=entry["name"])
        if es.dim != manifest.dim or es.count != manifest.count:
            raise ValidationError(
                f"{fpath}: header (dim={es.dim}, count={es.count}) does not match "
                f"manifest (dim={manifest.dim}, count={manifest.count})"
            )
        sets.append(es)
    dataset = PairedMultiModalDataset(sets, manifest.num_classes)
    return normalize_rows(dataset) if normalize else dataset


def _orthogonal_matrix(rng: np.random.Generator, dim: int) -> np.ndarray:
    # QR with a sign convention so the factorization is canonical.
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def generate_corpus(
    num_classes: int,
    per_class: int,
    dim: int,
    modality_count: int = 2,
    class_separation: float = 2.0,
    cross_modal_coupling: float = 0.8,
    seed: int = 0,
) -> PairedMultiModalDataset:
    """Sample a paired multi-modal corpus of Gaussian class clusters.

    Every sample draws a shared latent h; modality m of class c is

        sep * (g_c + 0.5 * g_{m,c})  +  coupling * (P h)  +  (1 - coupling) * eps

    with g_c a class core shared across modalities, g_{m,c} a modality-specific
    offset, P one orthogonal projection shared by all modalities, and eps
    independent unit noise. Same-class embeddings of different modalities are
    therefore close in the common space, and rows of the same sample are
    statistically correlated whenever coupling > 0. Deterministic given seed.
    """
    if num_classes < 1 or per_class < 1 or dim < 1 or modality_count < 1:
        raise ValidationError("all corpus sizes must be positive")
    if not 0.0 <= cross_modal_coupling <= 1.0:
        raise ValidationError("cross_modal_coupling must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    class_cores = rng.standard_normal((num_classes, dim))
    offsets = rng.standard_normal((modality_count, num_classes, dim))
    projection = _orthogonal_matrix(rng, dim)
    latents = rng.standard_normal((num_classes, per_class, dim))
    noise = rng.standard_normal((modality_count, num_classes, per_class, dim))

    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    names = [
        _MODALITY_NAMES[m] if m < len(_MODALITY_NAMES) else f"mod{m}"
        for m in range(modality_count)
    ]
    shared = latents @ projection.T  # (C, per_class, dim)
    sets = []
    for m in range(modality_count):
        means = class_separation * (class_cores + 0.5 * offsets[m])
        rows = (
            means[:, None, :]
            + cross_modal_coupling * shared
            + (1.0 - cross_modal_coupling) * noise[m]
        )
        sets.append(EmbeddingSet(names[m], rows.reshape(-1, dim), labels))
    return PairedMultiModalDataset(sets, num_classes)


def split_corpus(
    dataset: PairedMultiModalDataset, per_class_train: int
) -> tuple[PairedMultiModalDataset, PairedMultiModalDataset]:
    """Partition each class's rows into the first per_class_train (train) and
    the rest (test). Rows are i.i.d. within a class, so the cut is unbiased."""
    train_idx, test_idx = [], []
    for c in range(dataset.num_classes):
        idx = dataset.class_indices(c)
        if len(idx) <= per_class_train:
            raise ValidationError(
                f"class {c} has {len(idx)} rows, cannot hold out a test split"
            )
        train_idx.append(idx[:per_class_train])
        test_idx.append(idx[per_class_train:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    def take(indices):
        sets = [
            EmbeddingSet(m.modality_name, m.data[indices], m.labels[indices])
            for m in dataset.modalities
        ]
        return PairedMultiModalDataset(sets, dataset.num_classes)

    return take(train_idx), take(test_idx)
