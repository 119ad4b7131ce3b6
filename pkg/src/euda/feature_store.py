"""Feature dataset container, on-disk codecs, synthetic data, and batching.

Datasets hold precomputed embedding vectors, one row per sample. Feature
values live on the float32 grid (the on-disk dtype) but all in-memory
arithmetic runs in float64 so downstream gradient checks stay tight.

Binary layout (little-endian), magic "EUDF":

    magic 4s | version u16 | flags u16 (bit0 = labels present)
    | n u64 | d u64 | num_classes u32 (0 when unlabeled)
    | tag_len u16 | tag UTF-8 bytes
    | features n*d float32 row-major | labels n*u32 (iff bit0)

CSV layout: header ``f0,...,f{d-1}[,label]``, one sample per row.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConsistencyError, ContractError, DataError, FormatError

EUDF_MAGIC = b"EUDF"
EUDF_VERSION = 1

_HEADER = struct.Struct("<4sHHQQIH")  # magic, version, flags, n, d, C, tag_len
_FLAG_LABELS = 0x1


def _as_f32_grid(values: np.ndarray) -> np.ndarray:
    """Round onto the float32 grid, keep float64 for arithmetic."""
    return np.ascontiguousarray(values, dtype=np.float64).astype(np.float32).astype(np.float64)


class DomainDataset:
    """Immutable n x d feature matrix with optional integer labels.

    The label accessor is split in two on purpose. ``labels`` is the
    training-visible accessor and counts every read in ``label_reads``;
    ``eval_labels()`` is the evaluation-path accessor and bypasses the
    counter. Training code must only ever touch ``labels``, which makes
    the no-target-labels contract checkable: after a training run the
    target dataset's ``label_reads`` must still be zero.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: Optional[np.ndarray] = None,
        num_classes: Optional[int] = None,
        domain_tag: str = "",
    ):
        feats = _as_f32_grid(np.atleast_2d(np.asarray(features)))
        if feats.ndim != 2:
            raise ContractError(f"features must be a 2-D matrix, got ndim={feats.ndim}")
        n, d = feats.shape
        if n < 1 or d < 1:
            raise ContractError(f"dataset needs n >= 1 and d >= 1, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain non-finite entries")
        feats.flags.writeable = False

        lab: Optional[np.ndarray] = None
        if labels is not None:
            lab = np.asarray(labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != n:
                raise ConsistencyError(f"{lab.shape[0]} labels for {n} rows")
            if num_classes is None:
                raise ConsistencyError("labeled dataset requires num_classes")
            if num_classes < 1:
                raise ConsistencyError(f"num_classes must be positive, got {num_classes}")
            if lab.min() < 0 or lab.max() >= num_classes:
                raise ConsistencyError(
                    f"labels must lie in [0, {num_classes}), got range "
                    f"[{lab.min()}, {lab.max()}]"
                )
            lab.flags.writeable = False
        elif num_classes is not None:
            raise ConsistencyError("num_classes given without labels")

        self.features = feats
        self._labels = lab
        self.num_classes = int(num_classes) if num_classes is not None else None
        self.domain_tag = str(domain_tag)
        self.label_reads = 0

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self._labels is not None

    @property
    def labels(self) -> Optional[np.ndarray]:
        """Training-visible label accessor; every read is counted."""
        self.label_reads += 1
        return self._labels

    def eval_labels(self) -> np.ndarray:
        """Evaluation-path label accessor, excluded from the read gate."""
        if self._labels is None:
            raise ContractError(f"dataset '{self.domain_tag}' has no labels")
        return self._labels


@dataclass
class BatchPair:
    """One aligned source/target batch as consumed by a training step."""

    source_features: np.ndarray
    source_labels: np.ndarray
    target_features: np.ndarray

    def __post_init__(self):
        bs = self.source_features.shape[0]
        bt = self.target_features.shape[0]
        if bs < 2 or bt < 2:
            raise ContractError(f"batch sides must have >= 2 rows, got {bs}/{bt}")
        if self.source_features.shape[1] != self.target_features.shape[1]:
            raise ContractError("source/target feature dims differ within a batch")
        if self.source_labels.shape[0] != bs:
            raise ContractError("source labels do not match source batch size")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic shifted-Gaussians harness.

    Class means sit on distinct axes (pattern ``e_{k mod d}``) scaled so any
    two class means are ``class_radius`` apart; all target means are
    displaced by the same random unit vector scaled by ``shift_magnitude``.
    Samples are isotropic Gaussians around the means.
    """

    num_classes: int
    feature_dim: int
    per_class: int
    class_radius: float
    shift_magnitude: float
    noise_std: float

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ContractError(f"num_classes >= 2 required, got {self.num_classes}")
        if self.feature_dim < 2:
            raise ContractError(f"feature_dim >= 2 required, got {self.feature_dim}")
        if self.per_class < 4:
            raise ContractError(f"per_class >= 4 required, got {self.per_class}")
        if not self.class_radius > 0:
            raise ContractError("class_radius must be > 0")
        if not self.noise_std > 0:
            raise ContractError("noise_std must be > 0")
        if self.shift_magnitude < 0:
            raise ContractError("shift_magnitude must be >= 0")


def save_dataset(ds: DomainDataset, path, format: str = "binary") -> None:
    """Write ``ds`` to ``path``. Binary round-trips bitwise, CSV exactly
    for float32-grid values (9 significant digits)."""
    if format == "binary":
        payload = _encode_binary(ds)
        with open(path, "wb") as fh:
            fh.write(payload)
    elif format == "csv":
        text = _encode_csv(ds)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        raise ContractError(f"unknown format '{format}'")


def load_dataset(
    path,
    format: str = "binary",
    num_classes: Optional[int] = None,
    domain_tag: Optional[str] = None,
) -> DomainDataset:
    """Read a dataset written by :func:`save_dataset`.

    CSV files carry neither a class count nor a tag: ``num_classes``
    defaults to ``max(label) + 1`` and ``domain_tag`` to the file stem,
    unless overridden here. The overrides are ignored for binary files,
    which store both.
    """
    if format == "binary":
        with open(path, "rb") as fh:
            return _decode_binary(fh.read())
    if format == "csv":
        with open(path, "r", newline="") as fh:
            text = fh.read()
        if domain_tag is None:
            import os

            domain_tag = os.path.splitext(os.path.basename(str(path)))[0]
        return _decode_csv(text, num_classes=num_classes, domain_tag=domain_tag)
    raise ContractError(f"unknown format '{format}'")


def format_for_path(path) -> str:
    """Pick the codec from the file extension (.csv -> csv, else binary)."""
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _encode_binary(ds: DomainDataset) -> bytes:
    tag = ds.domain_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ContractError("domain_tag longer than 65535 UTF-8 bytes")
    flags = _FLAG_LABELS if ds.has_labels else 0
    header = _HEADER.pack(
        EUDF_MAGIC,
        EUDF_VERSION,
        flags,
        ds.n,
        ds.d,
        ds.num_classes or 0,
        len(tag),
    )
    out = io.BytesIO()
    out.write(header)
    out.write(tag)
    out.write(ds.features.astype("<f4").tobytes(order="C"))
    if ds.has_labels:
        out.write(ds.eval_labels().astype("<u4").tobytes())
    return out.getvalue()


def _decode_binary(blob: bytes) -> DomainDataset:
    if len(blob) < _HEADER.size:
        raise FormatError(f"file too short for header ({len(blob)} bytes)")
    magic, version, flags, n, d, num_classes, tag_len = _HEADER.unpack_from(blob, 0)
    if magic != EUDF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {EUDF_MAGIC!r}")
    if version != EUDF_VERSION:
        raise FormatError(f"unsupported version {version}, expected {EUDF_VERSION}")
    offset = _HEADER.size
    if len(blob) < offset + tag_len:
        raise FormatError("file truncated inside domain tag")
    tag = blob[offset : offset + tag_len].decode("utf-8")
    offset += tag_len

    has_labels = bool(flags & _FLAG_LABELS)
    feat_bytes = n * d * 4
    label_bytes = n * 4 if has_labels else 0
    expected = offset + feat_bytes + label_bytes
    if len(blob) != expected:
        raise FormatError(f"file is {len(blob)} bytes, layout requires {expected}")

    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    if not np.all(np.isfinite(feats)):
        raise DataError("features contain non-finite entries")
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<u4", count=n, offset=offset + feat_bytes)
        labels = labels.astype(np.int64)
        if num_classes == 0:
            raise ConsistencyError("labels present but num_classes is 0")
        if labels.max() >= num_classes:
            raise ConsistencyError(
                f"label {labels.max()} >= declared num_classes {num_classes}"
            )
    return DomainDataset(
        feats,
        labels=labels,
        num_classes=num_classes if has_labels else None,
        domain_tag=tag,
    )


def _encode_csv(ds: DomainDataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = [f"f{j}" for j in range(ds.d)]
    if ds.has_labels:
        header.append("label")
    writer.writerow(header)
    labels = ds.eval_labels() if ds.has_labels else None
    for i in range(ds.n):
        # 9 significant digits round-trip any float32 value exactly.
        row = [f"{v:.9g}" for v in ds.features[i]]
        if labels is not None:
            row.append(str(int(labels[i])))
        writer.writerow(row)
    return out.getvalue()


def _decode_csv(
    text: str, num_classes: Optional[int], domain_tag: str
) -> DomainDataset:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows:
        raise FormatError("empty CSV file")
    header = rows[0]
    has_labels = bool(header) and header[-1] == "label"
    d = len(header) - (1 if has_labels else 0)
    if d < 1 or header[:d] != [f"f{j}" for j in range(d)]:
        raise FormatError(f"unexpected CSV header {header!r}")

    feats = np.empty((len(rows) - 1, d), dtype=np.float64)
    labels = np.empty(len(rows) - 1, dtype=np.int64) if has_labels else None
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise FormatError(f"row {i + 1} has {len(row)} fields, expected {len(header)}")
        try:
            feats[i] = [float(v) for v in row[:d]]
            if labels is not None:
                labels[i] = int(row[d])
        except ValueError as exc:
            raise FormatError(f"row {i + 1}: {exc}") from exc
    if not np.all(np.isfinite(feats)):
        raise DataError("features contain non-finite entries")
    if labels is not None:
        if num_classes is None:
            num_classes = int(labels.max()) + 1
        elif labels.max() >= num_classes:
            raise ConsistencyError(
                f"label {labels.max()} >= declared num_classes {num_classes}"
            )
    return DomainDataset(
        feats,
        labels=labels,
        num_classes=num_classes if has_labels else None,
        domain_tag=domain_tag,
    )


def synth_shifted_gaussians(
    spec: SynthSpec, seed: int
) -> tuple[DomainDataset, DomainDataset]:
    """Draw a labeled source/target pair with a shared class-mean displacement.

    Both datasets carry labels; target labels exist solely for evaluation.
    Output is a pure function of (spec, seed).
    """
    spec.validate()
    rng = np.random.default_rng(seed)

    shift_dir = rng.standard_normal(spec.feature_dim)
    shift_dir /= np.linalg.norm(shift_dir)
    shift = spec.shift_magnitude * shift_dir

    # distinct axes scaled so the distance between any two class means is
    # class_radius (for C <= d)
    means = np.zeros((spec.num_classes, spec.feature_dim))
    for k in range(spec.num_classes):
        means[k, k % spec.feature_dim] = spec.class_radius / np.sqrt(2.0)

    def draw(offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        feats = np.empty((spec.num_classes * spec.per_class, spec.feature_dim))
        labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
        for k in range(spec.num_classes):
            block = slice(k * spec.per_class, (k + 1) * spec.per_class)
            noise = rng.standard_normal((spec.per_class, spec.feature_dim))
            feats[block] = means[k] + offset + spec.noise_std * noise
        return feats, labels

    src_feats, src_labels = draw(np.zeros(spec.feature_dim))
    tgt_feats, tgt_labels = draw(shift)
    source = DomainDataset(
        src_feats, src_labels, num_classes=spec.num_classes, domain_tag="synth-source"
    )
    target = DomainDataset(
        tgt_feats, tgt_labels, num_classes=spec.num_classes, domain_tag="synth-target"
    )
    return source, target


def _index_stream(n: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """Concatenate fresh shuffles of range(n) until ``length`` indices exist."""
    chunks = []
    total = 0
    while total < length:
        perm = rng.permutation(n)
        chunks.append(perm)
        total += n
    return np.concatenate(chunks)[:length]


def paired_batches(
    source: DomainDataset,
    target: DomainDataset,
    batch_size: int,
    seed: int,
    epoch: int,
) -> list[BatchPair]:
    """Aligned source/target batches for one epoch, in emission order.

    Both domains are reshuffled per (seed, epoch); the shorter domain cycles
    with a fresh shuffle at each wrap until the longer one is exhausted. The
    final short pair is kept only when both sides still have >= 2 rows.
    """
    if not source.has_labels:
        raise ContractError("source dataset must be labeled")
    if source.d != target.d:
        raise ContractError(f"feature dims differ: source {source.d}, target {target.d}")
    if batch_size < 2:
        raise ContractError(f"batch_size >= 2 required, got {batch_size}")

    stream_len = max(source.n, target.n)
    rng_s = np.random.default_rng([seed, epoch, 0])
    rng_t = np.random.default_rng([seed, epoch, 1])
    idx_s = _index_stream(source.n, stream_len, rng_s)
    idx_t = _index_stream(target.n, stream_len, rng_t)

    src_labels = source.labels
    pairs = []
    for start in range(0, stream_len, batch_size):
        stop = min(start + batch_size, stream_len)
        if stop - start < 2:
            break
        sel_s = idx_s[start:stop]
        sel_t = idx_t[start:stop]
        pairs.append(
            BatchPair(
                source_features=source.features[sel_s],
                source_labels=src_labels[sel_s],
                target_features=target.features[sel_t],
            )
        )
    return pairs
