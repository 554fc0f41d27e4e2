"""Dataset acquisition and shaping: blobs, CSV matrices, IDX images, subsampling.

CSV is the universal exchange format (header line, floats at 17 significant
digits). All randomness flows from explicit seeds; labels ride along in the
bundle for evaluation only and are never handed to trainers.
"""

import gzip
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Normalization:
    """Record of the scaling applied at load time: stored = raw * scale."""

    kind: str = "identity"
    scale: float = 1.0

    def invert(self, data):
        return data / self.scale


@dataclass
class DatasetBundle:
    """Feature matrix plus optional evaluation labels and provenance."""

    data: np.ndarray
    labels: np.ndarray | None = None
    provenance: str = "unknown"
    normalization: Normalization = field(default_factory=Normalization)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise FormatError(f"data must be a non-empty 2-D matrix, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise FormatError("data contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.data.shape[0],):
                raise FormatError(
                    f"labels length {self.labels.shape} does not match {self.data.shape[0]} rows"
                )

    @property
    def n(self):
        return self.data.shape[0]


def gen_blobs(k, per_cluster, dim, spread, separation, seed):
    """Isotropic Gaussian clusters with centers at mutual distance >= separation.

    Centers are rejection-sampled from a seeded generator inside a box that
    deterministically expands when placement stalls, so a given seed always
    produces the same bundle.
    """
    if k < 1 or per_cluster < 1 or dim < 1:
        raise ConfigError("k, per_cluster and dim must all be >= 1")
    rng = np.random.default_rng(seed)
    half_width = max(separation, 1.0) * max(2.0, float(k) ** (1.0 / dim))
    centers = []
    stalls = 0
    while len(centers) < k:
        cand = rng.uniform(-half_width, half_width, size=dim)
        if all(np.linalg.norm(cand - c) >= separation for c in centers):
            centers.append(cand)
            stalls = 0
        else:
            stalls += 1
            if stalls >= 1000:
                half_width *= 1.5
                stalls = 0
    centers = np.asarray(centers)
    rows = [centers[j] + spread * rng.standard_normal((per_cluster, dim)) for j in range(k)]
    labels = np.repeat(np.arange(k), per_cluster)
    return DatasetBundle(np.vstack(rows), labels, provenance="blobs")


def save_matrix_csv(path, matrix, header):
    """Write a matrix as headered CSV with 17 significant digits per float."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if len(header) != matrix.shape[1]:
        raise FormatError(f"header has {len(header)} names for {matrix.shape[1]} columns")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def save_labels_csv(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\n")
        for v in labels:
            fh.write(f"{int(v)}\n")


def load_labels_csv(path):
    """Single-column integer label file with a header line."""
    matrix, header = load_matrix_csv(path)
    if len(header) != 1:
        raise FormatError(f"{path}: expected a single label column, got {header}")
    return matrix[:, 0].astype(np.int64)


def load_matrix_csv(path):
    """Parse a rectangular numeric CSV; returns (matrix, header names).

    Raises FormatError with the offending line number on ragged rows,
    non-numeric cells, or a missing header.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line != ""]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = [name.strip() for name in lines[0].split(",")]
    if all(_is_float(tok) for tok in header):
        raise FormatError(f"{path}:1: missing header (first line is numeric)")
    ncols = len(header)
    rows = np.empty((len(lines) - 1, ncols))
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} fields, got {len(fields)}")
        try:
            rows[lineno - 2] = [float(tok) for tok in fields]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    return rows, header


def load_csv(path, has_labels=False):
    """Load a feature CSV into a bundle; optionally split a trailing `label` column."""
    matrix, header = load_matrix_csv(path)
    if has_labels:
        if header[-1] != "label":
            raise FormatError(f"{path}: has_labels=True but last column is {header[-1]!r}")
        labels = matrix[:, -1]
        if not np.all(labels == np.round(labels)):
            raise FormatError(f"{path}: label column contains non-integers")
        return DatasetBundle(matrix[:, :-1], labels.astype(np.int64), provenance="csv")
    return DatasetBundle(matrix, None, provenance="csv")


def _is_float(token):
    try:
        float(token)
        return True
    except ValueError:
        return False


def _open_maybe_gz(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be_u32(buf, offset):
    return int.from_bytes(buf[offset : offset + 4], "big")


def load_idx(images_path, labels_path):
    """Load an IDX image/label file pair (MNIST layout), pixels scaled to [0, 1].

    Images: big-endian magic 0x00000803, count, rows, cols, raw bytes.
    Labels: magic 0x00000801, count, raw bytes. Images are flattened
    row-major to rows*cols features.
    """
    with _open_maybe_gz(images_path) as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"{images_path}: truncated IDX header")
    magic = _read_be_u32(blob, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{images_path}: expected magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}"
        )
    count = _read_be_u32(blob, 4)
    height = _read_be_u32(blob, 8)
    width = _read_be_u32(blob, 12)
    expected = 16 + count * height * width
    if len(blob) < expected:
        raise FormatError(f"{images_path}: truncated payload ({len(blob)} < {expected} bytes)")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=count * height * width, offset=16)
    data = pixels.reshape(count, height * width).astype(np.float64) / 255.0

    with _open_maybe_gz(labels_path) as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError(f"{labels_path}: truncated IDX header")
    magic = _read_be_u32(blob, 0)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(
            f"{labels_path}: expected magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{magic:08x}"
        )
    n_labels = _read_be_u32(blob, 4)
    if n_labels != count:
        raise FormatError(f"label count {n_labels} does not match image count {count}")
    if len(blob) < 8 + n_labels:
        raise FormatError(f"{labels_path}: truncated payload")
    labels = np.frombuffer(blob, dtype=np.uint8, count=n_labels, offset=8).astype(np.int64)
    return DatasetBundle(
        data, labels, provenance="idx", normalization=Normalization("pixel-scale", 1.0 / 255.0)
    )


def imbalance_subsample(bundle, r, seed):
    """Retention-rate subsampling: class k kept with probability r + k/(K-1)*(1-r).

    Class 0 is kept with probability r, the last class with probability 1,
    linearly in between; each sample is an independent seeded Bernoulli draw.
    """
    if bundle.labels is None:
        raise ConfigError("imbalance_subsample requires labels")
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"retention rate must be in (0, 1], got {r}")
    labels = bundle.labels
    k = int(labels.max()) + 1
    if k == 1:
        probs = np.ones(1)
    else:
        probs = r + (np.arange(k) / (k - 1)) * (1.0 - r)
    rng = np.random.default_rng(seed)
    keep = rng.random(bundle.n) < probs[labels]
    if not keep.any():
        raise ConfigError("subsampling removed every sample; use a larger retention rate")
    return DatasetBundle(
        bundle.data[keep],
        labels[keep],
        provenance=bundle.provenance,
        normalization=bundle.normalization,
    )


def load_dataset(spec):
    """Build a bundle from a dataset spec dict (the `dataset` config section).

    kinds: blobs {k, per_cluster, dim, spread, separation, seed},
    csv {path, has_labels}, idx {images, labels},
    external-embedding {path, has_labels}. An optional retention block
    {rate, seed} applies imbalance subsampling after loading.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("dataset spec must be a dict with a 'kind' key")
    kind = spec["kind"]
    if kind == "blobs":
        bundle = gen_blobs(
            k=int(spec["k"]),
            per_cluster=int(spec["per_cluster"]),
            dim=int(spec["dim"]),
            spread=float(spec.get("spread", 1.0)),
            separation=float(spec.get("separation", 10.0)),
            seed=int(spec["seed"]),
        )
    elif kind == "csv":
        bundle = load_csv(spec["path"], has_labels=bool(spec.get("has_labels", False)))
    elif kind == "idx":
        bundle = load_idx(spec["images"], spec["labels"])
    elif kind == "external-embedding":
        bundle = load_csv(spec["path"], has_labels=bool(spec.get("has_labels", False)))
        bundle.provenance = "external-embedding"
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    retention = spec.get("retention")
    if retention:
        bundle = imbalance_subsample(
            bundle, float(retention["rate"]), int(retention.get("seed", 0))
        )
    return bundle
