"""Feature datasets: synthetic generation, container I/O, episodic sampling.

Container layout (little-endian)::

    b"ATAF"  u32 version=1  u32 num_videos  u32 M  u32 C
    per video: i32 label (-1 = unlabeled), u16 id length, id bytes (UTF-8),
               M*C float32 features, row-major

Features are held as float32 in memory so a write/read round trip is exact.
"""

from dataclasses import dataclass, field
import csv
import struct

import numpy as np

from .errors import (
    BadMagic,
    CorruptRecord,
    DimMismatch,
    InsufficientData,
    InvalidSpec,
    ZeroNormVector,
)
from .linalg import NORM_FLOOR, row_norms

MAGIC = b"ATAF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_LABEL = struct.Struct("<i")
_IDLEN = struct.Struct("<H")

FAMILIES = ("order_sensitive", "order_insensitive", "mixed")


@dataclass(frozen=True)
class FeatureSequence:
    data: np.ndarray  # (M, C)
    id: str = ""
    label: int | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[1]


@dataclass
class Dataset:
    features: np.ndarray  # (V, M, C) float32
    labels: np.ndarray  # (V,) int64, -1 for unlabeled
    ids: list
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 3:
            raise DimMismatch(f"features must be (V, M, C), got {self.features.shape}")
        if len(self.labels) != len(self.features) or len(self.ids) != len(self.features):
            raise DimMismatch("features, labels and ids differ in length")
        if not self.class_names:
            n = int(self.labels.max()) + 1 if np.any(self.labels >= 0) else 0
            self.class_names = [f"class_{k}" for k in range(n)]

    def __len__(self):
        return len(self.features)

    def __getitem__(self, i):
        label = int(self.labels[i])
        return FeatureSequence(self.features[i], self.ids[i], None if label < 0 else label)

    @property
    def m(self):
        return self.features.shape[1]

    @property
    def c(self):
        return self.features.shape[2]

    @property
    def num_classes(self):
        return len(self.class_names)

    def class_indices(self):
        """Sample indices per class label, in dataset order."""
        return {k: np.flatnonzero(self.labels == k) for k in range(self.num_classes)}

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], [self.ids[i] for i in idx], list(self.class_names)
        )

    def validate(self):
        """Check row norms and that labels are dense in 0..num_classes-1."""
        if np.any(row_norms(self.features.astype(np.float64)) <= NORM_FLOOR):
            bad = int(np.argmax(np.any(row_norms(self.features) <= NORM_FLOOR, axis=1)))
            raise ZeroNormVector(f"video {bad} ({self.ids[bad]}) has a zero-norm frame")
        present = np.unique(self.labels[self.labels >= 0])
        if present.size and not np.array_equal(present, np.arange(present.size)):
            raise InvalidSpec(f"labels are not dense: {present.tolist()}")
        return self


def equal(a, b):
    """Bitwise equality of two datasets."""
    return (
        a.features.shape == b.features.shape
        and a.features.tobytes() == b.features.tobytes()
        and np.array_equal(a.labels, b.labels)
        and list(a.ids) == list(b.ids)
    )


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "order_insensitive"
    num_classes: int = 10
    m: int = 8
    c: int = 16
    noise_std: float = 0.1
    jitter: int = 1
    samples_per_class: int = 20
    seed: int = 0
    frame_spread: float = 0.5  # per-frame deviation around an order-insensitive class centre

    def validate(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.num_classes < 1 or self.samples_per_class < 1:
            raise InvalidSpec("num_classes and samples_per_class must be >= 1")
        if self.m < 1 or self.c < 1:
            raise InvalidSpec("m and c must be >= 1")
        if self.noise_std < 0 or self.jitter < 0 or self.frame_spread < 0:
            raise InvalidSpec("noise_std, jitter and frame_spread must be >= 0")
        if self._n_sensitive() > 0:
            if self.m < 2:
                raise InvalidSpec("order-sensitive classes need m >= 2")
            if self.c < self.m:
                raise InvalidSpec("order-sensitive classes need c >= m for orthonormal frames")
        return self

    def _n_sensitive(self):
        if self.family == "order_sensitive":
            return self.num_classes
        if self.family == "mixed":
            half = self.num_classes // 2
            return half + (half % 2)  # keep pairs whole
        return 0

    def to_dict(self):
        return dict(self.__dict__)


def _normalize(x):
    norms = row_norms(x)
    # a noise draw cancelling a unit row exactly is practically impossible
    if np.any(norms <= NORM_FLOOR):
        raise ZeroNormVector("generated frame collapsed to zero norm")
    return x / norms[..., None]


def generate(spec):
    """Synthesize a labeled dataset for ``spec``.

    Order-insensitive classes own an independent random set of M unit rows,
    drawn as a class centre plus per-frame deviations of relative size
    ``frame_spread`` (frames of one video look alike). Each sample is that
    set plus Gaussian noise with its rows shuffled, so frame order carries no
    class information.

    Order-sensitive classes come in pairs sharing one orthonormal frame
    set; the even class plays it forward, the odd class reversed. Samples
    get a cyclic shift of up to ``jitter`` frames and Gaussian noise. With
    an odd class count the last class has no reversed partner.

    ``mixed`` makes the first half (rounded up to a whole pair) order
    sensitive and the rest order insensitive.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    m, c, n = spec.m, spec.c, spec.samples_per_class
    n_sens = spec._n_sensitive()

    templates = []
    for k in range(spec.num_classes):
        if k < n_sens:
            if k % 2 == 0:
                q, _ = np.linalg.qr(rng.standard_normal((c, m)))
                base = q.T  # (m, c) orthonormal rows
                templates.append(("sensitive", base))
            else:
                templates.append(("sensitive", templates[k - 1][1][::-1].copy()))
        else:
            centre = rng.standard_normal(c) / np.sqrt(c)
            dev = spec.frame_spread * rng.standard_normal((m, c)) / np.sqrt(c)
            templates.append(("insensitive", _normalize(centre + dev)))

    features = np.empty((spec.num_classes * n, m, c))
    labels = np.repeat(np.arange(spec.num_classes), n)
    ids = []
    for k, (kind, base) in enumerate(templates):
        for s in range(n):
            noise = spec.noise_std * rng.standard_normal((m, c))
            if kind == "sensitive":
                shift = int(rng.integers(-spec.jitter, spec.jitter + 1)) if spec.jitter else 0
                x = np.roll(base, shift, axis=0) + noise
            else:
                x = (base + noise)[rng.permutation(m)]
            features[k * n + s] = _normalize(x)
            ids.append(f"c{k:03d}_s{s:04d}")
    names = [f"{kind}_{k}" for k, (kind, _) in enumerate(templates)]
    return Dataset(features, labels, ids, names)


def split_dataset(ds, holdout_fraction=0.5, seed=0):
    """Split every class into (train, held-out) parts; returns two datasets."""
    rng = np.random.default_rng(seed)
    train, held = [], []
    for k, idx in ds.class_indices().items():
        idx = idx[rng.permutation(len(idx))]
        cut = len(idx) - max(1, int(round(holdout_fraction * len(idx))))
        if cut < 1:
            raise InsufficientData(f"class {k} has too few samples to split")
        train.extend(sorted(idx[:cut]))
        held.extend(sorted(idx[cut:]))
    return ds.subset(train), ds.subset(held)


# ---------------------------------------------------------------- container


def save_features(path, ds):
    feats = np.ascontiguousarray(ds.features, dtype="<f4")
    v, m, c = feats.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, v, m, c))
        for i in range(v):
            ident = str(ds.ids[i]).encode("utf-8")
            if len(ident) > 0xFFFF:
                raise InvalidSpec(f"id of video {i} is too long")
            fh.write(_LABEL.pack(int(ds.labels[i])))
            fh.write(_IDLEN.pack(len(ident)))
            fh.write(ident)
            fh.write(feats[i].tobytes())


def _read_exact(fh, n, index, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptRecord(index, f"truncated {what} ({len(buf)} of {n} bytes)")
    return buf


def load_features(path, labels_csv=None, validate=True):
    """Read a feature container, optionally overriding labels from a CSV sidecar.

    The sidecar has ``id,label`` rows (a header line is allowed). Raises
    BadMagic, DimMismatch or CorruptRecord (with the failing record index).
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagic(f"{path}: not a feature container (magic {head[:4]!r})")
        if len(head) != _HEADER.size:
            raise DimMismatch(f"{path}: truncated header")
        _, version, v, m, c = _HEADER.unpack(head)
        if version != VERSION:
            raise DimMismatch(f"{path}: unsupported container version {version}")
        if m == 0 or c == 0:
            raise DimMismatch(f"{path}: zero frame or channel count (M={m}, C={c})")
        nbytes = m * c * 4
        features = np.empty((v, m, c), dtype=np.float32)
        labels = np.empty(v, dtype=np.int64)
        ids = []
        for i in range(v):
            (labels[i],) = _LABEL.unpack(_read_exact(fh, _LABEL.size, i, "label"))
            (n,) = _IDLEN.unpack(_read_exact(fh, _IDLEN.size, i, "id length"))
            try:
                ids.append(_read_exact(fh, n, i, "id").decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise CorruptRecord(i, "id is not valid UTF-8") from exc
            raw = _read_exact(fh, nbytes, i, "features")
            features[i] = np.frombuffer(raw, dtype="<f4").reshape(m, c)
            if not np.all(np.isfinite(features[i])):
                raise CorruptRecord(i, "non-finite feature values")
        if fh.read(1):
            raise CorruptRecord(v, "trailing bytes after the last record")
    if labels_csv is not None:
        labels = _apply_label_csv(labels_csv, ids, labels)
    ds = Dataset(features, labels, ids)
    return ds.validate() if validate else ds


def _apply_label_csv(path, ids, labels):
    labels = labels.copy()
    pos = {ident: i for i, ident in enumerate(ids)}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "id":
                continue
            if len(row) != 2:
                raise InvalidSpec(f"{path}: expected 'id,label', got {row}")
            if row[0] not in pos:
                raise InvalidSpec(f"{path}: unknown id {row[0]!r}")
            labels[pos[row[0]]] = int(row[1])
    return labels


# ---------------------------------------------------------------- episodes


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 1
    queries_per_class: int = 15
    num_episodes: int = 1000
    seed: int = 0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Episode:
    """One N-way K-shot task; labels are episode-local 0..N-1.

    ``query_labels`` is kept for scoring and never read by inference.
    """

    n_way: int
    k_shot: int
    support: np.ndarray  # (N*K, M, C)
    support_labels: np.ndarray  # (N*K,)
    query: np.ndarray  # (Q, M, C)
    query_labels: np.ndarray | None = None
    classes: np.ndarray | None = None  # dataset labels of the N classes
    support_index: np.ndarray | None = None
    query_index: np.ndarray | None = None

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.float64)
        self.query = np.asarray(self.query, dtype=np.float64).reshape(
            (-1,) + self.support.shape[1:]
        )
        self.support_labels = np.asarray(self.support_labels, dtype=np.int64)
        counts = np.bincount(self.support_labels, minlength=self.n_way)
        if len(counts) != self.n_way or np.any(counts != self.k_shot):
            raise InvalidSpec(f"need exactly {self.k_shot} supports for each of {self.n_way} classes")


def episode_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _eligible(ds, spec):
    need = spec.k_shot + spec.queries_per_class
    per_class = ds.class_indices()
    eligible = [k for k, idx in per_class.items() if len(idx) >= need]
    if spec.n_way < 1 or spec.k_shot < 1 or spec.queries_per_class < 0:
        raise InvalidSpec("n_way and k_shot must be >= 1, queries_per_class >= 0")
    if len(eligible) < spec.n_way:
        raise InsufficientData(
            f"{spec.n_way}-way {spec.k_shot}-shot with {spec.queries_per_class} queries needs "
            f"{spec.n_way} classes with >= {need} samples; only {len(eligible)} qualify"
        )
    return per_class, np.asarray(eligible)


def make_episode(ds, spec, index, _cache=None):
    """Episode ``index`` of ``spec``; reconstructible on its own from (seed, index)."""
    per_class, eligible = _cache or _eligible(ds, spec)
    rng = episode_rng(spec.seed, index)
    classes = rng.choice(eligible, size=spec.n_way, replace=False)
    k, q = spec.k_shot, spec.queries_per_class
    s_idx, q_idx = [], []
    for cls in classes:
        pick = rng.choice(per_class[cls], size=k + q, replace=False)
        s_idx.append(pick[:k])
        q_idx.append(pick[k:])
    s_idx = np.concatenate(s_idx)
    q_idx = np.concatenate(q_idx) if q else np.empty(0, dtype=np.int64)
    return Episode(
        n_way=spec.n_way,
        k_shot=k,
        support=ds.features[s_idx],
        support_labels=np.repeat(np.arange(spec.n_way), k),
        query=ds.features[q_idx] if q else np.empty((0, ds.m, ds.c)),
        query_labels=np.repeat(np.arange(spec.n_way), q),
        classes=classes,
        support_index=s_idx,
        query_index=q_idx,
    )


def sample_episodes(ds, spec, start=0, stop=None):
    """Yield episodes ``start..stop-1`` (default: all ``spec.num_episodes``)."""
    cache = _eligible(ds, spec)
    stop = spec.num_episodes if stop is None else stop
    for i in range(start, stop):
        yield make_episode(ds, spec, i, cache)

