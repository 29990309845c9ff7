"""Dataset generation, ingestion, and heterogeneous client partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, TooFewExamples, TruncatedFile
from .streams import DOMAIN_DATA, substream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # n x f, float64
    labels: np.ndarray  # n, int64
    n_classes: int

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ClientState:
    client_id: int
    features: np.ndarray
    labels: np.ndarray

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]


def make_blobs_task(
    n_train: int,
    n_test: int,
    n_features: int,
    n_classes: int,
    seed: int,
    center_spread: float = 3.0,
    noise: float = 1.0,
) -> tuple[Dataset, Dataset]:
    """Gaussian class clusters: an easy, fully seeded multiclass task."""
    rng = substream(seed, DOMAIN_DATA)
    centers = center_spread * rng.standard_normal((n_classes, n_features))

    def draw(n: int) -> Dataset:
        labels = rng.integers(0, n_classes, size=n)
        feats = centers[labels] + noise * rng.standard_normal((n, n_features))
        return Dataset(feats, labels.astype(np.int64), n_classes)

    return draw(n_train), draw(n_test)


def _read_idx_header(data: bytes, path, magic_expected: int, n_dims: int):
    need = 4 * (1 + n_dims)
    if len(data) < need:
        raise TruncatedFile(f"{path}: shorter than its {need}-byte header")
    fields = struct.unpack(f">{1 + n_dims}I", data[:need])
    if fields[0] != magic_expected:
        raise BadMagic(f"{path}: magic 0x{fields[0]:08x}, expected 0x{magic_expected:08x}")
    return fields[1:], data[need:]


def load_idx_subset(images_path, labels_path, limit: int, seed: int) -> Dataset:
    """Read big-endian IDX image/label files, normalize, and subsample.

    Pixels are scaled to [0, 1]; `limit` examples are drawn uniformly without
    replacement (all of them when limit >= count).
    """
    if limit < 1:
        raise CountMismatch(f"limit must be >= 1, got {limit}")
    img_data = Path(images_path).read_bytes()
    lbl_data = Path(labels_path).read_bytes()

    (n_img, rows, cols), img_payload = _read_idx_header(
        img_data, images_path, IDX_IMAGES_MAGIC, 3
    )
    (n_lbl,), lbl_payload = _read_idx_header(lbl_data, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lbl:
        raise CountMismatch(f"{n_img} images but {n_lbl} labels")
    if n_img == 0:
        raise CountMismatch("files declare zero examples")
    if len(img_payload) < n_img * rows * cols:
        raise TruncatedFile(f"{images_path}: pixel payload truncated")
    if len(lbl_payload) < n_lbl:
        raise TruncatedFile(f"{labels_path}: label payload truncated")

    pixels = np.frombuffer(img_payload, dtype=np.uint8, count=n_img * rows * cols)
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_payload, dtype=np.uint8, count=n_lbl).astype(np.int64)

    if limit < n_img:
        rng = substream(seed, DOMAIN_DATA, 1)
        keep = np.sort(rng.choice(n_img, size=limit, replace=False))
        features = features[keep]
        labels = labels[keep]
    n_classes = int(labels.max()) + 1
    return Dataset(features, labels, n_classes)


def _apportion(total: int, fractions: np.ndarray) -> np.ndarray:
    """Integer counts summing to `total`, by largest remainder."""
    raw = fractions * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_dirichlet(
    dataset: Dataset, n_clients: int, alpha_d: float, seed: int
) -> list[ClientState]:
    """Split a dataset across clients with Dirichlet-skewed class mixtures.

    Each client draws class proportions q ~ Dir(alpha_d * prior) and receives
    an (almost) equal share of the examples, matching q as closely as integer
    counts and remaining per-class stock allow. Every example is assigned
    exactly once.
    """
    if alpha_d <= 0:
        raise ValueError("alpha_d must be > 0")
    n = len(dataset)
    if n < n_clients or n_clients < 1:
        raise TooFewExamples(f"{n} examples cannot cover {n_clients} clients")

    rng = substream(seed, DOMAIN_DATA, 2)
    classes = np.arange(dataset.n_classes)
    pools = {}
    for c in classes:
        idx = np.flatnonzero(dataset.labels == c)
        rng.shuffle(idx)
        pools[c] = list(idx)
    prior = np.array([len(pools[c]) / n for c in classes])

    base = n // n_clients
    sizes = np.full(n_clients, base)
    sizes[: n % n_clients] += 1

    states = []
    for cid in range(n_clients):
        q = rng.dirichlet(alpha_d * prior)
        want = _apportion(sizes[cid], q)
        taken: list[int] = []
        for c in classes:
            grab = min(want[c], len(pools[c]))
            if grab:
                taken.extend(pools[c][:grab])
                del pools[c][:grab]
        # preferred classes ran dry: top up from whatever has the most left
        while len(taken) < sizes[cid]:
            c = max(classes, key=lambda cc: len(pools[cc]))
            taken.append(pools[c].pop(0))
        taken_arr = np.array(sorted(taken), dtype=np.intp)
        states.append(
            ClientState(cid, dataset.features[taken_arr], dataset.labels[taken_arr])
        )
    return states
