"""Observation vectorization with a fixed, versioned column layout.

Layout: [max_down_mbps, max_up_mbps, low_latency, state one-hot x 56,
centroid_lat, centroid_lon, claim_pct, ookla_dev_per_loc, mlab_test_count,
methodology embedding x D]. Missing test-stat features are marked NaN so
the learner's sparsity routing can distinguish "no tests observed" from an
observed zero density.
"""

from __future__ import annotations

import csv
import hashlib
import re
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .attribution import CellTestStats
from .geo import CellId, GridConfig, cell_centroid
from .ingest import AvailabilityClaim, MalformedRow, MapSnapshot, Technology, open_text
from .labeling import Label, LabeledObservation

US_STATES = (
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "DC", "FL",
    "GA", "HI", "ID", "IL", "IN", "IA", "KS", "KY", "LA", "ME",
    "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH",
    "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA", "RI",
    "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI",
    "WY", "AS", "GU", "MP", "PR", "VI",
)
_STATE_INDEX = {s: i for i, s in enumerate(US_STATES)}

DEFAULT_EMBEDDING_DIM = 384

SCALAR_HEAD = ["max_down_mbps", "max_up_mbps", "low_latency"]
SCALAR_TAIL = ["centroid_lat", "centroid_lon", "claim_pct", "ookla_dev_per_loc", "mlab_test_count"]


class FeatureError(ValueError):
    pass


class EmptyClaimSet(FeatureError):
    pass


class DimensionMismatch(FeatureError):
    pass


class NotNormalized(FeatureError):
    pass


def feature_columns(dim: int = DEFAULT_EMBEDDING_DIM) -> list[str]:
    return (
        SCALAR_HEAD
        + [f"state_{s}" for s in US_STATES]
        + SCALAR_TAIL
        + [f"emb_{i:04d}" for i in range(dim)]
    )


class TextEmbedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic reference embedder: signed hashed bag of tokens,
    L2-normalized. Empty text embeds to the zero vector (the one
    documented exception to the unit-norm contract)."""

    def __init__(self, dimension: int = DEFAULT_EMBEDDING_DIM):
        if dimension < 1:
            raise FeatureError(f"embedding dimension must be >= 1, got {dimension}")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for token in re.findall(r"[0-9a-z]+", text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            idx = (value >> 1) % self.dimension
            vec[idx] += 1.0 if value & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


def load_precomputed_embeddings(path, dim: int) -> dict[tuple[int, Optional[Technology]], np.ndarray]:
    """Embeddings keyed by (provider_id, technology); an empty technology
    field is the provider-level fallback row. Vectors must have dimension
    dim and unit L2 norm within 1e-6 (zero vectors, the empty-text case,
    are also accepted)."""
    out: dict[tuple[int, Optional[Technology]], np.ndarray] = {}
    with open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["provider_id", "technology"]:
            raise MalformedRow(path, 1, "expected header provider_id,technology,emb_...")
        if len(header) - 2 != dim:
            raise DimensionMismatch(f"{path}: file has dimension {len(header) - 2}, expected {dim}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise DimensionMismatch(f"{path}:{line_no}: row has dimension {len(row) - 2}, expected {dim}")
            provider = int(row[0])
            tech = Technology.from_code(int(row[1])) if row[1].strip() else None
            key = (provider, tech)
            if key in out:
                raise MalformedRow(path, line_no, f"duplicate embedding key {key}")
            vec = np.array([float(v) for v in row[2:]])
            norm = float(np.linalg.norm(vec))
            if norm != 0.0 and abs(norm - 1.0) > 1e-6:
                raise NotNormalized(f"{path}:{line_no}: vector norm {norm} is not 1")
            out[key] = vec
    return out


def write_embeddings(embeddings: Mapping[tuple[int, Optional[Technology]], np.ndarray], path) -> None:
    dims = {len(v) for v in embeddings.values()}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["provider_id", "technology"] + [f"emb_{i:04d}" for i in range(dim)])
        for (provider, tech), vec in sorted(embeddings.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else int(kv[0][1]))):
            w.writerow([provider, "" if tech is None else int(tech)] + [repr(float(v)) for v in vec])


# ---------------------------------------------------------------------------
# Vectorization


def vectorize(
    claims: Sequence[AvailabilityClaim],
    stats: Optional[CellTestStats],
    evidence_count: Optional[int],
    bsl_count: int,
    methodology_text: str,
    embedder: TextEmbedder,
    grid: GridConfig,
) -> np.ndarray:
    """One feature vector for the (provider, technology, cell) behind the
    given claim group. Speed is the maximum advertised download with its
    paired upload (ties keep the larger upload)."""
    if not claims:
        raise EmptyClaimSet("cannot vectorize an empty claim set")
    keys = {(c.provider_id, c.technology, c.cell) for c in claims}
    if len(keys) > 1:
        raise FeatureError(f"claims span multiple observation keys: {sorted_keys(keys)}")
    if bsl_count < 1:
        raise FeatureError(f"bsl_count must be >= 1, got {bsl_count}")

    down = max(c.max_down_mbps for c in claims)
    up = max(c.max_up_mbps for c in claims if c.max_down_mbps == down)
    low_latency = 1.0 if any(c.low_latency for c in claims) else 0.0
    state = claims[0].state
    if state not in _STATE_INDEX:
        raise FeatureError(f"unknown state code {state!r}")
    centroid = cell_centroid(claims[0].cell, grid)
    claim_pct = min(1.0, len({c.location_id for c in claims}) / bsl_count)

    head = np.array([down, up, low_latency])
    onehot = np.zeros(len(US_STATES))
    onehot[_STATE_INDEX[state]] = 1.0
    tail = np.array([
        centroid.lat,
        centroid.lon,
        claim_pct,
        (stats.ookla_devices / bsl_count) if stats is not None else np.nan,
        float(evidence_count) if evidence_count is not None else np.nan,
    ])
    return np.concatenate([head, onehot, tail, embedder.embed(methodology_text)])


def sorted_keys(keys):
    return sorted(keys, key=lambda k: (k[0], int(k[1]), k[2].id))


class _PrecomputedLookup:
    """Adapter exposing a per-text embed() over a precomputed key lookup."""

    def __init__(self, table: Mapping[tuple[int, Optional[Technology]], np.ndarray], dimension: int):
        self.table = table
        self.dimension = dimension

    def vector_for(self, provider_id: int, tech: Technology) -> np.ndarray:
        vec = self.table.get((provider_id, tech))
        if vec is None:
            vec = self.table.get((provider_id, None))
        if vec is None:
            return np.zeros(self.dimension)
        return vec


@dataclass
class FeatureTable:
    """Row-aligned feature matrix with observation keys and optional labels.

    y is 1 for unserved (the suspicious, positive class) and 0 for served.
    """

    columns: list[str]
    keys: list[tuple[int, CellId, Technology, str]]
    X: np.ndarray
    y: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.keys)


def featurize(
    observations: Sequence[LabeledObservation],
    snapshot: MapSnapshot,
    stats: Iterable[CellTestStats],
    evidence_counts: Mapping[tuple[int, CellId], int],
    bsl_counts: Mapping[CellId, int],
    grid: GridConfig,
    embedder: Optional[TextEmbedder] = None,
    precomputed: Optional[Mapping[tuple[int, Optional[Technology]], np.ndarray]] = None,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
) -> FeatureTable:
    """Vectorize labeled observations against the initial filing snapshot."""
    keys = [(o.provider_id, o.cell, o.technology, o.state) for o in observations]
    y = np.array([1 if o.label is Label.UNSERVED else 0 for o in observations])
    table = featurize_keys(
        keys, snapshot, stats, evidence_counts, bsl_counts, grid,
        embedder=embedder, precomputed=precomputed, embedding_dim=embedding_dim,
    )
    table.y = y
    return table


def featurize_keys(
    keys: Sequence[tuple[int, CellId, Technology, str]],
    snapshot: MapSnapshot,
    stats: Iterable[CellTestStats],
    evidence_counts: Mapping[tuple[int, CellId], int],
    bsl_counts: Mapping[CellId, int],
    grid: GridConfig,
    embedder: Optional[TextEmbedder] = None,
    precomputed: Optional[Mapping[tuple[int, Optional[Technology]], np.ndarray]] = None,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
) -> FeatureTable:
    """Vectorize arbitrary (provider, cell, technology, state) keys; every
    key must have at least one claim in the snapshot."""
    if precomputed is not None:
        lookup = _PrecomputedLookup(precomputed, embedding_dim)
        embedder = None
    else:
        lookup = None
        if embedder is None:
            embedder = HashingEmbedder(embedding_dim)
        embedding_dim = embedder.dimension

    groups = snapshot.claim_groups()
    stats_by_cell = {s.cell: s for s in stats}
    rows = []
    for provider_id, cell, tech, _state in keys:
        claims = groups.get((provider_id, tech, cell))
        if not claims:
            raise EmptyClaimSet(f"no claims in snapshot for ({provider_id}, {cell.to_hex()}, {int(tech)})")
        bsl = bsl_counts.get(cell)
        if bsl is None:
            raise FeatureError(f"no location count for cell {cell.to_hex()}")
        if lookup is not None:
            emb = lookup.vector_for(provider_id, tech)
            base = vectorize(claims, stats_by_cell.get(cell),
                             evidence_counts.get((provider_id, cell)), bsl,
                             "", _ZeroEmbedder(embedding_dim), grid)
            base[-embedding_dim:] = emb
            rows.append(base)
        else:
            text = snapshot.methodology_for(provider_id, tech)
            rows.append(vectorize(claims, stats_by_cell.get(cell),
                                  evidence_counts.get((provider_id, cell)), bsl,
                                  text, embedder, grid))
    X = np.array(rows) if rows else np.zeros((0, len(feature_columns(embedding_dim))))
    return FeatureTable(columns=feature_columns(embedding_dim), keys=list(keys), X=X)


class _ZeroEmbedder:
    def __init__(self, dimension: int):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        return np.zeros(self.dimension)


# ---------------------------------------------------------------------------
# Persistence

FEATURE_KEY_HEADER = ["provider_id", "cell_hex", "technology", "state", "label"]
_BIN_MAGIC = b"BBFT\x01"


def write_feature_table(table: FeatureTable, path) -> None:
    """Dense CSV: key columns, label, then the versioned feature columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_KEY_HEADER + table.columns)
        for i, (provider, cell, tech, state) in enumerate(table.keys):
            label = "" if table.y is None else str(int(table.y[i]))
            w.writerow([provider, cell.to_hex(), int(tech), state, label]
                       + [repr(float(v)) for v in table.X[i]])


def load_feature_table(path) -> FeatureTable:
    with open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != FEATURE_KEY_HEADER:
            raise MalformedRow(path, 1, "not a feature table file")
        columns = header[5:]
        keys = []
        labels = []
        rows = []
        for row in reader:
            if not row:
                continue
            keys.append((int(row[0]), CellId.from_hex(row[1]),
                         Technology.from_code(int(row[2])), row[3]))
            labels.append(row[4])
            rows.append([float(v) for v in row[5:]])
    X = np.array(rows) if rows else np.zeros((0, len(columns)))
    y = None
    if labels and all(lbl != "" for lbl in labels):
        y = np.array([int(lbl) for lbl in labels])
    return FeatureTable(columns=columns, keys=keys, X=X, y=y)


def save_matrix(X: np.ndarray, path) -> None:
    """Compact binary matrix: magic, row/col counts, little-endian f32."""
    rows, cols = X.shape
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(X.astype("<f4").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(_BIN_MAGIC))
        if magic != _BIN_MAGIC:
            raise FeatureError(f"{path}: not a feature matrix file")
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
    if data.size != rows * cols:
        raise FeatureError(f"{path}: truncated matrix payload")
    return data.reshape(rows, cols).astype(np.float64)
