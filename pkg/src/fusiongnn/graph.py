"""Graph container, file I/O, normalisation, splitting and synthetic generators."""

from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, UsageError
from .sparse import SparseMatrix

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class Graph:
    """Undirected node-classification graph.

    ``edges`` holds each unordered pair once as ``(u, v)`` with ``u < v``;
    self-loops are never stored.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    masks: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.edges = canonical_edges(self.edges, self.n)
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.n:
            raise DimensionError(f"features must have {self.n} rows, got {self.features.shape}")
        if self.labels.shape != (self.n,):
            raise DimensionError(f"expected {self.n} labels, got {self.labels.shape}")
        if self.n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise UsageError(f"labels must lie in [0, {self.num_classes})")
        if self.masks:
            self.set_masks(self.masks)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_features(self):
        return self.features.shape[1]

    def set_masks(self, masks):
        masks = {k: np.asarray(masks[k], dtype=bool) for k in SPLITS if k in masks}
        for k, m in masks.items():
            if m.shape != (self.n,):
                raise DimensionError(f"mask '{k}' has shape {m.shape}, expected ({self.n},)")
        stacked = sum(m.astype(int) for m in masks.values())
        if np.any(stacked > 1):
            raise UsageError("train/val/test masks overlap")
        self.masks = masks

    def require_masks(self):
        if not all(k in self.masks and self.masks[k].any() for k in SPLITS):
            raise UsageError("graph needs non-empty train/val/test masks")
        return self.masks

    def adjacency(self, scheme="sym-selfloop") -> SparseMatrix:
        if scheme not in self._cache:
            self._cache[scheme] = normalize_adjacency(self, scheme)
        return self._cache[scheme]

    def permuted(self, perm):
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Graph(self.n, inv[self.edges], self.features[perm], self.labels[perm],
                     self.num_classes, {k: m[perm] for k, m in self.masks.items()})


def canonical_edges(edges, n):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.min() < 0 or e.max() >= n:
        raise DimensionError(f"edge endpoint out of range for n={n}")
    if np.any(e[:, 0] == e[:, 1]):
        raise UsageError("self-loops are not allowed in the edge list")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


# --- adjacency ------------------------------------------------------------

def adjacency_pattern(g: Graph, self_loops=False) -> SparseMatrix:
    u, v = g.edges[:, 0], g.edges[:, 1]
    rows, cols = np.concatenate([u, v]), np.concatenate([v, u])
    if self_loops:
        idx = np.arange(g.n)
        rows, cols = np.concatenate([rows, idx]), np.concatenate([cols, idx])
    return SparseMatrix(g.n, rows, cols)


def normalize_adjacency(g: Graph, scheme="sym-selfloop") -> SparseMatrix:
    """``sym-selfloop``: D^-1/2 (A+I) D^-1/2; ``rw-selfloop``: D^-1 (A+I); ``raw``: A.

    ``mean`` and ``selfloop-raw`` are internal helpers for SAGE/GAT.
    """
    if scheme == "raw":
        return adjacency_pattern(g)
    if scheme == "selfloop-raw":
        return adjacency_pattern(g, self_loops=True)
    if scheme == "mean":
        a = adjacency_pattern(g)
        deg = a.row_sums()
        return a.with_values(a.vals / deg[a.rows])
    a = adjacency_pattern(g, self_loops=True)
    deg = a.row_sums()
    if scheme == "sym-selfloop":
        d = 1.0 / np.sqrt(deg)
        return a.with_values(a.vals * d[a.rows] * d[a.cols])
    if scheme == "rw-selfloop":
        return a.with_values(a.vals / deg[a.rows])
    raise UsageError(f"unknown normalisation scheme '{scheme}'")


def homophily_ratio(g: Graph) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    if g.num_edges == 0:
        raise UsageError("homophily ratio is undefined for an edgeless graph")
    y = g.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))


# --- splitting ------------------------------------------------------------

@dataclass
class SplitConfig:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        for name in SPLITS:
            f = getattr(self, name)
            if not 0.0 < f < 1.0:
                raise UsageError(f"{name} fraction must lie in (0, 1), got {f}")
        if self.train + self.val + self.test > 1.0 + 1e-12:
            raise UsageError("split fractions sum to more than 1")


def _split_counts(m, cfg):
    n_train = int(round(cfg.train * m))
    n_val = int(round(cfg.val * m))
    n_test = int(round(cfg.test * m))
    if cfg.train + cfg.val + cfg.test >= 1.0 - 1e-12:
        n_test = m - n_train - n_val
    return n_train, n_val, min(n_test, m - n_train - n_val)


def split_nodes(g: Graph, cfg: SplitConfig = SplitConfig()) -> dict:
    """Disjoint random train/val/test masks, per class when ``cfg.stratified``."""
    rng = np.random.default_rng(cfg.seed)
    masks = {k: np.zeros(g.n, dtype=bool) for k in SPLITS}
    groups = [np.flatnonzero(g.labels == c) for c in range(g.num_classes)] if cfg.stratified \
        else [np.arange(g.n)]
    for c, members in enumerate(groups):
        if len(members) == 0:
            continue
        counts = _split_counts(len(members), cfg)
        if cfg.stratified and min(counts) < 1:
            raise UsageError(f"class {c} has {len(members)} nodes, too few to stratify")
        order = rng.permutation(members)
        lo = 0
        for name, k in zip(SPLITS, counts):
            masks[name][order[lo:lo + k]] = True
            lo += k
    return masks


# --- synthetic graphs -----------------------------------------------------

def generate_synthetic(n, num_classes, num_features, p_intra, p_inter, feature_signal=1.0,
                       seed=0, split: SplitConfig | None = None) -> Graph:
    """Stochastic-block-model graph with Gaussian class-conditional features.

    Labels are balanced (``i % C`` before shuffling). Each class gets a random
    mean direction ``mu_c ~ N(0, I)``; node features are
    ``feature_signal * mu_c + N(0, I)``. Setting ``p_intra == p_inter`` makes
    the edges independent of the labels.
    """
    if n <= 0:
        raise UsageError("n must be positive")
    if num_classes < 1 or n < num_classes:
        raise UsageError("need 1 <= num_classes <= n")
    for p in (p_intra, p_inter):
        if not 0.0 <= p <= 1.0:
            raise UsageError(f"edge probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_intra, p_inter)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = rng.standard_normal((num_classes, num_features))
    features = feature_signal * means[labels] + rng.standard_normal((n, num_features))
    g = Graph(n, edges, features, labels, num_classes)
    g.set_masks(split_nodes(g, split or SplitConfig(seed=seed)))
    return g


def expected_homophily(n, num_classes, p_intra, p_inter):
    """Analytic edge-homophily expectation for balanced SBM blocks."""
    size = n / num_classes
    intra = num_classes * size * (size - 1) / 2 * p_intra
    inter = num_classes * (num_classes - 1) / 2 * size * size * p_inter
    return intra / (intra + inter)


# --- file I/O -------------------------------------------------------------

def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _find(directory: Path, name: str, required=True):
    for candidate in (directory / name, directory / (name + ".gz")):
        if candidate.exists():
            return candidate
    if required:
        raise ParseError(f"missing file '{name}'", source=str(directory))
    return None


def _data_lines(path):
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_graph(directory) -> Graph:
    """Read ``edges.tsv``, ``features.csv``, ``labels.tsv`` and optional ``masks.tsv``.

    Any of the files may be gzip-compressed with a ``.gz`` suffix.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError("not a directory", source=str(directory))

    feat_path = _find(directory, "features.csv")
    rows = []
    width = None
    for lineno, line in _data_lines(feat_path):
        try:
            row = [float(x) for x in line.split(",")]
        except ValueError:
            raise ParseError("non-numeric feature value", lineno, feat_path.name) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"ragged feature row: {len(row)} values, expected {width}",
                             lineno, feat_path.name)
        rows.append(row)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    if not np.isfinite(features).all():
        raise ParseError("non-finite feature value", source=feat_path.name)
    n = len(rows)

    lab_path = _find(directory, "labels.tsv")
    labels = []
    for lineno, line in _data_lines(lab_path):
        try:
            y = int(line)
        except ValueError:
            raise ParseError(f"unknown label '{line}'", lineno, lab_path.name) from None
        if y < 0:
            raise ParseError(f"unknown label '{line}'", lineno, lab_path.name)
        labels.append(y)
    if len(labels) != n:
        raise ParseError(f"{len(labels)} labels for {n} feature rows", source=lab_path.name)

    edge_path = _find(directory, "edges.tsv")
    edges = []
    for lineno, line in _data_lines(edge_path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected 'u<TAB>v'", lineno, edge_path.name)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError("non-integer node id", lineno, edge_path.name) from None
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"edge ({u}, {v}) out of range for n={n}", lineno, edge_path.name)
        if u == v:
            raise ParseError(f"self-loop ({u}, {v}) not allowed", lineno, edge_path.name)
        edges.append((u, v))
    raw = len(edges)
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), features,
              np.array(labels, dtype=np.int64), max(labels) + 1 if labels else 0)
    if raw != g.num_edges:
        log.warning("%s: collapsed %d duplicate or reversed edge lines", edge_path.name,
                    raw - g.num_edges)

    mask_path = _find(directory, "masks.tsv", required=False)
    if mask_path is not None:
        masks = {k: np.zeros(n, dtype=bool) for k in SPLITS}
        count = 0
        for lineno, line in _data_lines(mask_path):
            if line not in ("train", "val", "test", "none"):
                raise ParseError(f"unknown mask entry '{line}'", lineno, mask_path.name)
            if count >= n:
                raise ParseError("more mask lines than nodes", lineno, mask_path.name)
            if line != "none":
                masks[line][count] = True
            count += 1
        if count != n:
            raise ParseError(f"{count} mask lines for {n} nodes", source=mask_path.name)
        g.set_masks(masks)
    return g


def save_graph(g: Graph, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.tsv", "w") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.csv", "w") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(directory / "labels.tsv", "w") as fh:
        fh.writelines(f"{y}\n" for y in g.labels)
    if g.masks:
        with open(directory / "masks.tsv", "w") as fh:
            for i in range(g.n):
                name = next((k for k in SPLITS if k in g.masks and g.masks[k][i]), "none")
                fh.write(name + "\n")
    return directory
