"""Node-classification datasets: a plain-text on-disk format, splits, SBM graphs.

A dataset directory holds four UTF-8 files, one record per line, ``#``
starting a comment:

``edges.txt``
    ``<u> <v>`` undirected edge between integer node ids.
``features.txt``
    ``<node> <f0> <f1> ...`` (dense) or ``<node> <idx>:<val> ...`` (sparse).
``labels.txt``
    ``<node> <class>``.
``splits.txt``
    ``<node> <train|val|test>``; nodes not listed belong to no split.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph

SPLIT_NAMES = ("train", "val", "test")


class DatasetFormatError(ValueError):
    def __init__(self, path, lineno, msg):
        self.path = path
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno else str(path)
        super().__init__(f"{where}: {msg}")


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    X: np.ndarray
    labels: np.ndarray
    n_classes: int
    splits: dict
    name: str = ""

    def __post_init__(self):
        n = self.graph.n_nodes
        if self.X.shape[0] != n:
            raise ValueError(f"feature rows {self.X.shape[0]} != node count {n}")
        if self.labels.shape != (n,):
            raise ValueError("need exactly one label per node")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("label out of range")
        seen = set()
        for k in SPLIT_NAMES:
            idx = set(np.asarray(self.splits.get(k, ()), dtype=np.int64).tolist())
            if seen & idx:
                raise ValueError(f"split {k!r} overlaps another split")
            seen |= idx

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def Z(self) -> np.ndarray:
        return np.eye(self.n_classes)[self.labels]

    def with_features(self, X) -> "Dataset":
        return Dataset(self.graph, X, self.labels, self.n_classes, self.splits, self.name)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.graph.n_nodes == other.graph.n_nodes
            and np.array_equal(self.graph.edges, other.graph.edges)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.labels, other.labels)
            and self.n_classes == other.n_classes
            and all(np.array_equal(self.splits[k], other.splits[k]) for k in SPLIT_NAMES)
        )


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _int(tok, path, lineno):
    try:
        return int(tok)
    except ValueError:
        raise DatasetFormatError(path, lineno, f"expected an integer, got {tok!r}") from None


def _read_features(path):
    rows = {}
    width = 0
    for lineno, toks in _records(path):
        node = _int(toks[0], path, lineno)
        if node in rows:
            raise DatasetFormatError(path, lineno, f"duplicate feature row for node {node}")
        try:
            if any(":" in t for t in toks[1:]):
                entries = {}
                for t in toks[1:]:
                    k, v = t.split(":")
                    entries[int(k)] = float(v)
                rows[node] = ("sparse", entries, lineno)
                if entries:
                    width = max(width, max(entries) + 1)
            else:
                vals = [float(t) for t in toks[1:]]
                rows[node] = ("dense", vals, lineno)
                width = max(width, len(vals))
        except ValueError:
            raise DatasetFormatError(path, lineno, "malformed feature entry") from None
    n = len(rows)
    if set(rows) != set(range(n)):
        raise DatasetFormatError(path, 0, "feature rows must cover nodes 0..N-1 exactly")
    X = np.zeros((n, width))
    for node, (kind, vals, lineno) in rows.items():
        if kind == "dense":
            if len(vals) != width:
                raise DatasetFormatError(path, lineno, f"expected {width} values, got {len(vals)}")
            X[node] = vals
        else:
            for k, v in vals.items():
                if k < 0:
                    raise DatasetFormatError(path, lineno, "negative feature index")
                X[node, k] = v
    return X


def load_dataset(dir_path, name=None) -> Dataset:
    """Read a dataset directory (see module docstring).

    Edges are symmetrised and deduplicated and raw self-loops dropped.
    Features are returned unnormalised.
    """
    d = Path(dir_path)
    for fname in ("edges.txt", "features.txt", "labels.txt", "splits.txt"):
        if not (d / fname).is_file():
            raise FileNotFoundError(f"missing dataset file: {d / fname}")
    X = _read_features(d / "features.txt")
    n = X.shape[0]

    labels = np.full(n, -1, dtype=np.int64)
    path = d / "labels.txt"
    for lineno, toks in _records(path):
        if len(toks) != 2:
            raise DatasetFormatError(path, lineno, "expected '<node> <class>'")
        node, cls = _int(toks[0], path, lineno), _int(toks[1], path, lineno)
        if not 0 <= node < n:
            raise DatasetFormatError(path, lineno, f"node {node} out of range")
        if cls < 0:
            raise DatasetFormatError(path, lineno, f"label {cls} out of range")
        labels[node] = cls
    if (labels < 0).any():
        raise DatasetFormatError(path, 0, f"{int((labels < 0).sum())} nodes have no label")
    n_classes = int(labels.max()) + 1

    edges = []
    path = d / "edges.txt"
    for lineno, toks in _records(path):
        if len(toks) != 2:
            raise DatasetFormatError(path, lineno, "expected '<u> <v>'")
        u, v = _int(toks[0], path, lineno), _int(toks[1], path, lineno)
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetFormatError(path, lineno, f"edge ({u}, {v}) out of range")
        if u != v:
            edges.append((u, v))

    members = {k: [] for k in SPLIT_NAMES}
    owner = {}
    path = d / "splits.txt"
    for lineno, toks in _records(path):
        if len(toks) != 2 or toks[1] not in SPLIT_NAMES:
            raise DatasetFormatError(path, lineno, "expected '<node> <train|val|test>'")
        node = _int(toks[0], path, lineno)
        if not 0 <= node < n:
            raise DatasetFormatError(path, lineno, f"node {node} out of range")
        if node in owner and owner[node] != toks[1]:
            raise DatasetFormatError(
                path, lineno, f"node {node} in both {owner[node]!r} and {toks[1]!r}"
            )
        if node not in owner:
            owner[node] = toks[1]
            members[toks[1]].append(node)
    splits = {k: np.array(sorted(v), dtype=np.int64) for k, v in members.items()}
    graph = Graph.from_edges(n, edges)
    return Dataset(graph, X, labels, n_classes, splits, name or d.name)


def save_dataset(ds: Dataset, dir_path) -> None:
    """Write ``ds`` in the text format; floats use ``repr`` so loading is exact."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.txt", "w", encoding="utf-8") as fh:
        for u, v in ds.graph.edges:
            fh.write(f"{u} {v}\n")
    with open(d / "features.txt", "w", encoding="utf-8") as fh:
        width = ds.X.shape[1]
        for i, row in enumerate(ds.X):
            nz = np.flatnonzero(row)
            if nz.size * 2 < width:
                # always emit the last column so the width survives a reload
                cols = nz.tolist() if nz.size and nz[-1] == width - 1 else nz.tolist() + [width - 1]
                body = " ".join(f"{j}:{float(row[j])!r}" for j in cols)
            else:
                body = " ".join(repr(float(x)) for x in row)
            fh.write(f"{i} {body}\n")
    with open(d / "labels.txt", "w", encoding="utf-8") as fh:
        for i, c in enumerate(ds.labels):
            fh.write(f"{i} {int(c)}\n")
    with open(d / "splits.txt", "w", encoding="utf-8") as fh:
        for k in SPLIT_NAMES:
            for i in ds.splits[k]:
                fh.write(f"{int(i)} {k}\n")


def row_normalize_features(X) -> np.ndarray:
    """Divide each row by its L1 norm; all-zero rows are left as they are."""
    X = np.asarray(X, dtype=np.float64)
    s = np.abs(X).sum(axis=1, keepdims=True)
    out = X.copy()
    nz = s[:, 0] > 0
    out[nz] = X[nz] / s[nz]
    return out


def make_public_split(labels, per_class=20, val_size=500, test_size=1000, seed=0) -> dict:
    """Planetoid-style split.

    ``train`` is the first ``per_class`` nodes of each class in node order.
    ``val`` and ``test`` are drawn, in that order, from a seeded permutation
    of the remaining nodes.
    """
    labels = np.asarray(labels)
    train = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < per_class:
            raise ValueError(f"class {c} has {idx.size} nodes, fewer than {per_class}")
        train.extend(idx[:per_class].tolist())
    train = np.array(sorted(train), dtype=np.int64)
    rest = np.setdiff1d(np.arange(labels.size), train)
    if val_size + test_size > rest.size:
        raise ValueError(
            f"val_size + test_size = {val_size + test_size} exceeds the {rest.size} remaining nodes"
        )
    perm = rest[np.random.default_rng(seed).permutation(rest.size)]
    return {
        "train": train,
        "val": np.sort(perm[:val_size]),
        "test": np.sort(perm[val_size:val_size + test_size]),
    }


@dataclass(frozen=True)
class SyntheticSpec:
    """Stochastic block model settings.

    When ``val_size``/``test_size`` are ``None`` the nodes left after the
    training pick are split one third validation, two thirds test.
    """

    blocks: int = 2
    nodes_per_block: int = 20
    p_in: float = 0.3
    p_out: float = 0.02
    feature_dim: int = 8
    seed: int = 0
    noise: float = 0.5
    train_per_class: int = 5
    val_size: int | None = None
    test_size: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be at least the number of blocks")

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        """Parse ``"blocks=2,nodes_per_block=20,p_in=0.3"``-style strings.

        A leading preset name (``default`` or ``hard``) sets the starting
        values, e.g. ``"hard,seed=3"``.
        """
        kwargs = {}
        types = {f: t for f, t in cls.__annotations__.items()}
        for i, part in enumerate(filter(None, (p.strip() for p in text.split(",")))):
            key, sep, val = part.partition("=")
            key = key.strip()
            if not sep:
                if i > 0 or key not in SBM_PRESETS:
                    raise ValueError(f"unknown SBM preset {key!r}")
                kwargs.update(SBM_PRESETS[key])
                continue
            if key not in types:
                raise ValueError(f"unknown SBM field {key!r}")
            kind = types[key]
            if "float" in kind:
                kwargs[key] = float(val)
            elif val.strip().lower() == "none":
                kwargs[key] = None
            else:
                kwargs[key] = int(val)
        return cls(**kwargs)

    def to_string(self) -> str:
        return ",".join(f"{k}={getattr(self, k)}" for k in self.__annotations__)


# "hard": seven sparse, noisy blocks on which a 10-layer baseline stalls
# like it does on citation graphs, while the patched variants train.
SBM_PRESETS = {
    "default": {},
    "hard": dict(blocks=7, nodes_per_block=100, p_in=0.05, p_out=0.004, feature_dim=100,
                 noise=1.0, train_per_class=20, val_size=140, test_size=300),
}


def generate_sbm(spec: SyntheticSpec) -> Dataset:
    """Sample an SBM graph with a spanning cycle added for connectivity.

    Features are the one-hot block id padded to ``feature_dim`` plus
    Gaussian noise of standard deviation ``spec.noise``.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.blocks * spec.nodes_per_block
    labels = np.repeat(np.arange(spec.blocks), spec.nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < p
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    if n > 1:
        edges.extend((i, (i + 1) % n) for i in range(n))
    X = np.zeros((n, spec.feature_dim))
    X[np.arange(n), labels] = 1.0
    X += rng.normal(0.0, spec.noise, size=X.shape)
    rest = n - spec.blocks * spec.train_per_class
    val = spec.val_size if spec.val_size is not None else rest // 3
    test = spec.test_size if spec.test_size is not None else rest - val
    splits = make_public_split(labels, spec.train_per_class, val, test, seed=spec.seed)
    return Dataset(Graph.from_edges(n, edges), X, labels, spec.blocks, splits, name="sbm")


def resolve_dataset(source) -> Dataset:
    """Load from a directory path or build from an SBM spec string / object."""
    if isinstance(source, Dataset):
        return source
    if isinstance(source, SyntheticSpec):
        return generate_sbm(source)
    if os.path.isdir(str(source)):
        return load_dataset(source)
    raise FileNotFoundError(f"dataset directory not found: {source}")
