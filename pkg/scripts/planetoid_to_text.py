"""Convert the Planetoid ``ind.<name>.*`` pickles into the text dataset format.

    python scripts/planetoid_to_text.py --raw raw/ --name cora --out data/cora
    python scripts/planetoid_to_text.py --download --raw raw/ --name cora --out data/cora

The public split follows the usual convention: the ``y`` rows are the
training nodes (20 per class), the next 500 nodes are validation and
``test.index`` lists the 1000 test nodes. Features are written raw;
normalisation happens at training time.
"""
import argparse
import pickle
import sys
import urllib.request
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from gcnenergy.data import Dataset, save_dataset
from gcnenergy.graph import Graph

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
URL = "https://github.com/kimiyoung/planetoid/raw/master/data/ind.{name}.{part}"


def fetch(raw: Path, name: str):
    raw.mkdir(parents=True, exist_ok=True)
    for part in PARTS:
        dst = raw / f"ind.{name}.{part}"
        if not dst.exists():
            print(f"fetching {dst.name}")
            urllib.request.urlretrieve(URL.format(name=name, part=part), dst)


def _load(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw: Path, name: str) -> Dataset:
    obj = {p: _load(raw / f"ind.{name}.{p}") for p in PARTS if p != "test.index"}
    test_idx = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64)
    tx, ty = obj["tx"], obj["ty"]
    if name == "citeseer":
        # some test ids have no node in tx; pad them with zero rows
        full = np.arange(test_idx.min(), test_idx.max() + 1)
        tx_ext = sp.lil_matrix((full.size, tx.shape[1]))
        tx_ext[np.sort(test_idx) - test_idx.min(), :] = tx
        ty_ext = np.zeros((full.size, ty.shape[1]))
        ty_ext[np.sort(test_idx) - test_idx.min(), :] = ty
        tx, ty = tx_ext, ty_ext
    features = sp.vstack((obj["allx"], tx)).tolil()
    labels1h = np.vstack((obj["ally"], ty))
    order = np.sort(test_idx)
    features[test_idx, :] = features[order, :]
    labels1h[test_idx, :] = labels1h[order, :]
    n = features.shape[0]
    # unlabelled nodes (all-zero rows) get class 0; they sit in no split
    labels = labels1h.argmax(axis=1)

    edges = set()
    for u, nbrs in obj["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))
    g = Graph.from_edges(n, sorted(edges))
    n_train = obj["y"].shape[0]
    splits = {
        "train": np.arange(n_train),
        "val": np.arange(n_train, n_train + 500),
        "test": np.sort(test_idx),
    }
    X = np.asarray(features.todense(), dtype=np.float64)
    return Dataset(g, X, labels, int(labels1h.shape[1]), splits, name)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--raw", required=True, type=Path)
    p.add_argument("--name", required=True, choices=("cora", "citeseer", "pubmed"))
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--download", action="store_true")
    args = p.parse_args(argv)
    if args.download:
        fetch(args.raw, args.name)
    ds = convert(args.raw, args.name)
    save_dataset(ds, args.out)
    print(f"{args.name}: {ds.n_nodes} nodes, {ds.graph.n_edges} edges, "
          f"{ds.X.shape[1]} features, {ds.n_classes} classes -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
