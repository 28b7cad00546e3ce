#!/usr/bin/env python3
"""Dataset preparation helper.

No downloading happens here; the benchmark archives (BlogCatalog, Flickr,
Cora, CiteSeer, Pubmed) circulate as MATLAB .mat files alongside public
anomaly-detection reference implementations. Obtain one, then convert it
into the on-disk layout this package reads:

    data/<name>/edges.txt        one undirected edge per line: "i j"
    data/<name>/attributes.csv   one node per row, comma-separated floats
    data/<name>/labels.txt       one 0/1 anomaly label per line (optional)

Usage:
    python3 scripts/fetch_datasets.py --list
    python3 scripts/fetch_datasets.py --mat BlogCatalog.mat --name blogcatalog

Conversion validates the result structurally (symmetry, no self-loops,
finite attributes) by round-tripping it through the package loader. .mat
files whose label vector is not binary (class labels rather than anomaly
marks) are exported without labels.txt; inject anomalies afterwards with
`subcr inject`.
"""

import argparse
import os
import sys

import numpy as np
import scipy.io
import scipy.sparse as sp

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from subcr import graph  # noqa: E402

LAYOUT = """\
expected layout per dataset (paths match src/subcr/defaults/<name>.toml):

  data/cora/edges.txt  attributes.csv  labels.txt     2708 nodes,   1433 features
  data/citeseer/...                                   3327 nodes,   3703 features
  data/pubmed/...                                    19717 nodes,    500 features
  data/blogcatalog/...                                5196 nodes,   8189 features
  data/flickr/...                                     7575 nodes,  12407 features

labels.txt marks injected anomalies (Table-1 totals: cora 150,
citeseer 150, pubmed 600, blogcatalog 300, flickr 450); produce it with
`subcr inject` when the archive carries no anomaly labels."""

_ADJ_KEYS = ("Network", "A", "adj", "W")
_ATTR_KEYS = ("Attributes", "X", "attributes", "Attribute")
_LABEL_KEYS = ("Label", "gnd", "labels", "Y")


def _pick(mat, keys, what):
    for key in keys:
        if key in mat:
            return mat[key]
    raise SystemExit(f"no {what} found in .mat (tried {keys}); "
                     f"available keys: {sorted(k for k in mat if not k.startswith('__'))}")


def convert_mat(mat_path, name, root="data"):
    mat = scipy.io.loadmat(mat_path)
    adj = sp.csr_matrix(_pick(mat, _ADJ_KEYS, "adjacency"))
    attrs = _pick(mat, _ATTR_KEYS, "attributes")
    attrs = np.asarray(attrs.todense() if sp.issparse(attrs) else attrs,
                       dtype=np.float64)

    adj = adj.maximum(adj.T)      # force symmetry
    adj.setdiag(0)                # drop self-loops
    adj.eliminate_zeros()
    coo = sp.triu(adj, k=1).tocoo()
    pairs = np.column_stack([coo.row, coo.col])

    labels = None
    for key in _LABEL_KEYS:
        if key in mat:
            raw = np.asarray(mat[key]).ravel()
            if set(np.unique(raw)) <= {0, 1}:
                labels = raw.astype(np.int64)
            else:
                print(f"note: {key} is not binary (class labels?); "
                      "skipping labels.txt, inject anomalies instead")
            break

    g = graph.build_graph(pairs, attrs, labels)
    out = os.path.join(root, name)
    os.makedirs(out, exist_ok=True)
    edges = os.path.join(out, "edges.txt")
    attributes = os.path.join(out, "attributes.csv")
    labels_path = os.path.join(out, "labels.txt") if labels is not None \
        else None
    graph.export_graph(g, edges, attributes, labels_path)
    # round-trip through the loader to prove the files are well-formed
    check = graph.load_graph(edges, attributes, labels_path)
    assert check.num_nodes == g.num_nodes
    assert check.num_edges == g.num_edges
    print(f"{name}: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_features} features"
          + (f", {int(labels.sum())} anomalies" if labels is not None
             else ", no anomaly labels") + f" -> {out}")


def main():
    ap = argparse.ArgumentParser(
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--list", action="store_true",
                    help="print the expected on-disk layout and exit")
    ap.add_argument("--mat", help="path to a .mat archive to convert")
    ap.add_argument("--name", help="dataset name (directory under data/)")
    ap.add_argument("--root", default="data", help="output root directory")
    args = ap.parse_args()
    if args.list:
        print(LAYOUT)
        return
    if not args.mat or not args.name:
        ap.error("--mat and --name are required unless --list is given")
    convert_mat(args.mat, args.name.lower(), args.root)


if __name__ == "__main__":
    main()
