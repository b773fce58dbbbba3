#!/usr/bin/env python3
"""Write a planted-cluster embedding fixture to disk.

Produces <out>.emb (+ .ids sidecar) and <out>.truth.json holding the
ground-truth member ids per cluster, for exercising the cluster pipeline on
data with a known answer.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from dupaudit.store import write_embeddings
from dupaudit.synth import DEFAULT_SIZES, planted_cluster_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output path stem")
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    emb, truth = planted_cluster_fixture(seed=args.seed, n=args.n, dim=args.dim,
                                         sizes=DEFAULT_SIZES)
    emb_path = Path(args.out).with_suffix(".emb")
    write_embeddings(emb, emb_path)
    truth_path = Path(args.out).with_suffix(".truth.json")
    truth_path.write_text(json.dumps(
        {"clusters": [sorted(t) for t in truth]}, indent=2) + "\n")
    print(f"{emb.n} rows x {emb.dim} dims -> {emb_path}")
    print(f"{len(truth)} planted clusters -> {truth_path}")


if __name__ == "__main__":
    main()
