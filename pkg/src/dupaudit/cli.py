"""Command-line entry point for the duplication audit pipeline.

Stages compose through files: embeddings travel as EMB1 binaries, captions
and manifests as newline-delimited JSON, reports as JSON/CSV with stable key
order.  Every report embeds a provenance block (tool version, config echo,
input digests) and reruns with identical inputs and seeds are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from . import __version__
from . import complexity as cx
from . import manifest as mf
from . import metrics as mt
from . import mitigate as mg
from . import simgraph as sg
from . import store

SCHEMES = ("fixed", "class", "random")


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _provenance(args: argparse.Namespace, inputs: dict[str, str | Path]) -> dict:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        config[key] = str(value) if isinstance(value, Path) else value
    return {
        "tool": "dupaudit",
        "version": __version__,
        "command": args.command,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)}
                   for name, p in sorted(inputs.items())},
    }


def _write_json(path: str | Path, obj: dict) -> None:
    text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")


def _prov_lines(prov: dict) -> list[str]:
    lines = [f"dupaudit {prov['version']} {prov['command']}",
             "config: " + json.dumps(prov["config"], sort_keys=True, ensure_ascii=False)]
    for name, info in prov["inputs"].items():
        lines.append(f"input {name}: sha256={info['sha256']} path={info['path']}")
    return lines


def _load_embeddings(path: str, normalize: bool) -> store.EmbeddingMatrix:
    m = store.read_embeddings(path)
    if normalize and not m.normalized and m.n > 0:
        m = store.normalize_rows(m)
    return m


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("DUPAUDIT_THREADS", "1"))


def _is_emb1(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == store.EMB1_MAGIC


# ---------------------------------------------------------------- cluster

def cmd_cluster(args) -> int:
    config = sg.ClusterConfig(edge_threshold=args.threshold,
                              min_cluster_size=args.min_size,
                              block_rows=args.block_rows)
    emb = _load_embeddings(args.embeddings, args.normalize)
    inputs = {"embeddings": args.embeddings}

    edges = sg.threshold_edges(emb, config.edge_threshold, config.block_rows)
    if args.edges_out:
        buffered = list(edges)
        sg.write_edges(buffered, args.edges_out)
        edges = buffered
    labels = sg.connected_components(edges, emb.n)
    clusters = sg.filter_clusters(labels, config.min_cluster_size, emb.ids)

    if args.text_embeddings and args.captions:
        text_emb = _load_embeddings(args.text_embeddings, args.normalize)
        captions = {c.id: c for c in store.read_captions(args.captions)}
        inputs["text_embeddings"] = args.text_embeddings
        inputs["captions"] = args.captions
        clusters = [
            sg.DuplicateCluster(
                cluster_id=c.cluster_id, member_ids=c.member_ids, size=c.size,
                median_caption_similarity=mt.caption_cluster_similarity(
                    c, text_emb, captions, pair_budget=args.pair_budget,
                    seed=args.seed))
            for c in clusters
        ]

    sg.write_clusters(clusters, args.out)
    _write_json(str(args.out) + ".prov.json", _provenance(args, inputs))
    print(f"{len(clusters)} cluster(s) of size >= {config.min_cluster_size} "
          f"over {emb.n} rows -> {args.out}")
    return 0


# ---------------------------------------------------------------- simscore

def cmd_simscore(args) -> int:
    gen = _load_embeddings(args.generated, args.normalize)
    train = _load_embeddings(args.train, args.normalize)
    matches = sg.blocked_topk(gen, train, k=1, exclude_self=args.exclude_self,
                              block_rows=args.block_rows,
                              threads=_resolve_threads(args))
    report = mt.build_similarity_report(matches, percentile=args.percentile,
                                        replication_threshold=args.threshold)
    doc = mt.report_to_dict(report)
    doc["provenance"] = _provenance(
        args, {"generated": args.generated, "train": args.train})
    _write_json(args.out, doc)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("query_id,top1_ref_id,top1_score\n")
            for qid, rid, score in report.per_query:
                fh.write(f"{qid},{rid},{score!r}\n")
    print(f"dataset similarity (p{args.percentile:g}) = "
          f"{report.dataset_similarity:.6f}; flagged {len(report.flagged)}"
          f"/{len(report.per_query)} at threshold {args.threshold}")
    return 0


# ---------------------------------------------------------------- selfsim

def cmd_selfsim(args) -> int:
    emb = _load_embeddings(args.embeddings, args.normalize)
    value = mt.self_similarity_baseline(emb, percentile=args.percentile,
                                        block_rows=args.block_rows,
                                        threads=_resolve_threads(args))
    doc = {
        "self_similarity": value,
        "percentile": args.percentile,
        "rows": emb.n,
        "provenance": _provenance(args, {"embeddings": args.embeddings}),
    }
    _write_json(args.out, doc)
    print(f"self-similarity baseline (p{args.percentile:g}) = {value:.6f}")
    return 0


# ---------------------------------------------------------------- complexity

def _iter_images(args):
    if args.images:
        root = Path(args.images)
        for path in sorted(root.iterdir()):
            if path.is_file():
                yield path.stem, path
    else:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    yield obj["id"], Path(obj["path"])


def cmd_complexity(args) -> int:
    if bool(args.images) == bool(args.manifest):
        raise ValueError("give exactly one of --images or --manifest")
    scores, skipped = [], []
    for image_id, path in _iter_images(args):
        try:
            with Image.open(path) as img:
                scores.append(cx.score_image(image_id, img, quality=args.quality,
                                             gray_mode=args.gray))
        except (UnidentifiedImageError, OSError) as exc:
            skipped.append(image_id)
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)

    inputs = {}
    if args.manifest:
        inputs["manifest"] = args.manifest
    prov = _provenance(args, inputs)
    cx.write_complexity_csv(scores, args.out, header_lines=_prov_lines(prov))
    print(f"scored {len(scores)} image(s), skipped {len(skipped)} -> {args.out}")
    if skipped:
        print("skipped ids: " + ", ".join(skipped))

    if args.report:
        report = mt.report_from_dict(
            json.loads(Path(args.report).read_text("utf-8")))
        table = {s.id: s for s in scores}
        corr = {}
        for metric in ("entropy", "jpeg"):
            r, p = cx.complexity_correlation(report, table, metric,
                                             method=args.corr_method)
            corr[metric] = {"method": args.corr_method, "r": r, "p": p,
                            "p_display": mt.format_pvalue(p)}
        doc = {"correlations": corr,
               "provenance": _provenance(args, {**inputs, "report": args.report})}
        out = args.corr_out or (str(args.out) + ".corr.json")
        _write_json(out, doc)
        print(f"correlations -> {out}")
    return 0


# ---------------------------------------------------------------- mitigate

def _write_caption_rows(rows, strategy, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rid, caption, rseed in rows:
            fh.write(json.dumps(
                {"caption": caption, "id": rid, "seed": rseed,
                 "strategy": strategy},
                ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def cmd_mitigate(args) -> int:
    strategy = args.strategy
    emb_input = _is_emb1(args.input)
    if strategy == "gn" and not emb_input:
        raise ValueError("gn operates on EMB1 embedding files, got a text input")
    if strategy != "gn" and emb_input:
        raise ValueError(f"strategy {strategy!r} operates on caption files, "
                         "got an EMB1 input")

    if strategy == "gn":
        emb = store.read_embeddings(args.input)
        noisy = mg.add_embedding_noise(emb, args.noise_scale, args.seed)
        store.write_embeddings(noisy, args.out)
        _write_json(str(args.out) + ".prov.json",
                    _provenance(args, {"embeddings": args.input}))
        print(f"gn: {emb.n} row(s) noised at scale {args.noise_scale} -> {args.out}")
        return 0

    vocab = mg.load_vocab(args.vocab) if args.vocab else mg.default_vocab()

    if strategy == "mc":
        pools = store.read_caption_pools(args.input)
        rows = mg.sample_caption_pools(list(pools.items()), args.seed)
    elif strategy in SCHEMES:
        records = store.read_captions(args.input)
        rows = []
        for idx, rec in enumerate(records):
            rseed = mg.derive_record_seed(args.seed, idx)
            caption = mg.caption_scheme(
                strategy, class_name=rec.text if strategy == "class" else None,
                vocab=vocab, seed=rseed)
            rows.append((rec.id, caption, rseed))
    else:
        records = store.read_captions(args.input)
        spec = mg.TransformSpec.for_strategy(
            strategy, phase=args.phase, seed=args.seed, vocab=vocab,
            probability=args.prob, repeats=args.repeats,
            noise_scale=args.noise_scale, number_range=args.number_range,
            per_token=args.per_token)
        rows = mg.transform_records(records, spec)

    _write_caption_rows(rows, strategy, args.out)
    _write_json(str(args.out) + ".prov.json",
                _provenance(args, {"captions": args.input}))
    print(f"{strategy}: {len(rows)} caption(s) -> {args.out}")
    return 0


# ---------------------------------------------------------------- manifest

def cmd_manifest(args) -> int:
    records = store.read_captions(args.records)
    dup_ids = []
    inputs = {"records": args.records}
    if args.dup_ids:
        dup_ids = [line for line in
                   Path(args.dup_ids).read_text("utf-8").splitlines() if line]
        inputs["dup_ids"] = args.dup_ids
    pools = None
    if args.pools:
        pools = store.read_caption_pools(args.pools)
        inputs["pools"] = args.pools
    built = mf.build_manifest(records, dup_ids, ddf=args.ddf, mode=args.mode,
                              caption_pools=pools)
    mf.write_manifest(built, args.out, expanded=args.expanded)
    _write_json(str(args.out) + ".prov.json", _provenance(args, inputs))
    print(f"manifest: {len(built.rows)} row(s), mode={built.mode}, "
          f"ddf={built.ddf:g} -> {args.out}")
    return 0


# ---------------------------------------------------------------- sample

def cmd_sample(args) -> int:
    m = mf.read_manifest(args.manifest)
    draws = mf.sample_epoch(m, args.n_draws, args.seed,
                            caption_mode=args.caption_mode)
    mf.write_epoch_sample(draws, args.out)
    _write_json(str(args.out) + ".prov.json",
                _provenance(args, {"manifest": args.manifest}))
    print(f"sampled {len(draws)} draw(s) -> {args.out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="base seed for all randomized steps")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: DUPAUDIT_THREADS or 1)")
    common.add_argument("--block-rows", type=int, default=sg.DEFAULT_BLOCK_ROWS,
                        help="row block size for similarity scans")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="dupaudit",
        description="Duplication auditing and memorization mitigation for "
                    "text-to-image training corpora.")
    parser.add_argument("--version", action="version",
                        version=f"dupaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", parents=[common], formatter_class=fmt,
                       help="find duplicate-image clusters in an embedding set")
    p.add_argument("--embeddings", required=True, help="EMB1 input file")
    p.add_argument("--out", required=True, help="cluster records output (JSONL)")
    p.add_argument("--threshold", type=float, default=sg.DEFAULT_EDGE_THRESHOLD,
                   help="cosine edge threshold (inclusive)")
    p.add_argument("--min-size", type=int, default=sg.DEFAULT_MIN_CLUSTER_SIZE,
                   help="minimum cluster size to report")
    p.add_argument("--edges-out", help="optional binary edge dump (u32,u32,f32)")
    p.add_argument("--text-embeddings",
                   help="EMB1 caption embeddings for per-cluster caption similarity")
    p.add_argument("--captions", help="caption JSONL for per-cluster caption similarity")
    p.add_argument("--pair-budget", type=int, default=mt.DEFAULT_PAIR_BUDGET,
                   help="max caption pairs sampled per cluster")
    p.add_argument("--normalize", action="store_true",
                   help="normalize rows on load instead of failing")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("simscore", parents=[common], formatter_class=fmt,
                       help="score generated images against a training set")
    p.add_argument("--generated", required=True, help="EMB1 query embeddings")
    p.add_argument("--train", required=True, help="EMB1 reference embeddings")
    p.add_argument("--out", required=True, help="similarity report (JSON)")
    p.add_argument("--percentile", type=float, default=mt.DEFAULT_PERCENTILE,
                   help="dataset-similarity percentile")
    p.add_argument("--threshold", type=float,
                   default=mt.DEFAULT_REPLICATION_THRESHOLD,
                   help="replication flagging threshold on top-1 score")
    p.add_argument("--csv", help="optional per-query CSV output")
    p.add_argument("--exclude-self", action="store_true",
                   help="skip reference rows whose id equals the query id")
    p.add_argument("--normalize", action="store_true",
                   help="normalize rows on load instead of failing")
    p.set_defaults(func=cmd_simscore)

    p = sub.add_parser("selfsim", parents=[common], formatter_class=fmt,
                       help="background self-similarity of a dataset with itself")
    p.add_argument("--embeddings", required=True, help="EMB1 input file")
    p.add_argument("--out", required=True, help="JSON output")
    p.add_argument("--percentile", type=float, default=mt.DEFAULT_PERCENTILE,
                   help="dataset-similarity percentile")
    p.add_argument("--normalize", action="store_true",
                   help="normalize rows on load instead of failing")
    p.set_defaults(func=cmd_selfsim)

    p = sub.add_parser(
        "complexity", parents=[common], formatter_class=fmt,
        help="score image complexity (entropy bits, JPEG bytes)",
        epilog="Images are standardized to 256x256 (shortest side resized, "
               "center crop) before scoring.")
    p.add_argument("--images", help="directory of <id>.<ext> image files")
    p.add_argument("--manifest", help="JSONL {id, path} image manifest")
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--quality", type=int, default=cx.DEFAULT_JPEG_QUALITY,
                   help="JPEG quality for the compressibility metric")
    p.add_argument("--gray", choices=["luma", "mean"], default="luma",
                   help="grayscale conversion for histogram entropy")
    p.add_argument("--report", help="similarity report JSON to correlate against")
    p.add_argument("--corr-out", help="correlation JSON output "
                                      "(default: <out>.corr.json)")
    p.add_argument("--corr-method", choices=["pearson", "spearman"],
                   default="pearson", help="correlation estimator")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser(
        "mitigate", parents=[common], formatter_class=fmt,
        help="apply a caption/conditioning mitigation strategy",
        epilog="Strategies: mc samples from {id, captions} pools; gn noises "
               "EMB1 embeddings; rc/rt/cwr/rna transform {id, caption} rows; "
               "fixed/class/random emit conditioning captions (class reads "
               "the class name from the caption field).")
    p.add_argument("--strategy", required=True,
                   choices=list(mg.STRATEGIES) + list(SCHEMES))
    p.add_argument("--input", required=True,
                   help="captions JSONL, pools JSONL (mc), or EMB1 file (gn)")
    p.add_argument("--out", required=True)
    p.add_argument("--prob", type=float, default=None,
                   help="trigger probability (default: 0.4 for rc/cwr/rna, "
                        "0.1 for rt)")
    p.add_argument("--repeats", type=int, default=None,
                   help="rounds for rt/cwr/rna (default: 2 at train phase, "
                        "4 at inference phase)")
    p.add_argument("--phase", choices=["train", "inference"], default="train",
                   help="selects the stock repeat count")
    p.add_argument("--noise-scale", type=float, default=mg.DEFAULT_NOISE_SCALE,
                   help="gn noise scale")
    p.add_argument("--number-range", type=int, default=mg.DEFAULT_NUMBER_RANGE,
                   help="rna samples integers from [0, number_range)")
    p.add_argument("--vocab", help="newline-delimited token file "
                                   "(default: packaged ~10k-word list)")
    p.add_argument("--per-token", action="store_true",
                   help="rt only: roll the trigger per token position "
                        "instead of once per round")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("manifest", parents=[common], formatter_class=fmt,
                       help="build a duplication-regime training manifest")
    p.add_argument("--records", required=True, help="captions JSONL {id, caption}")
    p.add_argument("--dup-ids", help="newline-delimited duplicate-flagged ids")
    p.add_argument("--ddf", type=float, default=1.0,
                   help="data duplication factor (sampling weight for duplicates)")
    p.add_argument("--mode", choices=list(mf.MODES), default="full")
    p.add_argument("--pools", help="JSONL {id, captions} pools for partial mode")
    p.add_argument("--out", required=True)
    p.add_argument("--expanded", action="store_true",
                   help="write replicated rows instead of weights")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("sample", parents=[common], formatter_class=fmt,
                       help="draw a weighted epoch sample from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-draws", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--caption-mode", choices=["round_robin", "iid"],
                   default="round_robin",
                   help="caption pick per duplicate draw in partial mode")
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
