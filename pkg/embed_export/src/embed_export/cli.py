"""Command-line entry: encode a manifest of images or captions to EMB1."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, ExportError, export_image_embeddings, \
    export_text_embeddings, read_manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Run a pretrained or built-in encoder over a manifest "
                    "and write an EMB1 embedding file plus its .ids sidecar.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--model", required=True,
                        help="encoder id: pixelstats | hashed-bow | "
                             "torchvision:<arch> | st:<model>")
    parser.add_argument("--manifest", required=True,
                        help="JSONL rows {id, path} (images) or {id, caption} (text)")
    parser.add_argument("--out", required=True, help="EMB1 output path")
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args(argv)

    try:
        kind, _ = read_manifest(args.manifest)
        job = ExportJob(model=args.model, manifest=args.manifest,
                        output=args.out, batch_size=args.batch_size)
        if kind == "image":
            result = export_image_embeddings(job)
        else:
            result = export_text_embeddings(job)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{result.n_rows} row(s) x {result.dim} dims -> {args.out}"
          + (f" ({len(result.skipped)} skipped)" if result.skipped else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
