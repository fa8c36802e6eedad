"""Command-line interface.

Exit codes: 0 success, 1 validation or check failure (including unreadable
inputs), 2 usage error. Machine-readable reports go to stdout as JSON and
human summaries to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gradsuite
from .augment import AugmentError, load_spec, run_pipeline
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gabor import bench_bank, enhance_classical
from .io import ImageFormatError, atomic_write, load_image, save_image
from .network import (NetworkConfig, ShapeError, build_network, canonical_config, enhance_image, scaled_config,
                      validate_shapes)
from .seeding import derive_seed

IMAGE_EXTS = (".png", ".pgm", ".pnm")
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    return max(1, int(os.environ.get("LATENTFP_THREADS", "1")))


def _list_images(root: str) -> list[str]:
    """Image paths under ``root`` relative to it, sorted for a stable order."""
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.lower().endswith(IMAGE_EXTS):
                found.append(os.path.relpath(os.path.join(dirpath, name), root))
    return sorted(found)


def _inputs(path: str) -> tuple[str, list[str]]:
    if os.path.isdir(path):
        return path, _list_images(path)
    if os.path.isfile(path):
        return os.path.dirname(path) or ".", [os.path.basename(path)]
    raise UsageError(f"input {path!r} does not exist")


def _out_dir(path: str, inputs_root: str) -> str:
    out = os.path.abspath(path)
    if out == os.path.abspath(inputs_root):
        raise UsageError("output directory must differ from the input directory")
    os.makedirs(out, exist_ok=True)
    return out


def _side_by_side(before: np.ndarray, after: np.ndarray, gap: int = 4) -> np.ndarray:
    sep = np.ones((before.shape[0], gap))
    return np.concatenate([before, sep, after], axis=1)


def _run_parallel(fn, items, workers: int) -> list:
    if workers == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# -- subcommands ----------------------------------------------------------------

def cmd_enhance(args) -> int:
    root, files = _inputs(args.input)
    out_dir = _out_dir(args.output, root)
    if args.mode == "network":
        if not args.checkpoint:
            raise UsageError("--mode network requires --checkpoint")
        if not os.path.isfile(args.checkpoint):
            raise UsageError(f"checkpoint {args.checkpoint!r} does not exist")
        net = load_checkpoint(args.checkpoint)
        run = lambda img: enhance_image(net, img, tile=args.tile)  # noqa: E731
    else:
        run = lambda img: enhance_classical(img, block_size=args.block_size, ksize=args.ksize,  # noqa: E731
                                            sigma=args.sigma, mask_threshold=args.mask_threshold)

    def one(rel: str) -> dict:
        img = load_image(os.path.join(root, rel))
        out = np.clip(run(img), 0.0, 1.0)
        target = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(target), exist_ok=True)
        save_image(out, target, depth=args.depth)
        entry = {"input": rel, "output": os.path.relpath(target, out_dir)}
        if args.pairs:
            stem, ext = os.path.splitext(target)
            save_image(_side_by_side(img, out), stem + "_pair" + ext, depth=args.depth)
            entry["pair"] = os.path.relpath(stem + "_pair" + ext, out_dir)
        return entry

    entries = _run_parallel(one, files, _workers(args.workers))
    print(json.dumps({"mode": args.mode, "files": entries}, indent=2))
    print(f"enhanced {len(entries)} image(s) into {out_dir}", file=sys.stderr)
    return 0


def cmd_augment(args) -> int:
    if not os.path.isfile(args.spec):
        raise UsageError(f"spec {args.spec!r} does not exist")
    root, files = _inputs(args.input)
    spec = load_spec(args.spec)
    master = spec.master_seed if args.seed is None else args.seed
    out_dir = _out_dir(args.output, root)

    def one(rel: str) -> dict:
        # per-file seed from the relative path so adding files never reshuffles others
        seed = derive_seed(master, zlib.crc32(rel.replace(os.sep, "/").encode("utf-8")))
        img = load_image(os.path.join(root, rel))
        results = []
        for k in range(args.copies):
            out, log = run_pipeline(img, spec.with_seed(derive_seed(seed, k)))
            stem, ext = os.path.splitext(rel)
            name = rel if args.copies == 1 else f"{stem}_{k:03d}{ext}"
            target = os.path.join(out_dir, name)
            os.makedirs(os.path.dirname(target), exist_ok=True)
            save_image(out, target, depth=args.depth)
            results.append({"input": rel.replace(os.sep, "/"), "output": name.replace(os.sep, "/"),
                            "seed": derive_seed(seed, k), "ops": log})
        return results

    entries = [e for group in _run_parallel(one, files, _workers(args.workers)) for e in group]
    manifest = {"master_seed": master, "spec": spec.to_dict(), "files": entries}
    atomic_write(os.path.join(out_dir, "manifest.json"),
                 (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    print(json.dumps({"outputs": len(entries), "manifest": "manifest.json"}))
    print(f"wrote {len(entries)} augmented image(s) into {out_dir}", file=sys.stderr)
    return 0


def _parse_shape(text: str) -> tuple[int, int, int, int]:
    try:
        dims = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad --input {text!r}; expected HxW or NxCxHxW") from None
    if len(dims) == 2:
        return (1, 1) + dims
    if len(dims) == 4:
        return dims
    raise UsageError(f"bad --input {text!r}; expected HxW or NxCxHxW")


def cmd_validate_arch(args) -> int:
    shape = _parse_shape(args.input)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = NetworkConfig.from_dict(json.load(fh))
    elif args.divisor > 1:
        cfg = scaled_config(args.divisor)
    else:
        cfg = canonical_config()
    try:
        net = build_network(cfg, materialize=False)
        report = validate_shapes(net, shape)
    except ShapeError as exc:
        print(json.dumps({"ok": False, "layer": exc.layer_id, "error": str(exc)}))
        print(f"shape mismatch: {exc}", file=sys.stderr)
        return 1
    doc = json.loads(report.to_json())
    doc["ok"] = True
    doc["summary"] = report.summary_lines()
    print(json.dumps(doc, indent=2))
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else gradsuite.DEFAULT_SEEDS
    except ValueError:
        raise UsageError(f"bad --seeds {args.seeds!r}; expected comma-separated integers") from None
    if args.inject_fault is not None and args.inject_fault not in gradsuite.CASES:
        raise UsageError(f"unknown operator {args.inject_fault!r}")
    report = gradsuite.run_suite(seeds, fault=args.inject_fault)
    print(json.dumps(report.to_dict(), indent=2))
    for r in report.results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.op:<17} seed={r.seed} max_rel_err={r.max_rel_err:.2e} tol={r.tolerance:.0e}",
              file=sys.stderr)
    if not report.passed:
        print("failing operators: " + ", ".join(report.failing_ops()), file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    rep = bench_bank(args.size, args.size, args.filters, args.batch, args.reps, args.ksize, args.seed)
    print(rep.to_json())
    print(f"naive {rep.naive_median_s:.3f}s  batched {rep.batched_median_s:.3f}s  speedup {rep.speedup:.1f}x",
          file=sys.stderr)
    return 0


def cmd_init_checkpoint(args) -> int:
    cfg = scaled_config(args.divisor, seed=args.seed) if args.divisor > 1 else canonical_config(seed=args.seed)
    save_checkpoint(build_network(cfg), args.output)
    print(json.dumps({"checkpoint": args.output, "divisor": args.divisor, "seed": args.seed}))
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentfp", description="Latent fingerprint enhancement toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enhance", help="enhance an image or a directory of images")
    e.add_argument("input", help="image file or directory")
    e.add_argument("-o", "--output", required=True, help="output directory")
    e.add_argument("--mode", choices=("classical", "network"), default="classical")
    e.add_argument("--checkpoint", help="network checkpoint (required for --mode network)")
    e.add_argument("--pairs", action="store_true", help="also write before/after side-by-side images")
    e.add_argument("--block-size", type=int, default=16)
    e.add_argument("--ksize", type=int, default=25)
    e.add_argument("--sigma", type=float, default=4.0)
    e.add_argument("--mask-threshold", type=float, default=0.3)
    e.add_argument("--tile", type=int, default=64, help="network tile size (multiple of 16)")
    e.add_argument("--depth", type=int, choices=(8, 16), default=8)
    e.add_argument("--workers", type=int, help="parallel files (default: $LATENTFP_THREADS or 1)")
    e.set_defaults(func=cmd_enhance)

    a = sub.add_parser("augment", help="apply an augmentation spec to a directory of images")
    a.add_argument("input", help="image file or directory")
    a.add_argument("-o", "--output", required=True, help="output directory")
    a.add_argument("--spec", required=True, help="AugmentSpec JSON file")
    a.add_argument("--seed", type=int, help="override the spec's master_seed")
    a.add_argument("--copies", type=int, default=1, help="augmented variants per input")
    a.add_argument("--depth", type=int, choices=(8, 16), default=8)
    a.add_argument("--workers", type=int)
    a.set_defaults(func=cmd_augment)

    v = sub.add_parser("validate-arch", help="symbolically check the network graph")
    v.add_argument("--input", default="64x64", help="HxW or NxCxHxW (default 64x64)")
    v.add_argument("--config", help="NetworkConfig JSON (default: canonical)")
    v.add_argument("--divisor", type=int, default=1, help="divide channel widths by this factor")
    v.set_defaults(func=cmd_validate_arch)

    g = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    g.add_argument("--seeds", help="comma-separated seeds (default 0,1,2)")
    g.add_argument("--inject-fault", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bench", help="time the naive and batched Gabor bank")
    b.add_argument("--size", type=int, default=512)
    b.add_argument("--filters", type=int, default=8)
    b.add_argument("--batch", type=int, default=1)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--ksize", type=int, default=15)
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("init-checkpoint", help="write a randomly initialized network checkpoint")
    c.add_argument("output")
    c.add_argument("--divisor", type=int, default=1, help="divide channel widths by this factor")
    c.add_argument("--seed", type=int, default=DEFAULT_SEED)
    c.set_defaults(func=cmd_init_checkpoint)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"latentfp: error: {exc}", file=sys.stderr)
        return 2
    except (ImageFormatError, CheckpointError, AugmentError, ShapeError, ValueError, OSError) as exc:
        print(f"latentfp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
