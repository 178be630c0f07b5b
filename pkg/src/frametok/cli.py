"""Command-line front end.

Subcommands: synth, synth-corpus, compress, profile, gradcheck,
train-demo, bench, dump. Reports are JSON with a `config` echo block.
Exit codes: 0 ok, 2 validation error, 3 numeric/training error.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import pipeline, redundancy
from .cce import budget_accounting
from .errors import FrametokError, ValidationError
from .storage import load_config, read_tensor, write_tensor

GRADCHECK_SAMPLES = 50000
GRADCHECK_TOL = 1e-4


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(args):
    spec = pipeline.load_spec(args.spec)
    frames, text, truth = pipeline.generate_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    write_tensor(os.path.join(args.out, "frames.dft"), frames)
    write_tensor(os.path.join(args.out, "text.dft"), text)
    write_tensor(os.path.join(args.out, "truth.dft"), truth)
    print(json.dumps({"written": args.out, "frames": list(frames.shape),
                      "config": spec.__dict__}))
    return 0


def cmd_synth_corpus(args):
    planted = pipeline.plant_profile_corpus(
        args.out, args.videos, args.frames, args.dim,
        args.dup, args.irrelevant, args.seed,
    )
    print(json.dumps(planted))
    return 0


def cmd_compress(args):
    cfg = load_config(args.config)
    frames = read_tensor(args.frames)
    text = read_tensor(args.text)
    if args.params:
        params = pipeline.load_params(cfg, args.params, frames.dtype)
    else:
        params = pipeline.init_params(cfg, frames.dtype)
    seq, report = pipeline.compress(frames, text, params, cfg, args.mode)
    os.makedirs(args.out, exist_ok=True)
    pipeline.write_tokens(seq, args.out)
    _write_json(os.path.join(args.out, "report.json"), report)
    print(json.dumps({
        "total_tokens": report["budget"]["total_tokens"],
        "selected_frames": report["selected_frames"],
        "out": args.out,
    }))
    return 0


def cmd_profile(args):
    cfg = load_config(args.config)
    report = redundancy.profile_corpus(
        args.corpus, args.sample, args.seed,
        cfg.r_d_threshold, cfg.r_a_threshold,
    )
    payload = redundancy.report_dict(report, {
        "sample_n": args.sample,
        "seed": args.seed,
        "r_d_threshold": cfg.r_d_threshold,
        "r_a_threshold": cfg.r_a_threshold,
    })
    _write_json(args.out, payload)
    if args.csv:
        redundancy.write_csv(report, args.csv)
    print(json.dumps({"r_d": report.r_d, "r_a": report.r_a,
                      "n_videos": report.n_videos}))
    return 0


def cmd_gradcheck(args):
    cfg = load_config(args.config)
    report = pipeline.selector_gradcheck(
        cfg.d, cfg.P, cfg.L, cfg.K, cfg.sigma, GRADCHECK_SAMPLES, args.seed
    )
    print(json.dumps({
        "max_abs_err": report.max_abs_err,
        "max_rel_err": report.max_rel_err,
        "per_param_errs": report.per_param_errs,
        "tolerance": GRADCHECK_TOL,
        "config": cfg.to_dict(),
    }, indent=2, sort_keys=True))
    return 0 if report.ok(GRADCHECK_TOL) else 3


def cmd_train_demo(args):
    spec = pipeline.load_spec(args.spec)
    cfg = load_config(args.config)
    result = pipeline.train_demo(spec, cfg, args.steps, args.lr)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "recall"])
        for row in result.curve:
            writer.writerow([row["step"], row["loss"], row["recall"]])
    if args.params_out:
        params = pipeline.init_params(cfg, np.float64)
        params.scorer = result.scorer
        pipeline.save_params(params, args.params_out)
    print(json.dumps({
        "final_recall": result.final_recall,
        "final_loss": result.curve[-1]["loss"],
        "steps": args.steps,
        "curve": args.out,
        "config": cfg.to_dict(),
    }))
    return 0


def cmd_bench(args):
    cfg = load_config(args.config)
    frames = read_tensor(args.frames)
    if frames.ndim != 3:
        raise ValidationError(f"frames must be (T, N, d), got {frames.shape}")
    n_frames, n_patches, _ = frames.shape
    n_fine = min(cfg.K, min(cfg.L, n_frames))
    fine_tokens = cfg.P + cfg.spatial_total + 2
    histogram = {}
    if n_fine:
        histogram[fine_tokens] = n_fine
    if n_frames - n_fine:
        histogram[2] = histogram.get(2, 0) + (n_frames - n_fine)
    payload = budget_accounting(histogram, n_fine, uniform_fine=n_patches)
    payload["config"] = cfg.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_dump(args):
    t = read_tensor(args.file)
    print(json.dumps({
        "dims": list(t.shape),
        "dtype": str(t.dtype),
        "min": float(t.min()),
        "max": float(t.max()),
        "mean": float(t.mean()),
        "std": float(t.std()),
        "first": [float(v) for v in t.reshape(-1)[:8]],
    }, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="frametok",
        description="Compress precomputed video frame features into compact token sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic video (frames/text/truth)")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("synth-corpus", help="plant a redundancy-profiling corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--dup", type=float, required=True)
    p.add_argument("--irrelevant", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth_corpus)

    p = sub.add_parser("compress", help="run the full compression pipeline")
    p.add_argument("--frames", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["infer", "train"], default="infer")
    p.add_argument("--params", default=None, help="directory of .dft parameter dumps")
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("profile", help="redundancy ratios over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--sample", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("gradcheck", help="finite-difference check of the selector chain")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("train-demo", help="train the scorer on a synthetic video")
    p.add_argument("--spec", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--params-out", default=None)
    p.set_defaults(fn=cmd_train_demo)

    p = sub.add_parser("bench", help="token budget accounting vs flat baselines")
    p.add_argument("--frames", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("dump", help="human-readable .dft header and stats")
    p.add_argument("--file", required=True)
    p.set_defaults(fn=cmd_dump)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.fn(args)
    except FrametokError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return code


if __name__ == "__main__":
    sys.exit(main())
