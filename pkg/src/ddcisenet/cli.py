"""Synthetic data, training, reconstruction and evaluation from the shell.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cascade, metrics, storage
from .cascade import CascadeConfig
from .errors import ConfigMismatchError, DDError
from .fourier import ifft2c
from .phantom import generate_dataset, rss_combine
from .sampling import PATTERNS, SamplingMask, apply_mask, make_mask
from .tensor_core import make_rng
from .training import TrainConfig, prepare_samples, train


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _even_int(text: str) -> int:
    v = _positive_int(text)
    if v % 2:
        raise argparse.ArgumentTypeError(f"must be even, got {v}")
    return v


def _slice(text: str) -> slice:
    try:
        lo, hi = text.split(":")
        return slice(int(lo) if lo else None, int(hi) if hi else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None


def _add_mask_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--accel", type=float, default=4.0, help="acceleration factor R (default 4)")
    p.add_argument("--center-frac", type=float, default=0.08, help="fully sampled centre fraction (default 0.08)")
    p.add_argument("--pattern", choices=PATTERNS, default="random_lines")
    p.add_argument("--seed", type=int, default=0, help="seed for masks (and initialisation when training)")
    p.add_argument("--cases", type=_slice, default=slice(None), help="START:STOP subset of the dataset cases")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddcisenet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic multi-coil dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=_positive_int, default=24)
    p.add_argument("--size", type=_even_int, default=64)
    p.add_argument("--coils", type=_positive_int, default=4)
    p.add_argument("--jitter", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mask", help="write a Cartesian column mask as a 1x1xW tensor file")
    p.add_argument("--width", type=_even_int, required=True)
    p.add_argument("--accel", type=float, default=4.0)
    p.add_argument("--center-frac", type=float, default=0.08)
    p.add_argument("--pattern", choices=PATTERNS, default="random_lines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train", help="train a cascade and write a checkpoint")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint path")
    p.add_argument("--iters", type=_positive_int, default=2, help="cascade iterations N")
    p.add_argument("--cir", type=_bool, default=True, help="cross-iteration residuals on/off")
    p.add_argument("--epochs", type=_positive_int, default=None, help="default 1, or enough to reach --max-steps")
    p.add_argument("--max-steps", type=_positive_int, default=None)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=_positive_int, default=1)
    p.add_argument("--hidden", type=_positive_int, default=32)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--reduction", type=_positive_int, default=8, help="squeeze-excitation reduction ratio")
    p.add_argument("--resample-masks", type=_bool, default=True, help="fresh mask per epoch and case")
    p.add_argument("--log-every", type=int, default=10)
    _add_mask_args(p)

    p = sub.add_parser("reconstruct", help="reconstruct one k-space file with a checkpoint")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--kspace", required=True, type=Path)
    p.add_argument("--mask", required=True, type=Path)
    p.add_argument("--out-img", required=True, type=Path)
    p.add_argument("--out-k", required=True, type=Path)

    p = sub.add_parser("evaluate", help="score one or two checkpoints against a dataset")
    p.add_argument("--ckpt", required=True, type=Path, action="append", help="give twice for a paired t-test")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--report", required=True, type=Path)
    _add_mask_args(p)
    return parser


def _samples(args):
    gts, _ = storage.load_dataset(args.data)
    start = args.cases.start or 0
    chosen = gts[args.cases]
    if not chosen:
        raise DDError("no cases selected from the dataset")
    return prepare_samples(chosen, args.accel, args.center_frac, args.pattern, seed=args.seed, start=start)


def cmd_phantom(args) -> int:
    gts = generate_dataset(args.n, args.size, args.size, args.coils, args.jitter, seed=args.seed)
    config = {"n": args.n, "size": args.size, "coils": args.coils, "jitter": args.jitter, "seed": args.seed}
    storage.save_dataset(gts, args.out, config)
    print(f"cases={args.n} out={args.out}")
    return 0


def cmd_mask(args) -> int:
    mask = make_mask(args.width, args.accel, args.center_frac, args.pattern, make_rng(args.seed), seed=args.seed)
    storage.write_tensor(args.out, mask.as_float())
    print(f"sampled={mask.n_sampled} width={mask.width}")
    return 0


def cmd_train(args) -> int:
    samples = _samples(args)
    coils = samples[0].k_sparse.shape[0]
    ccfg = CascadeConfig.for_coils(coils, hidden=args.hidden, reduction=args.reduction, blocks=args.blocks, iterations=args.iters, cir_enabled=args.cir)
    epochs = args.epochs
    if epochs is None:
        per_epoch = -(-len(samples) // args.batch_size)
        epochs = 1 if args.max_steps is None else -(-args.max_steps // per_epoch)
    tcfg = TrainConfig(
        epochs=epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        lr=args.lr,
        max_steps=args.max_steps,
        checkpoint_path=str(args.out),
        log_every=args.log_every,
        resample_masks=args.resample_masks,
    )
    res = train(samples, tcfg, ccfg)
    print(f"steps={res.state.step} final_loss={res.history[-1]:.6e}")
    return 0


def cmd_reconstruct(args) -> int:
    ckpt = storage.load_checkpoint(args.ckpt)
    k = storage.read_tensor(args.kspace)
    cols = storage.read_tensor(args.mask)
    if not np.iscomplexobj(k):
        k = k.astype(np.complex128)
    if k.ndim == 2:
        k = k[None]
    if k.ndim != 3 or k.shape[0] != ckpt.config.coils:
        raise ConfigMismatchError(
            f"config mismatch: checkpoint expects {ckpt.config.coils} coils, k-space has shape {k.shape}"
        )
    mask = SamplingMask.from_columns(cols)
    sample = apply_mask(k, mask)
    trace = cascade.forward(sample, ckpt.params, ckpt.config, record=False)
    k_pred = trace.kspaces[-1]
    img_bytes = storage.pgm_bytes(trace.r_out)
    k_bytes = storage.encode_tensor(k_pred)
    storage.atomic_write(args.out_k, k_bytes)
    try:
        storage.atomic_write(args.out_img, img_bytes)
    except BaseException:
        args.out_k.unlink(missing_ok=True)
        raise
    print(f"out_img={args.out_img} out_k={args.out_k}")
    return 0


def cmd_evaluate(args) -> int:
    if len(args.ckpt) > 2:
        raise DDError("at most two checkpoints can be compared")
    samples = _samples(args)
    reports = []
    for label, path in zip("AB", args.ckpt):
        ckpt = storage.load_checkpoint(path)
        reports.append(metrics.evaluate(samples, ckpt.params, ckpt.config, label=f"{label}:{path.name}"))
    baseline = metrics.evaluate_zero_filling(samples)
    test = None
    if len(reports) == 2:
        test = metrics.paired_t_test(reports[0].column("img_nmse"), reports[1].column("img_nmse"))
    lines = [baseline.table().splitlines()[0], baseline.table().splitlines()[1]]
    lines += [r.table().splitlines()[2] for r in [baseline, *reports]]
    for label, r in zip("AB", reports):
        lines.append(f"# model={label} ckpt={r.label.split(':', 1)[1]}")
        lines += r.records()
    if test is not None:
        lines.append(f"paired_t t={test.t:.10g} p={test.p:.10g} n={test.n}")
    text = "\n".join(lines) + "\n"
    storage.atomic_write(args.report, text.encode("utf-8"))
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "phantom": cmd_phantom,
    "mask": cmd_mask,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
