"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 validation or runtime failure.
The environment variable ``CPCA_THREADS`` caps kernel parallelism (it is
applied to the BLAS thread-count variables before numerical modules load;
``CPCA_THREADS=1`` gives the strictest determinism mode).

Heavy imports happen inside the subcommand handlers so the thread cap can
take effect first.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _apply_thread_cap() -> None:
    cap = os.environ.get("CPCA_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = cap


def build_parser() -> _Parser:
    parser = _Parser(prog="cpcanet", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides train.seed from the config)")
    common.add_argument("--precision", choices=("f32", "f64"), default=None,
                        help="numeric precision (default: f32 for train/infer, f64 otherwise)")
    common.add_argument("--config", default=None,
                        help="key = value config file; '-' reads stdin")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory (img/msk PGM pairs)")
    p.add_argument("--out", required=True, help="output directory for log.csv and checkpoints")
    p.add_argument("--save-every", type=int, default=None,
                   help="checkpoint every N epochs (default from config)")
    p.set_defaults(func=_cmd_train, default_precision="f32")

    p = sub.add_parser("infer", parents=[common], help="sliding-window prediction")
    p.add_argument("--image", required=True, help="input PGM image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-mask", required=True, help="output mask PGM path")
    p.add_argument("--out-prob", default=None, help="optional CPCT probability output")
    p.add_argument("--crop", type=int, default=None, help="square crop size override")
    p.add_argument("--stride-factor", type=float, default=None)
    p.add_argument("--sigma-factor", type=float, default=None)
    p.set_defaults(func=_cmd_infer, default_precision="f32")

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="predicted mask PGM file or directory")
    p.add_argument("--gt", required=True, help="ground-truth mask PGM file or directory")
    p.add_argument("--classes", type=int, default=None,
                   help="class count (default from config network.num_classes)")
    p.add_argument("--spacing", default="1,1", help="pixel spacing as 'sy,sx'")
    p.set_defaults(func=_cmd_eval, default_precision="f64")

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of every differentiable op")
    p.add_argument("--step", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    p.set_defaults(func=_cmd_gradcheck, default_precision="f64")

    p = sub.add_parser("flops", parents=[common], help="parameter and FLOP ledger")
    p.add_argument("--csv", default=None, help="also write the ledger as CSV ('-' = stdout)")
    p.set_defaults(func=_cmd_flops, default_precision="f64")

    p = sub.add_parser("synth-data", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-samples", type=int, default=8)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--family", choices=("disks", "rings", "strips"), default="rings")
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.set_defaults(func=_cmd_synth, default_precision="f64")

    p = sub.add_parser("dump-config", parents=[common],
                       help="print the fully resolved configuration")
    p.set_defaults(func=_cmd_dump_config, default_precision="f64")
    return parser


def _setup(args):
    """Apply precision, load the run config, fold in --seed."""
    from .config import default_run_config, load_config_file
    from .tensor import set_default_dtype

    set_default_dtype(args.precision or args.default_precision)
    cfg = load_config_file(args.config) if args.config else default_run_config()
    if args.seed is not None:
        cfg.train.seed = args.seed
    cfg.validate()
    return cfg


def _cmd_train(args) -> int:
    from .data import load_dataset
    from .errors import ConfigError
    from .network import build_network
    from .train import fit

    cfg = _setup(args)
    if args.save_every is not None:
        cfg.train.save_every = args.save_every
    samples = load_dataset(args.data)
    if samples[0].num_classes != cfg.network.num_classes:
        raise ConfigError(
            f"dataset has {samples[0].num_classes} classes but network.num_classes "
            f"is {cfg.network.num_classes}; set network.num_classes in the config"
        )
    model = build_network(cfg.network, cfg.variant, seed=cfg.train.seed)

    def progress(rec):
        print(f"epoch {rec.epoch:4d}  loss {rec.loss:.6f}  dsc_mean {rec.dsc_mean:.2f}")

    log = fit(model, samples, cfg.train, cfg.loss, out_dir=args.out, progress=progress)
    last = log.records[-1]
    print(f"done: {len(log.records)} epochs, final loss {last.loss:.6f}, "
          f"mean foreground DSC {last.dsc_mean:.2f}")
    print(f"wrote {Path(args.out) / 'log.csv'} and {Path(args.out) / 'ckpt_final.cpck'}")
    return 0


def _cmd_infer(args) -> int:
    from .checkpoint import load_state_into, save_tensor_file
    from .errors import ConfigError
    from .inference import sliding_window_predict
    from .network import build_network
    from .pgm import read_image_pgm, write_mask_pgm
    from .tensor import default_dtype

    cfg = _setup(args)
    if args.crop is not None:
        cfg.infer.crop_h = cfg.infer.crop_w = args.crop
    if args.stride_factor is not None:
        cfg.infer.stride_factor = args.stride_factor
    if args.sigma_factor is not None:
        cfg.infer.sigma_factor = args.sigma_factor
    cfg.infer.validate()
    if cfg.network.in_channels != 1:
        raise ConfigError("PGM input is single-channel; set network.in_channels = 1")
    model = build_network(cfg.network, cfg.variant, seed=cfg.train.seed)
    load_state_into(model, args.checkpoint)
    image = read_image_pgm(args.image)
    prob, mask = sliding_window_predict(model, image, cfg.infer)
    write_mask_pgm(mask, args.out_mask)
    print(f"wrote {args.out_mask}")
    if args.out_prob:
        save_tensor_file(args.out_prob, prob.astype(default_dtype()))
        print(f"wrote {args.out_prob}")
    return 0


def _collect_mask_pairs(pred, gt):
    from .errors import ConfigError

    pred, gt = Path(pred), Path(gt)
    if pred.is_dir() != gt.is_dir():
        raise ConfigError("--pred and --gt must both be files or both directories")
    if not pred.is_dir():
        return [(pred, gt)]
    pairs = []
    for p in sorted(pred.glob("*.pgm")):
        q = gt / p.name
        if not q.exists():
            raise ConfigError(f"missing ground truth for {p.name}")
        pairs.append((p, q))
    if not pairs:
        raise ConfigError(f"no .pgm files in {pred}")
    return pairs


def _cmd_eval(args) -> int:
    import numpy as np

    from . import metrics
    from .pgm import read_mask_pgm

    cfg = _setup(args)
    k = args.classes if args.classes is not None else cfg.network.num_classes
    spacing = tuple(float(s) for s in args.spacing.split(","))
    pairs = _collect_mask_pairs(args.pred, args.gt)
    rows = []
    for c in range(k):
        d = i = h = 0.0
        for p, q in pairs:
            pm, gm = read_mask_pgm(p), read_mask_pgm(q)
            d += metrics.dsc(pm, gm, c)
            i += metrics.iou(pm, gm, c)
            h += metrics.hd95(pm, gm, spacing, c)
        n = len(pairs)
        rows.append((c, d / n, i / n, h / n))
    print(f"{'class':>5}  {'DSC':>8}  {'IoU':>8}  {'HD95':>10}")
    for c, d, i, h in rows:
        print(f"{c:>5}  {d:8.3f}  {i:8.3f}  {h:10.4f}")
    fg = rows[1:] if len(rows) > 1 else rows
    print(f"{'mean':>5}  {np.mean([r[1] for r in fg]):8.3f}  "
          f"{np.mean([r[2] for r in fg]):8.3f}  {np.mean([r[3] for r in fg]):10.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    _setup(args)
    reports = run_suite(h=args.step, tol=args.tol, seed=args.seed or 0)
    width = max(len(r.name) for r in reports)
    print(f"{'op':<{width}}  {'max_rel_err':>12}  {'tol':>8}  status")
    ok = True
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        ok = ok and r.passed
        print(f"{r.name:<{width}}  {r.max_rel_error:>12.3e}  {r.tol:>8.1e}  {status}")
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def _cmd_flops(args) -> int:
    from .network import build_network, count_flops

    cfg = _setup(args)
    model = build_network(cfg.network, cfg.variant, seed=cfg.train.seed)
    shape = (1, cfg.network.in_channels, cfg.infer.crop_h, cfg.infer.crop_w)
    report = count_flops(model, shape)
    print(report.to_text())
    if args.csv == "-":
        print(report.to_csv(), end="")
    elif args.csv:
        Path(args.csv).write_text(report.to_csv())
        print(f"wrote {args.csv}")
    return 0


def _cmd_synth(args) -> int:
    from .synth import SynthSpec, write_dataset

    _setup(args)
    spec = SynthSpec(
        num_samples=args.num_samples,
        image_size=args.image_size,
        num_classes=args.classes,
        family=args.family,
        noise_sigma=args.noise_sigma,
        seed=args.seed if args.seed is not None else 0,
    )
    write_dataset(spec, args.out)
    print(f"wrote {spec.num_samples} samples to {args.out}")
    return 0


def _cmd_dump_config(args) -> int:
    from .config import dump_config

    cfg = _setup(args)
    print(dump_config(cfg), end="")
    return 0


def run_cli(argv=None) -> int:
    """Parse argv and execute; returns the process exit code."""
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    from .errors import CpcaError

    try:
        return args.func(args)
    except CpcaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
