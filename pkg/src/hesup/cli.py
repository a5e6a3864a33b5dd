"""Command-line entry point: ``hesup <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .data import generate_dataset, load_manifest, normalize, read_pgm, split_dataset
from .errors import HesupError
from .gradcheck import gradcheck_suite
from .he_block import HEConfig
from .model import BackboneConfig, build_model, predict
from .train import TrainConfig, evaluate, load_checkpoint, train_loop

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_TOL = 1e-5
DEFAULT_STAGES = "8,32,64,128"  # the desk-scale network used by the acceptance replica

log = logging.getLogger("hesup")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return vals


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.lr0, help="initial learning rate")
    p.add_argument("--batch", type=int, default=TrainConfig.batch_size)
    p.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    p.add_argument("--weight-decay", type=float, default=TrainConfig.weight_decay)
    p.add_argument("--apply-prob", type=float, default=HEConfig.apply_prob)
    p.add_argument("--stages", type=_ints, default=_ints(DEFAULT_STAGES), help="stage widths, e.g. 16,32,64")
    p.add_argument("--residual", action="store_true", help="identity skips inside each stage")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit one JSON object on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hesup", description="HE-block font recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="render the synthetic glyph dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--fonts", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--holdout", type=int, default=6, help="test glyphs per font")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=HEConfig.beta)
    p.add_argument("--no-he", action="store_true", help="disable the HE block")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)

    p = sub.add_parser("eval", parents=[common], help="top-1/top-5 accuracy of a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])

    p = sub.add_parser("predict", parents=[common], help="rank fonts for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--topk", type=int, default=5)

    p = sub.add_parser("ablate-beta", parents=[common], help="sweep beta over several seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--betas", type=_floats, default=_floats("1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3"))
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, 0..N-1")
    p.add_argument("--json-out", help="also write the JSON result to this file")
    _add_train_flags(p)

    sub.add_parser("gradcheck", parents=[common], help="run the gradient oracle suite")
    return parser


# -- commands -------------------------------------------------------------------

def _train_config(args, beta, seed, enabled=True):
    he = HEConfig(beta=beta, apply_prob=args.apply_prob, enabled=enabled)
    return TrainConfig(
        lr0=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch,
        he=he,
        seed=seed,
    )


def _backbone(args, dataset):
    return BackboneConfig(
        tuple(args.stages),
        num_classes=dataset.num_classes,
        residual=args.residual,
        input_size=dataset.image_size,
    )


def cmd_gen_data(args):
    t0 = time.perf_counter()
    m = generate_dataset(args.fonts, size=args.size, seed=args.seed, out_dir=args.out)
    m = split_dataset(m, args.holdout, seed=args.seed)
    m.save(args.out)
    res = {
        "out": str(args.out),
        "fonts": len(m.fonts),
        "samples": len(m.samples),
        "train": len(m.split["train"]),
        "test": len(m.split["test"]),
        "seconds": round(time.perf_counter() - t0, 2),
    }
    text = f"wrote {res['samples']} images ({res['train']} train / {res['test']} test) to {args.out}"
    return res, text


def cmd_train(args):
    m = load_manifest(args.data)
    cfg = _train_config(args, args.beta, args.seed, enabled=not args.no_he)
    model = build_model(_backbone(args, m), seed=args.seed)
    ckpt = train_loop(model, m, cfg, out_path=args.out)
    last = ckpt.history[-1]
    res = {"ckpt": str(args.out), "epochs": ckpt.epoch, **{k: last[k] for k in last if k != "epoch"}}
    text = f"saved {args.out} after {ckpt.epoch} epochs, train loss {last['train_loss']:.4f}"
    if "test_top1" in last:
        text += f", test top-1 {last['test_top1']:.2f} top-5 {last['test_top5']:.2f}"
    return res, text


def cmd_eval(args):
    m = load_manifest(args.data)
    model = load_checkpoint(args.ckpt).model()
    top1, top5 = evaluate(model, m, args.split)
    res = {"split": args.split, "top1": top1, "top5": top5}
    return res, f"{args.split}: top-1 {top1:.2f}  top-5 {top5:.2f}"


def cmd_predict(args):
    model = load_checkpoint(args.ckpt).model()
    img = normalize(read_pgm(args.image))
    k = min(args.topk, model.config.num_classes)
    top, scores = predict(model, img, k=k)
    ranked = [{"class": int(c), "score": float(scores[c])} for c in top]
    lines = [f"{i + 1:>2}  font {r['class']:>3}  {r['score']:+.4f}" for i, r in enumerate(ranked)]
    return {"image": str(args.image), "ranking": ranked}, "\n".join(lines)


def ablate_beta(dataset, betas, seeds, args):
    """Train one model per (beta, seed); returns rows of mean accuracies."""
    rows = []
    for beta in betas:
        runs = []
        for seed in range(seeds):
            model = build_model(_backbone(args, dataset), seed=seed)
            train_loop(model, dataset, _train_config(args, beta, seed))
            runs.append(evaluate(model, dataset, "test"))
            log.info("beta %.2f seed %d -> %s", beta, seed, runs[-1])
        top1 = [r[0] for r in runs]
        top5 = [r[1] for r in runs]
        rows.append(
            {
                "beta": beta,
                "top1_mean": float(np.mean(top1)),
                "top5_mean": float(np.mean(top5)),
                "top1": top1,
                "top5": top5,
            }
        )
    return rows


def cmd_ablate_beta(args):
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    if not args.betas:
        raise UsageError("--betas is empty")
    m = load_manifest(args.data)
    rows = ablate_beta(m, args.betas, args.seeds, args)
    res = {"seeds": args.seeds, "epochs": args.epochs, "rows": rows}
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(res, fh, indent=2)
    lines = [f"{'beta':>6}  {'top-1':>6}  {'top-5':>6}"]
    lines += [f"{r['beta']:>6.2f}  {r['top1_mean']:>6.2f}  {r['top5_mean']:>6.2f}" for r in rows]
    return res, "\n".join(lines)


def cmd_gradcheck(args):
    errors = gradcheck_suite()
    worst = max(errors.values())
    ok = worst < GRADCHECK_TOL
    lines = [f"{name:<28} {err:.2e}" for name, err in errors.items()]
    lines.append(f"max relative error {worst:.2e} ({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOL:.0e})")
    res = {"errors": errors, "max": worst, "tolerance": GRADCHECK_TOL, "ok": ok}
    return res, "\n".join(lines), (EXIT_OK if ok else EXIT_RUNTIME)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate-beta": cmd_ablate_beta,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None):
    """Parse ``argv`` and dispatch; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        out = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hesup {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HesupError, OSError, ValueError) as exc:
        _report(args, exc)
        return EXIT_RUNTIME
    res, text, *code = out
    if args.json:
        print(json.dumps({"command": args.command, **res}))
    else:
        print(text)
    return code[0] if code else EXIT_OK


def _report(args, exc):
    err = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(err) if args.json else f"hesup {args.command}: {err['error']}: {err['message']}", file=sys.stderr)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
