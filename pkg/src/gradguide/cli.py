"""Command line entry point: ``gradguide {synth,train,attack,bench,figure1}``."""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import bench
from .attacks import ifgsm_eps_sweep, run_c_search
from .data import gen_synthetic_2d, load_any, pick_targets, save_datasets
from .exceptions import ParseError, UsageError
from .nn import MLPClassifier, classify, load_weights, save_weights

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _split(splits, which):
    try:
        return splits[which]
    except IndexError:
        raise UsageError(f"data file has {len(splits)} split(s); no split {which}") from None


def cmd_synth(args):
    train, test = gen_synthetic_2d(args.seed, args.n_train, args.n_test, args.margin)
    save_datasets([train, test], args.out)
    print(f"wrote {len(train)} train + {len(test)} test points to {args.out}")


def cmd_train(args):
    splits = load_any(args.data, args.labels)
    train = splits[0]
    clf = MLPClassifier(hidden_layer_sizes=args.hidden, epochs=args.epochs,
                        batch_size=args.batch_size, learning_rate=args.lr,
                        random_state=args.seed, n_classes=train.num_classes)
    clf.fit(train.X, train.y)
    save_weights(clf.model_, args.out)
    print(f"train accuracy: {clf.score(train.X, train.y):.4f}")
    for k, split in enumerate(splits[1:], 1):
        print(f"split {k} accuracy: {clf.score(split.X, split.y):.4f}")
    print(f"wrote {args.out}")


def cmd_attack(args):
    model = load_weights(args.model)
    ds = _split(load_any(args.data, args.labels), args.split)
    if not 0 <= args.index < len(ds):
        raise UsageError(f"index {args.index} outside dataset of {len(ds)}")
    x = ds.X[args.index]
    target = args.target
    if target is None:
        target = int(pick_targets([ds.y[args.index]], model.num_classes, args.seed)[0])
    family, c_steps = bench.parse_method(args.method)
    cfg = bench.attack_presets(ds.feature_lo, ds.feature_hi, args.kappa)[family]
    cfg = replace(cfg, c_steps=args.c_steps or c_steps,
                  record_trajectory=args.trajectory is not None)
    if family == "ifgsm":
        eps, results, _ = ifgsm_eps_sweep(model, x[None, :], [target], cfg)
        res = results[0]
        print(f"epsilon: {eps:.6f}")
    else:
        res = run_c_search(model, x, target, cfg, family)
    print(f"label: {ds.y[args.index]}  target: {target}  "
          f"prediction: {classify(model, res.adversarial)}")
    print(f"success: {res.success}  l2_distance: {res.l2_distance:.6f}  "
          f"iterations: {res.iterations}  status: {res.status}")
    if args.trajectory is not None:
        if ds.dim != 2:
            raise UsageError("trajectories can only be exported for 2D data")
        bench.export_trajectory_csv(bench.Trajectory2D(res.trajectory, args.method),
                                    args.trajectory)


def cmd_bench(args):
    if args.data is None:
        train, test, clf = bench.synthetic_setup(args.seed)
        model = clf.model_ if args.model is None else load_weights(args.model)
        ds = test
    else:
        splits = load_any(args.data, args.labels)
        ds = _split(splits, args.split)
        if args.model is not None:
            model = load_weights(args.model)
        else:
            clf = MLPClassifier(hidden_layer_sizes=args.hidden, batch_size=128,
                                random_state=args.seed, n_classes=splits[0].num_classes)
            model = clf.fit(splits[0].X, splits[0].y).model_
    ds = ds.subset(np.arange(min(args.n, len(ds))))
    targets = pick_targets(ds.y, model.num_classes, args.seed)

    def configs(kappa):
        return bench.attack_presets(ds.feature_lo, ds.feature_hi, kappa)

    report = bench.run_benchmark(model, ds.X, ds.y, targets, args.methods, args.kappas, configs)
    print(bench.emit_table_markdown(report.rows, report.n_excluded), end="")
    if args.out:
        bench.emit_table_csv(report.rows, args.out)
        print(f"wrote {args.out}")


def cmd_figure1(args):
    out = bench.figure1(args.seed, args.out, args.trajectories)
    print(f"train accuracy: {out['train_accuracy']:.4f}  test accuracy: {out['test_accuracy']:.4f}")
    for name, res in (("Our1", out["ours"]), ("CW6", out["cw"])):
        print(f"{name}: success={res.success} l2={res.l2_distance:.4f} "
              f"iterations={res.iterations} steps={len(res.trajectory) - 1}")
    print(f"wrote {args.out} ({out['seconds']:.1f}s)")


def build_parser():
    p = _Parser(prog="gradguide", description="Targeted L2 adversarial attacks on MLPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate the synthetic 2D dataset")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=1000, help="training points per class")
    s.add_argument("--n-test", type=int, default=200, help="test points per class")
    s.add_argument("--margin", type=float, default=0.4)
    s.set_defaults(func=cmd_synth)

    def data_args(q, required=True):
        q.add_argument("--data", required=required,
                       help="LDS1 file from `synth`, a CIFAR-10 batch, or IDX images")
        q.add_argument("--labels", help="IDX labels file (makes --data an IDX image file)")

    t = sub.add_parser("train", help="train an MLP and write a weight file")
    data_args(t)
    t.add_argument("--out", required=True)
    t.add_argument("--hidden", type=_ints, default=(16, 16))
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="attack a single example")
    data_args(a)
    a.add_argument("--model", required=True)
    a.add_argument("--split", type=int, default=-1, help="split of the data file (default: last)")
    a.add_argument("--index", type=int, required=True)
    a.add_argument("--target", type=int)
    a.add_argument("--method", default="Our1")
    a.add_argument("--kappa", type=float, default=0.0)
    a.add_argument("--c-steps", type=int)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--trajectory", help="CSV path for the 2D trajectory")
    a.set_defaults(func=cmd_attack)

    b = sub.add_parser("bench", help="run the method x kappa benchmark grid")
    data_args(b, required=False)
    b.add_argument("--model")
    b.add_argument("--split", type=int, default=-1)
    b.add_argument("--hidden", type=_ints, default=(256, 128))
    b.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m],
                   default=["Our1", "CW1", "CW3", "CW6"])
    b.add_argument("--kappas", type=_floats, default=list(bench.DEFAULT_KAPPAS))
    b.add_argument("--n", type=int, default=400)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("figure1", help="synthetic 2D reproduction, written as SVG")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.add_argument("--trajectories", help="prefix for per-method trajectory CSVs")
    f.set_defaults(func=cmd_figure1)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "methods", None):
            for name in args.methods:
                bench.parse_method(name)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
