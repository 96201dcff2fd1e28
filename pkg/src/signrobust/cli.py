"""Command-line entry point.

Every command writes a manifest (``key=value`` per line) next to its main
output; ``signrobust replay MANIFEST`` re-runs the command it records.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, attacks, data, eval as evaluation, nn, train
from .attacks import AttackConfig
from .errors import SignRobustError
from .tensor import Rng, derive_seed

log = logging.getLogger("signrobust")

DEFAULT_SEED = 42
DEFAULT_SIDE = 32
DEFAULT_SYNTH_CLASSES = 4
DEFAULT_PER_CLASS = 200


def float_list(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def _add_dataset_args(p, *, train_defaults: bool):
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="dataset root laid out as <root>/<class_name>/<image files>")
    g.add_argument("--synth", nargs="*", metavar="KEY=VALUE",
                   help="use the synthetic sign fixture; keys: classes, per-class, seed "
                        f"(defaults {DEFAULT_SYNTH_CLASSES}, {DEFAULT_PER_CLASS}, --seed)")
    if not train_defaults:
        g.add_argument("--synth-test", action="store_true",
                       help="shorthand for --synth with default keys, sized to the model")
    g.add_argument("--side", type=int, default=DEFAULT_SIDE if train_defaults else None,
                   help="image side in pixels" + ("" if train_defaults else " (default: the model's)"))
    g.add_argument("--classes", type=int, help="expected number of classes (checked)")
    g.add_argument("--split", type=float, default=0.8, help="fraction of each class kept for training")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="master seed for synthesis, splitting, init and shuffling")


def _add_attack_args(p, *, single_eps: bool):
    g = p.add_argument_group("attack")
    g.add_argument("--attack", choices=evaluation.ATTACKS, default="fgsm", help="attack method")
    if single_eps:
        g.add_argument("--epsilon", type=float, default=0.1, help="L-inf budget in normalized units")
    else:
        g.add_argument("--eps", type=float_list,
                       help="comma-separated epsilons (default: 0,0.1,...,0.6 for fgsm; "
                            "0,0.05,0.1,0.15,0.2,0.3 for pgd)")
    g.add_argument("--steps", type=int, default=attacks.PGD_STEPS, help="PGD iterations")
    g.add_argument("--alpha", type=float, default=attacks.PGD_ALPHA, help="PGD step size")
    g.add_argument("--random-start", action=argparse.BooleanOptionalAction, default=True,
                   help="start PGD at a uniform random point of the epsilon-ball")
    g.add_argument("--attack-seed", type=int, default=0, help="seed for PGD random starts")


def _add_image_args(p):
    g = p.add_argument_group("source image")
    g.add_argument("--image", help="image file to attack (resized to the model's side)")
    g.add_argument("--index", type=int, default=0,
                   help="otherwise: index into the held-out split of the dataset")
    g.add_argument("--label", type=int,
                   help="true class id (default: dataset label, or the model's clean prediction for --image)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signrobust", description=__doc__, formatter_class=_Formatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the CNN and write a checkpoint", formatter_class=_Formatter)
    _add_dataset_args(p, train_defaults=True)
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=10, help="passes over the training split")
    g.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    g.add_argument("--batch-size", type=int, default=32, help="mini-batch size (last batch may be short)")
    g.add_argument("--hidden", type=int, default=256, help="width of the hidden dense layer")
    p.add_argument("--out", default="model.gsgn", help="checkpoint path")

    p = sub.add_parser("evaluate", help="accuracy-vs-epsilon sweep to CSV", formatter_class=_Formatter)
    p.add_argument("--model", required=True, help="checkpoint (.gsgn) to evaluate")
    _add_dataset_args(p, train_defaults=False)
    _add_attack_args(p, single_eps=False)
    p.add_argument("--out", help="report CSV path (default: <attack>_report.csv)")

    p = sub.add_parser("attack", help="attack one image and save the result", formatter_class=_Formatter)
    p.add_argument("--model", required=True, help="checkpoint (.gsgn) to attack")
    _add_dataset_args(p, train_defaults=False)
    _add_image_args(p)
    _add_attack_args(p, single_eps=True)
    p.add_argument("--out", default="adversarial.ppm",
                   help="adversarial image path; the perturbation goes to <stem>_perturbation.ppm")

    p = sub.add_parser("visualize", help="2-row adversarial/perturbation grid", formatter_class=_Formatter)
    p.add_argument("--model", required=True, help="checkpoint (.gsgn) to attack")
    _add_dataset_args(p, train_defaults=False)
    _add_image_args(p)
    _add_attack_args(p, single_eps=False)
    p.add_argument("--out", default="grid.ppm", help="grid image path (PPM)")

    p = sub.add_parser("synth-data", help="write the synthetic fixture as a PPM tree",
                       formatter_class=_Formatter)
    p.add_argument("--classes", type=int, default=DEFAULT_SYNTH_CLASSES,
                   help=f"number of sign templates (at most {len(data.TEMPLATES)})")
    p.add_argument("--per-class", type=int, default=DEFAULT_PER_CLASS, help="images per class")
    p.add_argument("--side", type=int, default=DEFAULT_SIDE, help="image side in pixels")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="generator seed")
    p.add_argument("--out", required=True, help="output root directory")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest",
                       formatter_class=_Formatter)
    p.add_argument("manifest")
    return parser


# --- manifests ------------------------------------------------------------


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        return action.choices[command]
    raise KeyError(command)


def _option_actions(subparser):
    return [a for a in subparser._actions
            if a.option_strings and not isinstance(a, (argparse._HelpAction, argparse._VersionAction))]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], str):
            return " ".join(value)
        return ",".join(_fmt(v) for v in value)
    return str(value)


def write_manifest(path, args, extra=()):
    sub = _subparser(build_parser(), args.command)
    lines = [f"command={args.command}", f"version={__version__}"]
    for action in _option_actions(sub):
        value = getattr(args, action.dest)
        if value is not None:
            lines.append(f"{action.dest}={_fmt(value)}")
    lines += [f"{k}={_fmt(v)}" for k, v in extra]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def manifest_argv(manifest: dict):
    """Reconstruct the argv that produced ``manifest``."""
    command = manifest["command"]
    argv = [command]
    for action in _option_actions(_subparser(build_parser(), command)):
        if action.dest not in manifest:
            continue
        value = manifest[action.dest]
        flag = action.option_strings[0]
        if isinstance(action, argparse.BooleanOptionalAction):
            argv.append(flag if value == "true" else "--no-" + flag[2:])
        elif isinstance(action, argparse._StoreTrueAction):
            if value == "true":
                argv.append(flag)
        elif action.nargs == "*":
            argv += [flag, *value.split()]
        else:
            argv += [flag, value]
    return argv


# --- shared helpers -------------------------------------------------------


def _load_dataset(args, model=None) -> data.Dataset:
    side = args.side or (model.input_side if model else DEFAULT_SIDE)
    if args.data:
        ds = data.load_directory(args.data, side)
    else:
        kv = data.parse_kv(args.synth or [])
        unknown = set(kv) - {"classes", "per_class", "seed"}
        if unknown:
            raise SignRobustError(f"unknown --synth keys: {sorted(unknown)}")
        classes = int(kv.get("classes") or args.classes or
                      (model.num_classes if model else DEFAULT_SYNTH_CLASSES))
        ds = data.synth_signs(classes, int(kv.get("per_class", DEFAULT_PER_CLASS)), side,
                              int(kv.get("seed", args.seed)))
    if args.classes is not None and len(ds.class_names) != args.classes:
        raise SignRobustError(f"dataset has {len(ds.class_names)} classes, expected {args.classes}")
    if model is not None:
        if len(ds.class_names) != model.num_classes:
            raise SignRobustError(f"dataset has {len(ds.class_names)} classes, "
                                  f"model expects {model.num_classes}")
        if ds.side != model.input_side:
            raise SignRobustError(f"dataset side {ds.side} != model side {model.input_side}")
    return ds


def _split(args, ds):
    return data.stratified_split(ds, 1.0 - args.split, args.seed)


def _resolve_dataset_args(args, parser):
    if getattr(args, "synth_test", False):
        args.synth = args.synth or []
        args.synth_test = False
    if args.data and args.synth is not None:
        parser.error("--data and --synth are mutually exclusive")
    if args.data is None and args.synth is None:
        parser.error("one of --data or --synth is required")
    if not 0 < args.split < 1:
        parser.error("--split must lie strictly between 0 and 1")


def _attack_cfg(args, epsilon=0.0):
    return AttackConfig(epsilon, args.alpha, args.steps, args.random_start, args.attack_seed)


def _load_model(args):
    model = train.load_checkpoint(args.model)
    if args.side is None:
        args.side = model.input_side
    return model


def _source_image(args, model):
    """Return (image, label) for attack/visualize."""
    if args.image:
        img = data.resize_bilinear(data.read_image(args.image), model.input_side)
        label = args.label
        if label is None:
            label = nn.predict(model, data.normalize(img))
            log.info("no --label given; using clean prediction %d", label)
        return img, label
    _, test = _split(args, _load_dataset(args, model))
    if not 0 <= args.index < len(test):
        raise SignRobustError(f"--index {args.index} outside held-out split of {len(test)}")
    img, label = test.images[args.index], int(test.labels[args.index])
    return img, (label if args.label is None else args.label)


# --- commands -------------------------------------------------------------


def cmd_train(args, parser) -> int:
    _resolve_dataset_args(args, parser)
    ds = _load_dataset(args)
    train_ds, test_ds = _split(args, ds)
    log.info("dataset: %d classes, %d train / %d test, side %d",
             len(ds.class_names), len(train_ds), len(test_ds), ds.side)
    model = nn.build_model(ds.side, len(ds.class_names), args.hidden,
                           rng=Rng(derive_seed(args.seed, train.SEED_INIT)))
    cfg = train.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                            batch_size=args.batch_size, seed=args.seed)
    model, history = train.train(model, train_ds, cfg)
    digest = train.save_checkpoint(model, args.out)
    with open(args.out + ".log.csv", "w") as fh:
        fh.write("epoch,loss,train_accuracy\n")
        for h in history:
            fh.write(f"{h.epoch},{h.loss:.6f},{h.train_accuracy:.2f}\n")
    clean = evaluation.accuracy(model, test_ds) if len(test_ds) else float("nan")
    log.info("clean test accuracy %.2f%%", clean)
    write_manifest(args.out + ".manifest", args, [
        ("checkpoint_digest", digest), ("class_names", ",".join(ds.class_names)),
        ("n_train", len(train_ds)), ("n_test", len(test_ds)),
        ("clean_test_accuracy", f"{clean:.2f}")])
    return 0


def cmd_evaluate(args, parser) -> int:
    _resolve_dataset_args(args, parser)
    if args.eps is None:
        args.eps = list(evaluation.default_eps(args.attack))
    if 0.0 not in args.eps:
        parser.error("--eps must contain 0")
    if args.out is None:
        args.out = f"{args.attack}_report.csv"
    model = _load_model(args)
    _, test_ds = _split(args, _load_dataset(args, model))
    digest = train.model_digest(model)
    report = evaluation.epsilon_sweep(model, test_ds, args.attack, args.eps,
                                      _attack_cfg(args), model_id=digest)
    evaluation.write_report_csv(report, args.out)
    for e, acc, n in report.rows:
        log.info("%s eps=%.2f accuracy=%.2f%% (n=%d)", args.attack, e, acc, n)
    write_manifest(args.out + ".manifest", args, [("checkpoint_digest", digest)])
    return 0


def cmd_attack(args, parser) -> int:
    if not args.image:
        _resolve_dataset_args(args, parser)
    model = _load_model(args)
    img, label = _source_image(args, model)
    x = data.normalize(img)
    if args.attack == "fgsm":
        adv = attacks.fgsm(model, x, label, args.epsilon)
    else:
        adv = attacks.pgd(model, x, label, _attack_cfg(args, args.epsilon))
    out = Path(args.out)
    data.write_ppm(data.denormalize(adv.x_adv), out)
    pert = np.moveaxis(adv.perturbation, 0, -1)
    shown = np.full_like(pert, 0.5) if args.epsilon == 0 else (pert + args.epsilon) / (2 * args.epsilon)
    data.write_ppm(np.clip(shown, 0, 1), out.with_name(out.stem + "_perturbation.ppm"))
    log.info("label %d -> predicted %d, loss %.4f -> %.4f",
             label, adv.predicted_label, adv.loss_before, adv.loss_after)
    write_manifest(str(out) + ".manifest", args, [
        ("checkpoint_digest", train.model_digest(model)), ("original_label", adv.original_label),
        ("predicted_label", adv.predicted_label), ("loss_before", adv.loss_before),
        ("loss_after", adv.loss_after)])
    return 0


def cmd_visualize(args, parser) -> int:
    if not args.image:
        _resolve_dataset_args(args, parser)
    if args.eps is None:
        args.eps = list(evaluation.default_eps(args.attack))
    model = _load_model(args)
    img, label = _source_image(args, model)
    grid = evaluation.render_attack_grid(model, img, label, args.attack, args.eps, _attack_cfg(args))
    evaluation.write_grid_ppm(grid, args.out)
    write_manifest(args.out + ".manifest", args, [
        ("checkpoint_digest", train.model_digest(model)), ("label", label),
        ("captions", ",".join(grid.captions))])
    return 0


def cmd_synth_data(args, parser) -> int:
    ds = data.synth_signs(args.classes, args.per_class, args.side, args.seed)
    root = Path(args.out)
    data.save_directory(ds, root)
    write_manifest(root / "manifest.txt", args)
    log.info("wrote %d images in %d classes to %s", len(ds), len(ds.class_names), root)
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "attack": cmd_attack,
    "visualize": cmd_visualize,
    "synth-data": cmd_synth_data,
}


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            argv = manifest_argv(read_manifest(args.manifest))
        except (OSError, KeyError) as exc:
            print(f"signrobust: cannot replay {args.manifest}: {exc}", file=sys.stderr)
            return 1
        log.info("replaying: %s", " ".join(argv))
        args = parser.parse_args(argv)
    sub = _subparser(parser, args.command)
    try:
        return COMMANDS[args.command](args, sub)
    except (SignRobustError, OSError) as exc:
        print(f"signrobust {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
