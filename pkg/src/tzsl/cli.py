"""Command-line entry point.

Subcommands: ``synth`` (generate synthetic data files), ``train`` (run one
or both training stages), ``eval`` (metrics, optional hubness diagnostic,
optional split-in-halves protocol), ``cv`` (Monte Carlo hyperparameter
search), ``sweep-batch`` (accuracy vs. seen batch size).

Every run writes exactly one manifest next to its primary output: the
command, the fully resolved configuration, 64-bit FNV-1a digests of the
input files, the output paths, and the wall-clock duration. With fixed
flags, seed and input bytes, all primary outputs are byte-identical
across runs (manifests may differ only in duration). Outputs are written
to a temp file and renamed, so failures leave no partial files.

Exit codes: 2 for I/O or usage problems, 3 for validation/format errors,
4 for numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

from .data import (
    SynthConfig,
    generate_synthetic,
    hold_out_seen,
    load_dataset,
    save_dataset,
)
from .errors import NumericError, ValidationError
from .evaluate import (
    AVERAGING_OVERALL,
    AVERAGING_PER_CLASS,
    evaluate,
    evaluate_qfsl_protocol,
    format_confusion_csv,
    format_eval_report,
    format_hubness_report,
    hubness_skewness,
)
from .fileio import atomic_write_text
from .train import (
    STAGE_INDUCTIVE,
    TrainConfig,
    load_checkpoint,
    monte_carlo_cv,
    save_checkpoint,
    train_inductive,
    train_transductive,
)

EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _digest_file(path) -> str:
    with open(path, "rb") as fh:
        return f"{fnv1a64(fh.read()):016x}"


class RunManifest:
    """One record per run: command, config echo, seed, digests, outputs."""

    def __init__(self, command: str, seed: int):
        self.command = command
        self.seed = seed
        self.config: dict[str, str] = {}
        self.inputs: list[tuple[str, str]] = []
        self.outputs: list[str] = []
        self.started = time.perf_counter()

    def echo_config(self, cfg) -> None:
        for f in dataclasses.fields(cfg):
            self.config[f.name] = str(getattr(cfg, f.name))

    def add_input(self, path) -> None:
        self.inputs.append((str(path), _digest_file(path)))

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def write(self, path) -> None:
        duration = time.perf_counter() - self.started
        lines = [f"command={self.command}", f"seed={self.seed}"]
        lines += [f"config.{k}={v}" for k, v in self.config.items()]
        for p, digest in self.inputs:
            lines.append(f"input={p}")
            lines.append(f"digest.{p}={digest}")
        lines += [f"output={p}" for p in self.outputs]
        lines.append(f"duration_seconds={duration:.3f}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def _float_list(text: str) -> list[float]:
    items = [t for t in text.split(",") if t]
    if not items:
        raise ValidationError(f"empty list {text!r}")
    return [float(t) for t in items]


def _int_list(text: str) -> list[int]:
    items = [t for t in text.split(",") if t]
    if not items:
        raise ValidationError(f"empty list {text!r}")
    return [int(t) for t in items]


def _read_config_file(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["zsl", "gzsl"], default=None)
    p.add_argument("--variant", choices=["triplet", "euclidean"], default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-seen", type=int, default=None)
    p.add_argument("--batch-unlabeled", type=int, default=None)
    p.add_argument("--epochs-inductive", type=int, default=None)
    p.add_argument("--epochs-transductive", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--early-stop", action="store_true", default=None)
    p.add_argument("--config", default=None, help="key=value file; flags win on conflict")


def _build_train_config(args) -> TrainConfig:
    file_cfg = _read_config_file(args.config) if args.config else {}
    defaults = TrainConfig()

    def pick(name: str, cast):
        value = getattr(args, name)
        if value is not None:
            return value
        if name in file_cfg:
            return cast(file_cfg[name])
        return getattr(defaults, name)

    return TrainConfig(
        mode=pick("mode", str),
        alpha=pick("alpha", float),
        lam=pick("lam", float),
        margin=pick("margin", float),
        lr=pick("lr", float),
        batch_seen=pick("batch_seen", int),
        batch_unlabeled=pick("batch_unlabeled", int),
        epochs_inductive=pick("epochs_inductive", int),
        epochs_transductive=pick("epochs_transductive", int),
        hidden_dim=pick("hidden_dim", int),
        seed=pick("seed", int),
        variant=pick("variant", str),
        early_stop=pick("early_stop", lambda v: v == "true"),
    )


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        seen_classes=args.seen,
        unseen_classes=args.unseen,
        semantic_dim=args.dim_semantic,
        feature_dim=args.dim_feature,
        samples_per_class=args.per_class,
        sigma_proto=args.sigma_proto,
        sigma_sample=args.sigma_sample,
        cluster_quality=args.cluster_quality,
        seed=args.seed,
    )
    manifest = RunManifest("synth", cfg.seed)
    manifest.echo_config(cfg)
    dataset = generate_synthetic(cfg)
    if args.seen_test_fraction > 0:
        dataset = hold_out_seen(dataset, args.seen_test_fraction, seed=cfg.seed)
        manifest.config["seen_test_fraction"] = str(args.seen_test_fraction)
    save_dataset(dataset, args.out_features, args.out_semantics)
    manifest.add_output(args.out_features)
    manifest.add_output(args.out_semantics)
    manifest.write(args.out_features + ".manifest")
    return 0


def _cmd_train(args) -> int:
    config = _build_train_config(args)
    manifest = RunManifest("train", config.seed)
    manifest.echo_config(config)
    manifest.config["stage"] = args.stage
    manifest.add_input(args.features)
    manifest.add_input(args.semantics)
    dataset = load_dataset(args.features, args.semantics)

    if args.stage == "transductive" and not args.init:
        raise ValidationError("--stage transductive requires --init (an inductive checkpoint)")
    init = None
    if args.init:
        manifest.add_input(args.init)
        init = load_checkpoint(args.init)

    if args.stage == "inductive":
        final = train_inductive(dataset, config)
    elif args.stage == "transductive":
        final = train_transductive(dataset, config, init)
    else:
        if init is None:
            init = train_inductive(dataset, config)
        elif init.stage != STAGE_INDUCTIVE:
            raise ValidationError("--init must be an inductive checkpoint")
        final = train_transductive(dataset, config, init)

    save_checkpoint(final, args.out)
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest")
    return 0


def _cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    mode = args.mode or checkpoint.config.mode
    averaging = args.averaging
    manifest = RunManifest("eval", checkpoint.config.seed)
    manifest.echo_config(checkpoint.config)
    manifest.config["protocol"] = args.protocol
    manifest.add_input(args.features)
    manifest.add_input(args.semantics)
    manifest.add_input(args.checkpoint)
    dataset = load_dataset(args.features, args.semantics)

    outputs: list[tuple[str, str]] = []
    if args.protocol == "qfsl":
        config = dataclasses.replace(checkpoint.config, mode="gzsl")
        mean_report, halves = evaluate_qfsl_protocol(dataset, config, averaging)
        outputs.append((args.out + ".metrics.txt", format_eval_report(mean_report)))
        outputs.append((args.out + ".confusion.csv", format_confusion_csv(mean_report)))
        for i, half in enumerate(halves):
            outputs.append((f"{args.out}.half{i}.metrics.txt", format_eval_report(half)))
    else:
        report = evaluate(checkpoint.net, dataset, mode, averaging)
        outputs.append((args.out + ".metrics.txt", format_eval_report(report)))
        outputs.append((args.out + ".confusion.csv", format_confusion_csv(report)))
    if args.hubness is not None:
        hub = hubness_skewness(checkpoint.net, dataset, k=args.hubness,
                               candidates=args.hubness_candidates)
        outputs.append((args.out + ".hubness.txt", format_hubness_report(hub)))

    for path, text in outputs:
        atomic_write_text(path, text)
        manifest.add_output(path)
    manifest.write(args.out + ".manifest")
    return 0


def _cmd_cv(args) -> int:
    config = _build_train_config(args)
    manifest = RunManifest("cv", config.seed)
    manifest.echo_config(config)
    manifest.add_input(args.features)
    manifest.add_input(args.semantics)
    dataset = load_dataset(args.features, args.semantics)

    grid = [
        (a, l, m)
        for a in _float_list(args.alphas)
        for l in _float_list(args.lambdas)
        for m in _float_list(args.margins)
    ]
    best, rows = monte_carlo_cv(dataset, grid, args.reps, args.val_fraction, config)
    lines = ["alpha,lambda,margin,mean,std"]
    for row in rows:
        lines.append(
            f"{repr(row.alpha)},{repr(row.lam)},{repr(row.margin)},"
            f"{repr(row.mean_score)},{repr(row.std_score)}"
        )
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    best_text = f"alpha={repr(best[0])}\nlambda={repr(best[1])}\nmargin={repr(best[2])}\n"
    atomic_write_text(args.out + ".best", best_text)
    manifest.add_output(args.out)
    manifest.add_output(args.out + ".best")
    manifest.write(args.out + ".manifest")
    return 0


def _cmd_sweep_batch(args) -> int:
    config = _build_train_config(args)
    manifest = RunManifest("sweep-batch", config.seed)
    manifest.echo_config(config)
    manifest.add_input(args.features)
    manifest.add_input(args.semantics)
    dataset = load_dataset(args.features, args.semantics)

    sizes = _int_list(args.batch_sizes)
    lines = ["batch_size,unseen_top1"]
    for n in sizes:
        cfg = dataclasses.replace(config, mode="zsl", batch_seen=n, batch_unlabeled=None)
        inductive = train_inductive(dataset, cfg)
        refined = train_transductive(dataset, cfg, inductive)
        report = evaluate(refined.net, dataset, "zsl")
        lines.append(f"{n},{repr(report.overall_top1)}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tzsl",
        description="Transductive zero-shot learning over precomputed embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic feature/semantic files")
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-semantics", required=True)
    p.add_argument("--seen", type=int, default=SynthConfig.seen_classes)
    p.add_argument("--unseen", type=int, default=SynthConfig.unseen_classes)
    p.add_argument("--dim-semantic", type=int, default=SynthConfig.semantic_dim)
    p.add_argument("--dim-feature", type=int, default=SynthConfig.feature_dim)
    p.add_argument("--per-class", type=int, default=SynthConfig.samples_per_class)
    p.add_argument("--sigma-proto", type=float, default=SynthConfig.sigma_proto)
    p.add_argument("--sigma-sample", type=float, default=SynthConfig.sigma_sample)
    p.add_argument("--cluster-quality", type=float, default=SynthConfig.cluster_quality)
    p.add_argument("--seed", type=int, default=SynthConfig.seed)
    p.add_argument("--seen-test-fraction", type=float, default=0.0,
                   help="re-tag this fraction of seen train records as test (for gzsl)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="run the training stages")
    p.add_argument("--features", required=True)
    p.add_argument("--semantics", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--stage", choices=["inductive", "transductive", "both"], default="both")
    p.add_argument("--init", default=None, help="inductive checkpoint to start from")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--features", required=True)
    p.add_argument("--semantics", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--mode", choices=["zsl", "gzsl"], default=None,
                   help="defaults to the checkpoint's mode")
    p.add_argument("--averaging", choices=[AVERAGING_OVERALL, AVERAGING_PER_CLASS],
                   default=AVERAGING_OVERALL)
    p.add_argument("--protocol", choices=["standard", "qfsl"], default="standard")
    p.add_argument("--hubness", type=int, default=None, metavar="K",
                   help="also write the k-occurrence skewness report")
    p.add_argument("--hubness-candidates", choices=["unseen", "all"], default="unseen")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("cv", help="Monte Carlo cross-validation over a grid")
    p.add_argument("--features", required=True)
    p.add_argument("--semantics", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--alphas", required=True, help="comma-separated values")
    p.add_argument("--lambdas", required=True, help="comma-separated values")
    p.add_argument("--margins", required=True, help="comma-separated values")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--val-fraction", type=float, default=0.17)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("sweep-batch", help="accuracy as the seen batch size varies")
    p.add_argument("--features", required=True)
    p.add_argument("--semantics", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--batch-sizes", required=True, help="comma-separated sizes")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_sweep_batch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"tzsl: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"tzsl: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, FloatingPointError) as exc:
        print(f"tzsl: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
