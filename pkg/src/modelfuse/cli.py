"""Command-line interface wiring the toolkit into one workflow.

Subcommands: evaluate, ensemble, optimize-weights, train-meta, split,
lr-sweep, lr-suggest, synth, roc-export. Every command writes a manifest
(JSON, no timestamps) next to its primary output, carrying the resolved
configuration and sha256 digests of all inputs, so a run can be reproduced
bit-for-bit from the manifest plus the input files.

Exit codes: 0 success, 2 input/format errors, 3 undefined computations.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    LabelSpace,
    align,
    align_matrices,
    load_predictions,
    load_truth,
    predictions_label_space,
    truth_label_space,
    write_predictions,
    write_truth,
)
from .de import DeConfig
from .ensemble import (
    MetaTrainConfig,
    WeightVector,
    combine_matrices,
    load_meta,
    load_weights,
    optimize_weights,
    predict_meta,
    stack_features,
    stack_matrices,
    train_meta,
    write_meta,
    write_weights,
)
from .errors import ComputationError, InputError
from .lr_tools import (
    generate_sweep,
    load_lr_log,
    suggest_max_lr,
    write_lr_result,
    write_sweep,
)
from .metrics import macro_auroc, roc_curve, write_roc_points
from .splitter import SPLIT_NAMES, SplitConfig, grouped_split, write_split_assignment
from .synthgen import SynthConfig, expected_auroc, generate


# ---------------------------------------------------------------------------
# manifest


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(command: str, primary_out, config: dict, inputs, outputs, seed=None) -> None:
    """Manifest next to the primary output; file names are kept relative so
    two runs in different directories stay byte-identical."""
    primary_out = Path(primary_out)
    if primary_out.is_dir():
        target = primary_out / "manifest.json"
    else:
        target = primary_out.with_name(primary_out.name + ".manifest")
    payload = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": [{"file": Path(p).name, "sha256": _sha256(p)} for p in inputs],
        "outputs": [Path(p).name for p in outputs],
    }
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared loading helpers


def _label_space(args, truth_path=None, pred_path=None) -> LabelSpace:
    labels_file = getattr(args, "labels", None)
    if labels_file:
        names = [
            line.strip()
            for line in Path(labels_file).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return LabelSpace(tuple(names))
    if truth_path is not None:
        return truth_label_space(truth_path)
    if pred_path is not None:
        return predictions_label_space(pred_path)
    raise InputError("no label source: pass --labels or a truth file")


def _load_matrices(pred_paths, label_space) -> list:
    matrices = []
    seen = set()
    for path in pred_paths:
        m = load_predictions(path, label_space)
        if m.model_name in seen:
            raise InputError(f"{path}: duplicate model name '{m.model_name}'")
        seen.add(m.model_name)
        matrices.append(m)
    return matrices


def _parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise InputError(f"{flag}: expected comma-separated numbers, got '{text}'") from None


def _de_config(args) -> DeConfig:
    config = DeConfig()
    if args.de_config:
        config = _read_de_config_file(args.de_config, config)
    for flag, attr in (
        ("population", "population_size"),
        ("mutation", "mutation_factor"),
        ("crossover", "crossover_rate"),
        ("generations", "max_generations"),
        ("tolerance", "convergence_tolerance"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    return config


_DE_FILE_FIELDS = {
    "population_size": int,
    "mutation_factor": float,
    "crossover_rate": float,
    "max_generations": int,
    "convergence_tolerance": float,
    "seed": int,
}


def _read_de_config_file(path, base: DeConfig) -> DeConfig:
    """Plain key-value file: one ``name value`` pair per line, # comments."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"{path}: cannot read DE config ({exc})") from exc
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in _DE_FILE_FIELDS:
            raise InputError(f"{path}: line {ln}: expected '<field> <value>' with a known field")
        key, text = parts
        try:
            setattr(base, key, _DE_FILE_FIELDS[key](text))
        except ValueError:
            raise InputError(f"{path}: line {ln}: bad value '{text}' for {key}") from None
    return base


# ---------------------------------------------------------------------------
# evaluate


def _format_table(label_space, model_names, reports) -> str:
    name_width = max(len("label"), *(len(n) for n in label_space.names), len("Average"))
    col_widths = [max(9, len(n) + 2) for n in model_names]
    lines = ["label".ljust(name_width) + "".join(n.rjust(w) for n, w in zip(model_names, col_widths))]
    for label in label_space.names:
        cells = []
        for report, width in zip(reports, col_widths):
            value = report.per_label[label]
            cells.append(("NA" if value is None else f"{value:.5f}").rjust(width))
        lines.append(label.ljust(name_width) + "".join(cells))
    average = [f"{r.macro_mean:.5f}".rjust(w) for r, w in zip(reports, col_widths)]
    lines.append("Average".ljust(name_width) + "".join(average))
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> None:
    label_space = _label_space(args, truth_path=args.truth)
    truth = load_truth(args.truth, label_space)
    matrices = _load_matrices(args.pred, label_space)
    bundle = align(truth, matrices, label_space)

    def one(matrix):
        return macro_auroc(matrix, bundle.truth, label_space)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(pool.map(one, bundle.matrices))
    else:
        reports = [one(m) for m in bundle.matrices]

    table = _format_table(label_space, bundle.model_names, reports)
    sys.stdout.write(table)
    skipped = sorted({name for r in reports for name in r.skipped_labels})
    if skipped:
        print(f"skipped single-class label(s): {', '.join(skipped)}")
    Path(args.out).write_text(table, encoding="utf-8")
    _write_manifest(
        "evaluate",
        args.out,
        config={"threads": args.threads, "models": list(bundle.model_names)},
        inputs=[args.truth, *args.pred],
        outputs=[args.out],
    )


# ---------------------------------------------------------------------------
# ensemble


def cmd_ensemble(args) -> None:
    if args.mode == "weighted" and not args.weights:
        raise InputError("weighted mode requires --weights")
    if args.mode == "stack" and not args.meta:
        raise InputError("stack mode requires --meta")
    label_space = _label_space(args, truth_path=args.truth, pred_path=args.pred[0])
    matrices = _load_matrices(args.pred, label_space)

    truth = None
    if args.truth:
        truth = load_truth(args.truth, label_space)
        bundle = align(truth, matrices, label_space)
        aligned = bundle.matrices
    else:
        aligned = align_matrices(matrices, label_space)

    inputs = [*args.pred]
    if args.truth:
        inputs.insert(0, args.truth)
    if args.mode == "unweighted":
        uniform = WeightVector.uniform(tuple(m.model_name for m in aligned))
        fused = combine_matrices(aligned, uniform, "unweighted_average")
    elif args.mode == "weighted":
        weights, _ = load_weights(args.weights)
        fused = combine_matrices(aligned, weights, "weighted_average")
        inputs.append(args.weights)
    else:
        meta = load_meta(args.meta)
        if meta.label_names != label_space.names:
            raise InputError("meta model label names do not match the label space")
        if meta.model_names != tuple(m.model_name for m in aligned):
            raise InputError("meta model was trained on a different model list/order")
        features = stack_matrices(aligned, label_space.names)
        fused = predict_meta(meta, features)
        inputs.append(args.meta)

    write_predictions(fused, label_space, args.out)
    if truth is not None:
        report = macro_auroc(fused, bundle.truth, label_space)
        print(f"{fused.model_name} macro AUROC: {report.macro_mean:.5f}")
    _write_manifest(
        "ensemble",
        args.out,
        config={"mode": args.mode, "models": [m.model_name for m in aligned]},
        inputs=inputs,
        outputs=[args.out],
    )


def cmd_optimize_weights(args) -> None:
    label_space = _label_space(args, truth_path=args.truth)
    truth = load_truth(args.truth, label_space)
    matrices = _load_matrices(args.pred, label_space)
    bundle = align(truth, matrices, label_space)
    config = _de_config(args)
    weights, result = optimize_weights(bundle, config)

    write_weights(weights, args.out, fitness=result.best_fitness)
    report_path = str(args.out) + ".report"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"best_fitness {repr(result.best_fitness)}\n")
        fh.write(f"generations_run {result.generations_run}\n")
        fh.write(f"history {','.join(repr(v) for v in result.history)}\n")
    for name, value in zip(weights.model_names, weights.weights):
        print(f"{name} {value:.6f}")
    print(f"validation macro AUROC: {result.best_fitness:.5f}")
    _write_manifest(
        "optimize-weights",
        args.out,
        config={
            "population_size": config.population_size,
            "mutation_factor": config.mutation_factor,
            "crossover_rate": config.crossover_rate,
            "max_generations": config.max_generations,
            "convergence_tolerance": config.convergence_tolerance,
        },
        inputs=[args.truth, *args.pred],
        outputs=[args.out, report_path],
        seed=config.seed,
    )


def cmd_train_meta(args) -> None:
    label_space = _label_space(args, truth_path=args.truth)
    truth = load_truth(args.truth, label_space)
    matrices = _load_matrices(args.pred, label_space)
    bundle = align(truth, matrices, label_space)
    features = stack_features(bundle)
    config = MetaTrainConfig(step_size=args.step, max_iters=args.iterations)
    model = train_meta(features, bundle.truth, config)
    write_meta(model, args.out)
    flagged = [n for n, d in zip(model.label_names, model.degenerate) if d]
    if flagged:
        print(f"degenerate (single-class) label(s): {', '.join(flagged)}")
    print(f"meta model written: {args.out}")
    _write_manifest(
        "train-meta",
        args.out,
        config={"step_size": args.step, "max_iters": args.iterations},
        inputs=[args.truth, *args.pred],
        outputs=[args.out],
    )


# ---------------------------------------------------------------------------
# split / lr / synth / roc


def cmd_split(args) -> None:
    fractions = _parse_floats(args.fractions, "--fractions")
    if len(fractions) != 3:
        raise InputError("--fractions needs exactly three values (train,validation,test)")
    label_space = truth_label_space(args.truth)
    truth = load_truth(args.truth, label_space)
    samples = dict(zip(truth.sample_ids, truth.patient_ids))
    result = grouped_split(samples, SplitConfig(fractions=fractions, seed=args.seed))
    write_split_assignment(result, args.out)

    outputs = [args.out]
    if args.subset_truth:
        out = Path(args.out)
        for split in SPLIT_NAMES:
            indices = np.array(
                [i for i, sid in enumerate(truth.sample_ids) if result.assignment[sid] == split],
                dtype=int,
            )
            if len(indices) == 0:
                continue
            subset_path = out.with_name(out.stem + f".{split}.csv")
            write_truth(truth.restrict(indices), label_space, subset_path)
            outputs.append(str(subset_path))

    total_images = sum(result.image_counts.values())
    total_patients = sum(result.patient_counts.values())
    print(f"{'':<16}{'Total':>10}{'Train':>10}{'Validation':>12}{'Test':>10}")
    print(
        f"{'Images':<16}{total_images:>10}"
        + f"{result.image_counts['train']:>10}{result.image_counts['validation']:>12}"
        + f"{result.image_counts['test']:>10}"
    )
    print(
        f"{'Unique Patients':<16}{total_patients:>10}"
        + f"{result.patient_counts['train']:>10}{result.patient_counts['validation']:>12}"
        + f"{result.patient_counts['test']:>10}"
    )
    _write_manifest(
        "split",
        args.out,
        config={"fractions": list(fractions), "subset_truth": bool(args.subset_truth)},
        inputs=[args.truth],
        outputs=outputs,
        seed=args.seed,
    )


def cmd_lr_sweep(args) -> None:
    rates = generate_sweep(args.min_lr, args.max_lr, args.iterations)
    write_sweep(rates, args.out)
    print(f"{len(rates)} learning rates written: {args.out}")
    _write_manifest(
        "lr-sweep",
        args.out,
        config={"min_lr": args.min_lr, "max_lr": args.max_lr, "iterations": args.iterations},
        inputs=[],
        outputs=[args.out],
    )


def cmd_lr_suggest(args) -> None:
    log = load_lr_log(args.log)
    result = suggest_max_lr(
        log,
        smoothing_beta=args.beta,
        slope_window=args.window,
        divergence_factor=args.divergence,
    )
    write_lr_result(result, args.out)
    print(f"suggested max lr: {result.suggested_max_lr:.3e}")
    print(f"steepest descent between steps {result.window_start} and {result.window_end}")
    _write_manifest(
        "lr-suggest",
        args.out,
        config={"beta": args.beta, "window": args.window, "divergence": args.divergence},
        inputs=[args.log],
        outputs=[args.out],
    )


def cmd_synth(args) -> None:
    noise = _parse_floats(args.noise, "--noise") if args.noise else None
    if noise is not None and len(noise) == 1:
        noise = noise * args.models
    prevalence = _parse_floats(args.prevalence, "--prevalence")
    config = SynthConfig(
        n_samples=args.samples,
        n_labels=args.labels_count,
        n_models=args.models,
        prevalence=prevalence[0] if len(prevalence) == 1 else prevalence,
        model_noise=noise,
        signal_strength=args.signal,
        seed=args.seed,
    )
    bundle = generate(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth_path = out_dir / "truth.csv"
    write_truth(bundle.truth, bundle.label_space, truth_path)
    outputs = [str(truth_path)]
    for matrix, sigma in zip(bundle.matrices, config.model_noise):
        path = out_dir / f"{matrix.model_name}.csv"
        write_predictions(matrix, bundle.label_space, path)
        outputs.append(str(path))
        print(
            f"{matrix.model_name}: sigma={sigma:g} "
            f"expected AUROC={expected_auroc(config.signal_strength, sigma):.4f}"
        )
    _write_manifest(
        "synth",
        out_dir,
        config={
            "n_samples": config.n_samples,
            "n_labels": config.n_labels,
            "n_models": config.n_models,
            "prevalence": list(config.prevalence),
            "model_noise": list(config.model_noise),
            "signal_strength": config.signal_strength,
        },
        inputs=[],
        outputs=outputs,
        seed=config.seed,
    )


def cmd_roc_export(args) -> None:
    label_space = _label_space(args, truth_path=args.truth)
    truth = load_truth(args.truth, label_space)
    matrix = load_predictions(args.pred, label_space)
    bundle = align(truth, (matrix,), label_space)
    aligned = bundle.matrices[0]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    skipped = []
    for j, name in enumerate(label_space.names):
        y = bundle.truth.labels[:, j]
        if y.min() == y.max():
            skipped.append(name)
            continue
        curve = roc_curve(aligned.probabilities[:, j], y)
        path = out_dir / f"{name}.csv"
        write_roc_points(curve, path)
        outputs.append(str(path))
    if skipped:
        print(f"skipped single-class label(s): {', '.join(skipped)}")
    if not outputs:
        raise ComputationError("no label had both classes; nothing to export")
    print(f"{len(outputs)} ROC file(s) written to {out_dir}")
    _write_manifest(
        "roc-export",
        out_dir,
        config={"model": aligned.model_name},
        inputs=[args.truth, args.pred],
        outputs=outputs,
    )


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelfuse",
        description="Fuse, weight and evaluate multi-label prediction matrices.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="per-label and macro AUROC table for one or more models")
    p.add_argument("--truth", required=True, help="truth file (defines the label order)")
    p.add_argument("--pred", nargs="+", required=True, help="prediction file(s)")
    p.add_argument("--out", required=True, help="report file to write")
    p.add_argument("--labels", help="optional label list file (one name per line)")
    p.add_argument("--threads", type=int, default=1, help="worker cap for per-model evaluation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="fuse prediction files into one prediction file")
    p.add_argument("--mode", choices=("unweighted", "weighted", "stack"), required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--out", required=True, help="fused prediction file to write")
    p.add_argument("--truth", help="optional truth file; prints summary AUROC and aligns rows")
    p.add_argument("--weights", help="weights file (weighted mode)")
    p.add_argument("--meta", help="meta model JSON (stack mode)")
    p.add_argument("--labels", help="optional label list file")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("optimize-weights", help="differential-evolution weight search")
    p.add_argument("--truth", required=True, help="validation truth file (fitness split)")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--labels", help="optional label list file")
    p.add_argument("--de-config", help="key-value DE config file; flags override it")
    p.add_argument("--population", type=int, help="population size (default max(15*K, 20))")
    p.add_argument("--mutation", type=float, help="mutation factor F (default 0.5)")
    p.add_argument("--crossover", type=float, help="crossover rate CR (default 0.7)")
    p.add_argument("--generations", type=int, help="generation cap (default 300)")
    p.add_argument("--tolerance", type=float, help="fitness-spread stop (default 1e-7)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.set_defaults(func=cmd_optimize_weights)

    p = sub.add_parser("train-meta", help="train the built-in logistic stacker")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--out", required=True, help="meta model JSON to write")
    p.add_argument("--labels", help="optional label list file")
    p.add_argument("--step", type=float, default=0.1, help="gradient step size")
    p.add_argument("--iterations", type=int, default=500, help="gradient-descent iterations")
    p.set_defaults(func=cmd_train_meta)

    p = sub.add_parser("split", help="patient-grouped train/validation/test split")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="assignment file to write")
    p.add_argument("--fractions", default="0.7,0.1,0.2", help="train,validation,test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--subset-truth",
        action="store_true",
        help="also write per-split truth files next to the assignment",
    )
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("lr-sweep", help="log-spaced learning-rate sweep values")
    p.add_argument("min_lr", type=float)
    p.add_argument("max_lr", type=float)
    p.add_argument("iterations", type=int)
    p.add_argument("--out", required=True, help="one learning rate per line")
    p.set_defaults(func=cmd_lr_sweep)

    p = sub.add_parser("lr-suggest", help="suggest max lr from a step,lr,loss log")
    p.add_argument("--log", required=True, help="sweep log file")
    p.add_argument("--out", required=True, help="key-value result file")
    p.add_argument("--beta", type=float, default=0.98, help="EMA smoothing beta")
    p.add_argument("--window", type=int, default=5, help="slope window length")
    p.add_argument("--divergence", type=float, default=4.0, help="divergence cutoff factor")
    p.set_defaults(func=cmd_lr_suggest)

    p = sub.add_parser("synth", help="synthetic truth + prediction files with known AUROC")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--labels-count", type=int, default=14)
    p.add_argument("--models", type=int, default=6)
    p.add_argument("--prevalence", default="0.3", help="scalar or per-label comma list")
    p.add_argument("--noise", help="per-model sigma comma list (default 1.0 each)")
    p.add_argument("--signal", type=float, default=2.0, help="class separation mu")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("roc-export", help="per-label fpr,tpr,threshold files")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True, help="one prediction file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--labels", help="optional label list file")
    p.set_defaults(func=cmd_roc_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
