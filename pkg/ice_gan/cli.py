"""Command-line interface of ice_gan.

Commands:

- train: train G and D on a corpus and write a run directory.
- eval: score a checkpoint, or run a LOSO evaluation.
- synthesize: synthesize apex faces from onset faces with a checkpoint.
- ablate: compare generator and discriminator variants.
- gradcheck: verify every backward rule against finite differences.

Configuration precedence: defaults < --config file < --set overrides and
dedicated flags < ICEGAN_OUT (output root only).

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import json
import os
import sys
import numpy as np
from .ice_gan import (__version__, get_available_discriminators,
                      get_available_skip_modes)
from .load_data import (CLASS_NAMES, corpus_hash, load_corpus, read_pgm,
                        to_disk, to_memory, write_pgm)
from .loso import get_available_loso_modes, loso_folds
from .utils import SmartFormatter, progress_message

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    """Invalid command-line usage or configuration."""


def _add_common_arguments(parser):
    parser.add_argument(
        "--config", "-c",
        type=str,
        default=None,
        help="JSON run config. Values not given fall back to the defaults.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help=("R|Override one config entry, e.g.\n"
              "--set optimizer.lr=5e-4 --set model.d_exp=16\n"
              "Values are parsed as JSON when possible."))
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of the run (optimizer.seed).")
    parser.add_argument(
        "--out",
        type=str,
        default=None,
        help="Output root (output.root). ICEGAN_OUT takes precedence.")
    parser.add_argument(
        "--run-name",
        type=str,
        default=None,
        help="Run directory name. Default is <command>_seed<seed>.")
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Print progress messages.")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ice_gan",
        description=__doc__,
        formatter_class=SmartFormatter)
    parser.add_argument("--version", action="version",
                        version=f"ice_gan {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", formatter_class=SmartFormatter,
                                help="Train G and D.")
    _add_common_arguments(train)
    train.add_argument("--epochs", type=int, default=None,
                       help="Training epochs (optimizer.epochs).")
    train.add_argument("--grm-mode", type=str, default=None,
                       help=("Generator skip mode, one of "
                             f"{get_available_skip_modes()}."))
    train.add_argument("--discriminator", type=str, default=None,
                       help=("Discriminator kind, one of "
                             f"{get_available_discriminators()}."))
    train.add_argument("--d-exp", type=int, default=None,
                       help="ExpCaps pose dimension (model.d_exp).")
    train.add_argument("--resume", type=str, default=None,
                       help="Checkpoint to resume from.")
    train.add_argument("--dump-graphs", action="store_true", default=None,
                       help=("Write the last channel graphs of every GRM to "
                             "<run>/graphs (output.dump_graphs)."))

    evaluate = commands.add_parser("eval", formatter_class=SmartFormatter,
                                   help="Evaluate a checkpoint or run LOSO.")
    _add_common_arguments(evaluate)
    source = evaluate.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", type=str, default=None,
                        help="Checkpoint whose discriminator is scored.")
    source.add_argument("--loso", action="store_true",
                        help="Train and score one model per LOSO fold.")
    evaluate.add_argument("--mode", type=str, default="CDE",
                          choices=get_available_loso_modes(),
                          help="LOSO mode.")
    evaluate.add_argument("--dataset", type=str, default=None,
                          help="Dataset of an SDE evaluation.")
    evaluate.add_argument("--jobs", type=int, default=1,
                          help="Folds trained concurrently.")
    evaluate.add_argument("--baseline", type=str, default=None,
                          choices=["oracle", "uniform", "majority"],
                          help="Score a baseline instead of ICE-GAN.")
    evaluate.add_argument("--oracle", action="store_true",
                          help="Shortcut for --baseline oracle.")
    evaluate.add_argument("--subjects", type=str, nargs="+", default=None,
                          help=("Subject keys (dataset:subject) scored with "
                                "--checkpoint. Default is all."))

    synth = commands.add_parser("synthesize", formatter_class=SmartFormatter,
                                help="Synthesize apex faces.")
    _add_common_arguments(synth)
    synth.add_argument("--checkpoint", type=str, required=True,
                       help="Checkpoint holding the generator.")
    synth.add_argument("--onset", type=str, nargs="+", required=True,
                       help="Onset faces as PGM files.")
    synth.add_argument("--class", dest="classes", type=str, nargs="+",
                       default=["all"],
                       help=f"Classes among {CLASS_NAMES}, or 'all'.")
    synth.add_argument("--diff-maps", action="store_true",
                       help="Also write the difference maps to the onset.")
    synth.add_argument("--patch-mask", dest="patch_masks", action="append",
                       default=[], metavar="CLASS=PGM",
                       help=("Known patch of a class; adds its IoU with the "
                             "difference-map region to the --diff-maps "
                             "reports."))
    synth.add_argument("--dump-graphs", action="store_true", default=None,
                       help=("Write the channel graphs of the last onset to "
                             "<run>/graphs (output.dump_graphs)."))

    ablate = commands.add_parser("ablate", formatter_class=SmartFormatter,
                                 help="Compare model variants.")
    _add_common_arguments(ablate)
    which = ablate.add_mutually_exclusive_group()
    which.add_argument("--grid", type=str, default=None,
                       help="Predefined variant grid.")
    which.add_argument("--variants", type=str, nargs="+", default=None,
                       help="Variant names.")
    ablate.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2],
                        help="Seeds of every variant.")
    ablate.add_argument("--protocol", type=str, default="holdout",
                        help="'holdout' or 'loso'.")
    ablate.add_argument("--holdout-subjects", type=int, default=4,
                        help="Subjects held out by the holdout protocol.")
    ablate.add_argument("--jobs", type=int, default=1,
                        help="Fold parallelism of the loso protocol.")
    ablate.add_argument("--counts-only", action="store_true",
                        help="Only report parameter counts.")

    grad = commands.add_parser("gradcheck", formatter_class=SmartFormatter,
                               help="Check gradients.")
    grad.add_argument("--suites", type=str, nargs="+", default=None,
                      help="Suites to run. Default is all.")
    grad.add_argument("--inject-bug", action="store_true",
                      help="Add a suite with a wrong backward rule.")
    grad.add_argument("--tol", type=float, default=1e-4,
                      help="Relative error tolerance.")
    grad.add_argument("--step", type=float, default=1e-5,
                      help="Finite-difference step.")
    grad.add_argument("--max-checks", type=int, default=30,
                      help="Coordinates checked per input.")
    grad.add_argument("--seed", type=int, default=0,
                      help="Seed of the suite inputs.")
    grad.add_argument("--report", type=str, default=None,
                      help="Write the reports to this JSON file.")
    return parser


def _flag_overrides(args):
    overrides = list(args.overrides)
    flags = {"seed": "optimizer.seed",
             "out": "output.root",
             "run_name": "output.run_name",
             "epochs": "optimizer.epochs",
             "grm_mode": "model.grm_mode",
             "discriminator": "model.discriminator",
             "d_exp": "model.d_exp",
             "dump_graphs": "output.dump_graphs"}
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if args.verbose:
        overrides.append("training.verbose=true")
    return overrides


def resolve_config(args, default_config_dir=None):
    """Run config of a command; ValueError becomes UsageError."""
    from .run_config import resolve_run_config
    fname = args.config
    if fname is None and default_config_dir is not None:
        candidate = os.path.join(default_config_dir, "config.json")
        if os.path.exists(candidate):
            fname = candidate
    try:
        return resolve_run_config(fname, _flag_overrides(args))
    except (ValueError, FileNotFoundError) as err:
        raise UsageError(str(err))


def run_directory(config, command):
    name = (config["output"]["run_name"]
            or f"{command}_seed{config['optimizer']['seed']}")
    run_dir = os.path.join(config["output"]["root"], name)
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


def _load_corpus(config):
    from .run_config import corpus_kwargs
    return load_corpus(config["corpus"]["origin"], **corpus_kwargs(config))


def _write_manifest(run_dir, config, command, corpus):
    manifest = {"ice_gan_version": __version__,
                "command": command,
                "seed": config["optimizer"]["seed"],
                "corpus_origin": config["corpus"]["origin"],
                "corpus_kwargs": config["corpus"]["kwargs"],
                "corpus_hash": corpus_hash(corpus),
                "num_samples": len(corpus),
                "perceptual_seed": config["training"]["perceptual_seed"]}
    with open(os.path.join(run_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)


def _dump_graphs(config, generator, run_dir):
    if config["output"]["dump_graphs"]:
        from .graph_reasoning import dump_graphs
        dump_graphs(generator.grm_modules, os.path.join(run_dir, "graphs"))


def cmd_train(args):
    """Train and return the run directory."""
    from .run_config import save_run_config, trainer_kwargs
    from .training import Trainer
    config = resolve_config(args)
    run_dir = run_directory(config, "train")
    save_run_config(config, os.path.join(run_dir, "config.json"))
    corpus = _load_corpus(config)
    _write_manifest(run_dir, config, "train", corpus)
    trainer = Trainer(**trainer_kwargs(config))
    if args.resume is not None:
        trainer.load(args.resume, os.path.join(run_dir, "losses.csv"))
        progress_message(f"Resumed from {args.resume} at epoch "
                         f"{trainer.epoch}", args.verbose)
    trainer.fit(corpus, run_dir)
    _dump_graphs(config, trainer.generator, run_dir)
    print(f"Run saved to {run_dir}")
    return run_dir


def _discriminate_batched(trainer, samples):
    """DiscriminatorOutput of the apex frames of `samples`, in batches."""
    from .discriminator import DiscriminatorOutput
    from .load_data import stack_samples
    from .tensor import Tensor
    batch_size = trainer.training_kwargs["batch_size"]
    adv, scores, couplings = [], [], []
    for start in range(0, len(samples), batch_size):
        _, apexes, _ = stack_samples(samples[start:start + batch_size])
        output = trainer.discriminator.discriminate(apexes)
        adv.append(output.adv.data.reshape(-1))
        scores.append(output.exp_scores.data)
        couplings.append(output.couplings)
    merged = None
    if couplings[0] is not None:
        merged = {tag: [np.concatenate([c[tag][i] for c in couplings])
                        for i in range(len(couplings[0][tag]))]
                  for tag in couplings[0]}
    return DiscriminatorOutput(Tensor(np.concatenate(adv)),
                               Tensor(np.concatenate(scores)), None, merged)


def _write_report(report, run_dir):
    report.to_json(os.path.join(run_dir, "metrics.json"))
    table = report.render_table()
    with open(os.path.join(run_dir, "metrics.txt"), "w") as f:
        f.write(table + "\n")
    print(table)


def cmd_eval(args):
    """Evaluate and return the MetricsReport."""
    from .discriminator import write_evaluation_dump
    from .metrics import (ConfusionMatrix, MetricsReport, baseline_factory,
                          evaluate_loso)
    from .run_config import save_run_config, trainer_kwargs
    from .training import Trainer, loso_trainer_factory
    checkpoint_dir = (os.path.dirname(os.path.abspath(args.checkpoint))
                      if args.checkpoint else None)
    config = resolve_config(args, checkpoint_dir)
    baseline = "oracle" if args.oracle else args.baseline
    if args.checkpoint is not None and baseline is not None:
        raise UsageError("--checkpoint cannot be combined with a baseline.")
    if args.checkpoint is not None and not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"Checkpoint {args.checkpoint} not found.")
    if args.jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
    run_dir = run_directory(config, "eval")
    save_run_config(config, os.path.join(run_dir, "config.json"))
    corpus = _load_corpus(config)

    if args.checkpoint is not None:
        trainer = Trainer(**trainer_kwargs(config)).load(args.checkpoint)
        samples = corpus
        if args.subjects is not None:
            unknown = set(args.subjects) - {s.subject_key for s in corpus}
            if unknown:
                raise UsageError(f"Unknown subject(s) {sorted(unknown)}")
            samples = [s for s in corpus if s.subject_key in args.subjects]
        true = [s.class_index for s in samples]
        output = _discriminate_batched(trainer, samples)
        write_evaluation_dump(os.path.join(run_dir, "evaluation.jsonl"),
                              [s.sample_id for s in samples], output, true)
        report = MetricsReport.from_confusion(ConfusionMatrix.from_labels(
            true, output.predicted_classes()))
    else:
        try:
            folds = loso_folds(corpus, args.mode, args.dataset)
        except ValueError as err:
            raise UsageError(str(err))
        if baseline is not None:
            factory = baseline_factory(baseline, config["optimizer"]["seed"])
        else:
            factory = loso_trainer_factory(trainer_kwargs(config), run_dir)
        report = evaluate_loso(
            factory, folds, corpus, jobs=args.jobs,
            debug_level=config["training"]["debug_level"],
            verbose=args.verbose,
            predictions_file=os.path.join(run_dir, "predictions.jsonl"))
    _write_report(report, run_dir)
    return report


def _parse_classes(classes):
    if classes == ["all"]:
        return list(range(len(CLASS_NAMES)))
    unknown = [c for c in classes if c not in CLASS_NAMES]
    if unknown:
        raise UsageError(f"Unknown class(es) {unknown}. Must be among "
                         f"{CLASS_NAMES} or 'all'.")
    return [CLASS_NAMES.index(c) for c in classes]


def _parse_patch_masks(entries, size):
    """{class index: boolean mask} from CLASS=PGM entries; pixels above 0.5
    belong to the patch."""
    masks = {}
    for entry in entries:
        name, sep, path = entry.partition("=")
        if not sep or name not in CLASS_NAMES:
            raise UsageError(f"--patch-mask expects CLASS=PGM with CLASS "
                             f"among {CLASS_NAMES}, got {entry!r}")
        if not os.path.exists(path):
            raise FileNotFoundError(f"Patch mask {path} not found.")
        mask = read_pgm(path) > 0.5
        if mask.shape != (size, size):
            raise UsageError(f"{path}: expected a {size}x{size} mask, got "
                             f"{mask.shape}")
        masks[CLASS_NAMES.index(name)] = mask
    return masks


def cmd_synthesize(args):
    """Synthesize faces and return the list of manifest records."""
    from .metrics import locality_iou, norm2_diff, save_difference_map
    from .run_config import trainer_kwargs
    from .training import Trainer
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"Checkpoint {args.checkpoint} not found.")
    config = resolve_config(
        args, os.path.dirname(os.path.abspath(args.checkpoint)))
    classes = _parse_classes(args.classes)
    missing = [p for p in args.onset if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError("Missing onset file(s):\n  "
                                + "\n  ".join(missing))
    run_dir = run_directory(config, "synthesize")
    trainer = Trainer(**trainer_kwargs(config)).load(args.checkpoint)
    generator = trainer.generator
    size = generator.image_size
    masks = _parse_patch_masks(args.patch_masks, size)
    rng = np.random.default_rng(config["optimizer"]["seed"])
    records = []
    for path in args.onset:
        onset = read_pgm(path)
        if onset.shape != (size, size):
            raise UsageError(f"{path}: expected a {size}x{size} image, got "
                             f"{onset.shape}")
        x_on = to_memory(onset)[None, None]
        stem = os.path.splitext(os.path.basename(path))[0]
        synthetic = generator.synthesize(np.repeat(x_on, len(classes), 0),
                                         np.array(classes), rng)
        for k, image in zip(classes, synthetic):
            prefix = os.path.join(run_dir, f"{stem}_{CLASS_NAMES[k]}")
            write_pgm(f"{prefix}.pgm", to_disk(image))
            record = {"onset": path, "class": CLASS_NAMES[k],
                      "image": f"{prefix}.pgm",
                      "seed": config["optimizer"]["seed"]}
            if args.diff_maps:
                diff_map = norm2_diff(image, x_on[0])
                record["diff_map"], record["diff_report"] = \
                    save_difference_map(diff_map, f"{prefix}_diff",
                                        masks.get(k))
                if k in masks:
                    record["patch_iou"] = locality_iou(diff_map, masks[k])
            records.append(record)
    with open(os.path.join(run_dir, "manifest.jsonl"), "w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    _dump_graphs(config, generator, run_dir)
    print(f"{len(records)} synthetic faces saved to {run_dir}")
    return records


def cmd_ablate(args):
    """Run the variant comparison and return the summary table."""
    from .compare_variants import (compare_variants, get_available_grids,
                                   get_available_protocols,
                                   get_available_variants,
                                   render_summary, trend_checks,
                                   variant_parameter_counts)
    config = resolve_config(args)
    grids = get_available_grids(return_dict=True)
    if args.variants is not None:
        variants = args.variants
    elif args.grid is not None:
        if args.grid not in grids:
            raise UsageError(f"Unknown grid {args.grid!r}. Must be one of "
                             f"{list(grids)}")
        variants = grids[args.grid]
    else:
        variants = grids["generator"]
    unknown = [v for v in variants if v not in get_available_variants()]
    if unknown:
        raise UsageError(f"Unknown variant(s) {unknown}. Must be among "
                         f"{get_available_variants()}")
    if args.protocol not in get_available_protocols():
        raise UsageError(f"Unknown protocol {args.protocol!r}. Must be one "
                         f"of {get_available_protocols()}")
    run_dir = run_directory(config, "ablate")
    if args.counts_only:
        summary = variant_parameter_counts(config, variants)
    else:
        runs, summary = compare_variants(
            config, variants, args.seeds, args.protocol,
            args.holdout_subjects, args.jobs, run_dir, args.verbose)
        runs.to_csv(os.path.join(run_dir, "runs.csv"), index=False)
        with open(os.path.join(run_dir, "trends.json"), "w") as f:
            json.dump(trend_checks(summary), f, indent=2)
    summary.to_csv(os.path.join(run_dir, "summary.csv"), index=False)
    table = render_summary(summary)
    with open(os.path.join(run_dir, "summary.txt"), "w") as f:
        f.write(table + "\n")
    print(table)
    return summary


def cmd_gradcheck(args):
    """Run the gradient checks and return the reports."""
    from .gradcheck import reports_table, run_suites
    try:
        reports = run_suites(args.suites, h=args.step, tol=args.tol,
                             max_checks=args.max_checks, seed=args.seed,
                             inject_bug=args.inject_bug)
    except ValueError as err:
        raise UsageError(str(err))
    print(reports_table(reports).to_string(index=False))
    if args.report is not None:
        with open(args.report, "w") as f:
            json.dump([r.to_dict() for r in reports], f, indent=2)
    return reports


def main(argv=None):
    """Entry point; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE
    commands = {"train": cmd_train, "eval": cmd_eval,
                "synthesize": cmd_synthesize, "ablate": cmd_ablate,
                "gradcheck": cmd_gradcheck}
    try:
        result = commands[args.command](args)
    except UsageError as err:
        print(f"ice_gan {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:
        print(f"ice_gan {args.command}: {type(err).__name__}: {err}",
              file=sys.stderr)
        return EXIT_FAILURE
    if args.command == "gradcheck" and not all(r.passed for r in result):
        failed = [r.name for r in result if not r.passed]
        print(f"ice_gan gradcheck: failed suites: {failed}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
