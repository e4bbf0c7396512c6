"""Compare generator and discriminator variants on a common corpus."""
import json
import os
import numpy as np
import pandas as pd
from .generator import Generator
from .ice_gan import get_available_discriminators
from .load_data import load_corpus
from .loso import loso_folds
from .metrics import evaluate_loso
from .run_config import apply_overrides, corpus_kwargs, trainer_kwargs
from .training import Trainer, loso_trainer_factory
from .utils import progress_message

D_EXP_SWEEP = [8, 16, 32, 64, 128]


def get_available_variants(return_dict=False):
    """Get the named variants of the comparison grids.

    Each variant is a set of run-config overrides applied on top of the
    base configuration.
    """
    variants = {
        "none": {"model.grm_mode": "none", "model.level1_skip": False},
        "skip": {"model.grm_mode": "skip"},
        "se": {"model.grm_mode": "se"},
        "grm": {"model.grm_mode": "grm"},
        "grm_channel_attention": {"model.grm_mode": "grm",
                                  "model.inverse_projection":
                                  "channel_attention"},
        "capsule": {"model.discriminator": "capsule"},
        "cnn": {"model.discriminator": "cnn"},
        "cnn_large": {"model.discriminator": "cnn_large"},
    }
    for d_exp in D_EXP_SWEEP:
        variants[f"d_exp_{d_exp}"] = {"model.discriminator": "capsule",
                                      "model.d_exp": d_exp}
    return variants if return_dict else list(variants.keys())


def get_available_grids(return_dict=False):
    """Get the predefined variant grids.

    - "generator": skip paths of G (none, skip, se, grm).
    - "d_exp": ExpCaps pose dimension sweep.
    - "discriminator": capsule head against convolutional heads.
    """
    grids = {"generator": ["none", "skip", "se", "grm"],
             "d_exp": [f"d_exp_{d}" for d in D_EXP_SWEEP],
             "discriminator": ["capsule", "cnn", "cnn_large"]}
    return grids if return_dict else list(grids.keys())


def get_available_protocols():
    return ["holdout", "loso"]


def variant_config(config, variant):
    """Run config of `variant` on top of `config`."""
    variants = get_available_variants(return_dict=True)
    if variant not in variants:
        raise ValueError(f"Unknown variant {variant!r}. Must be one of "
                         f"{list(variants.keys())}")
    overrides = [f"{key}={json.dumps(value)}"
                 for key, value in variants[variant].items()]
    return apply_overrides(config, overrides)


def holdout_split(corpus, holdout_subjects):
    """Train/test samples with the last `holdout_subjects` subjects held out.

    Subjects are ordered by subject key.
    """
    subjects = sorted({s.subject_key for s in corpus})
    if not 0 < holdout_subjects < len(subjects):
        raise ValueError(f"holdout_subjects must be in [1, "
                         f"{len(subjects) - 1}], got {holdout_subjects}")
    test_subjects = set(subjects[-holdout_subjects:])
    train = [s for s in corpus if s.subject_key not in test_subjects]
    test = [s for s in corpus if s.subject_key in test_subjects]
    return train, test


def run_variant(config, variant, seed, corpus, protocol="holdout",
                holdout_subjects=4, jobs=1, run_dir=None):
    """Train and score one variant with one seed.

    returns:
    --------
    dict with variant, seed, uf1, uar, the mean patch IoU of the held-out
    syntheses (nan for loso) and the parameter counts of G and D.
    """
    config = apply_overrides(variant_config(config, variant),
                             [f"optimizer.seed={seed}"])
    kwargs = trainer_kwargs(config)
    if protocol == "holdout":
        train, test = holdout_split(corpus, holdout_subjects)
        trainer = Trainer(**kwargs).fit(train, run_dir)
        report = trainer.evaluate(test)
        ious = [iou for iou in trainer.diagnostics(test)["patch_iou"].values()
                if iou is not None]
        patch_iou = float(np.mean(ious)) if ious else np.nan
    elif protocol == "loso":
        trainer = Trainer(**kwargs)
        report = evaluate_loso(loso_trainer_factory(kwargs, run_dir),
                               loso_folds(corpus), corpus, jobs=jobs)
        patch_iou = np.nan
    else:
        raise ValueError(f"Unknown protocol {protocol!r}. Must be one of "
                         f"{get_available_protocols()}")
    return {"variant": variant,
            "seed": seed,
            "uf1": report.uf1,
            "uar": report.uar,
            "patch_iou": patch_iou,
            "generator_params": trainer.generator.count_parameters(),
            "discriminator_params": trainer.discriminator.count_parameters()}


def compare_variants(config, variants, seeds=(0, 1, 2), protocol="holdout",
                     holdout_subjects=4, jobs=1, run_root=None,
                     verbose=False):
    """Train every variant with every seed and summarize.

    parameters:
    -----------
    config: dict
        Base run config (see `run_config.get_default_run_config`).
    variants: list of str
        Names from `get_available_variants`.
    seeds: list of int
    protocol: str
        "holdout" trains once on all but the last `holdout_subjects`
        subjects; "loso" runs a full LOSO evaluation per variant and seed.
    jobs: int
        Fold parallelism of the loso protocol.
    run_root: str
        If given, each run writes into run_root/<variant>_seed<seed>.
    verbose: bool

    returns:
    --------
    runs: pandas.DataFrame with one row per (variant, seed).
    summary: pandas.DataFrame with one row per variant: median UF1, UAR
        and patch IoU over seeds, and the parameter counts.
    """
    if len(variants) == 0:
        raise ValueError("compare_variants needs at least one variant.")
    corpus = load_corpus(config["corpus"]["origin"], **corpus_kwargs(config))
    rows = []
    for variant in variants:
        for seed in seeds:
            progress_message(f"Training variant {variant} with seed {seed}",
                             verbose)
            run_dir = (None if run_root is None
                       else os.path.join(run_root, f"{variant}_seed{seed}"))
            rows.append(run_variant(config, variant, seed, corpus, protocol,
                                    holdout_subjects, jobs, run_dir))
    runs = pd.DataFrame(rows)
    summary = (runs.groupby("variant", sort=False)
               .agg(uf1_median=("uf1", "median"),
                    uar_median=("uar", "median"),
                    patch_iou_median=("patch_iou", "median"),
                    generator_params=("generator_params", "first"),
                    discriminator_params=("discriminator_params", "first"),
                    runs=("seed", "count"))
               .reset_index())
    return runs, summary


def trend_checks(summary):
    """Ordering checks on the median UF1 of a summary table.

    Returns a dict of check name to True/False, or None when a variant of
    the check is missing from the summary.
    """
    uf1 = dict(zip(summary["variant"], summary["uf1_median"]))
    checks = {"grm >= skip": ("grm", "skip"),
              "skip >= none": ("skip", "none"),
              "capsule >= cnn_large": ("capsule", "cnn_large")}
    out = {}
    for name, (better, worse) in checks.items():
        if better in uf1 and worse in uf1:
            out[name] = bool(uf1[better] >= uf1[worse])
        else:
            out[name] = None
    return out


def render_summary(summary):
    """Fixed-width text table of a summary."""
    return summary.to_string(index=False, float_format="%.4f")


def variant_parameter_counts(config, variants):
    """Parameter counts of G and D per variant, without training.

    D is counted from its layer shapes; G is built untrained.
    """
    discriminators = get_available_discriminators(return_dict=True)
    rows = []
    for variant in variants:
        kwargs = trainer_kwargs(variant_config(config, variant))
        d_class = discriminators[kwargs["discriminator"]]
        rows.append({"variant": variant,
                     "generator_params":
                     Generator(kwargs["generator_kwargs"]).count_parameters(),
                     "discriminator_params":
                     d_class.planned_parameter_count(
                         kwargs["discriminator_kwargs"])})
    return pd.DataFrame(rows)
