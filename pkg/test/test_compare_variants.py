import os
import pandas as pd
import pytest
from ice_gan.compare_variants import (compare_variants, get_available_grids,
                                      get_available_variants, holdout_split,
                                      render_summary, trend_checks,
                                      variant_config, variant_parameter_counts)
from ice_gan.load_data import generate_toy_corpus
from ice_gan.run_config import resolve_run_config

THIN = ['model.channel_plan=[2, 2, 2, 2, 2, 2]',
        'model.z_dim=4',
        'model.d_exp=4',
        'model.discriminator_kwargs={"patch_widths": [2, 2, 2, 2], '
        '"num_primary_types": 2, "d_prim": 4, "d_adv": 4, '
        '"recon_hidden": [4, 4], "head_width": 4, "size_match_d_exp": 4}',
        'training.perceptual_widths=[2, 2, 2, 2]',
        'training.use_neighbors=false',
        'training.debug_level=-1',
        'optimizer.epochs=0',
        'corpus.kwargs={"n_subjects": 3, "samples_per_subject": 3}']


def thin_config():
    return resolve_run_config(overrides=THIN, environ={})


def test_grids_name_known_variants():
    """Every grid lists variants that resolve to valid configs."""
    variants = get_available_variants()
    for grid, members in get_available_grids(return_dict=True).items():
        for variant in members:
            assert variant in variants, (grid, variant)
    config = thin_config()
    assert variant_config(config, "none")["model"]["level1_skip"] is False
    assert variant_config(config, "d_exp_64")["model"]["d_exp"] == 64
    assert config["model"]["d_exp"] == 4
    with pytest.raises(ValueError):
        variant_config(config, "transformer")


def test_holdout_split():
    corpus = generate_toy_corpus(n_subjects=4, samples_per_subject=3)
    train, test = holdout_split(corpus, 1)
    assert len(train) == 9 and len(test) == 3
    assert {s.subject_id for s in test} == {"s03"}
    for bad in [0, 4]:
        with pytest.raises(ValueError):
            holdout_split(corpus, bad)


def test_compare_variants(tmp_path):
    runs, summary = compare_variants(thin_config(), ["skip", "grm"],
                                     seeds=[0, 1], holdout_subjects=1,
                                     run_root=str(tmp_path))
    assert len(runs) == 4
    assert list(summary["variant"]) == ["skip", "grm"]
    assert list(summary["runs"]) == [2, 2]
    assert summary["uf1_median"].between(0, 1).all()
    assert summary["patch_iou_median"].between(0, 1).all()
    assert (summary["generator_params"].iloc[0]
            < summary["generator_params"].iloc[1])
    assert os.path.isdir(os.path.join(tmp_path, "grm_seed1"))
    assert "uf1_median" in render_summary(summary)
    with pytest.raises(ValueError):
        compare_variants(thin_config(), [])


def test_trend_checks():
    summary = pd.DataFrame({"variant": ["none", "skip", "grm"],
                            "uf1_median": [0.4, 0.5, 0.45]})
    checks = trend_checks(summary)
    assert checks["skip >= none"] is True
    assert checks["grm >= skip"] is False
    assert checks["capsule >= cnn_large"] is None


def test_variant_parameter_counts():
    counts = variant_parameter_counts(thin_config(),
                                      ["none", "skip", "se", "grm"])
    params = dict(zip(counts["variant"], counts["generator_params"]))
    assert params["none"] < params["skip"] < params["se"]
    assert params["skip"] < params["grm"]
    assert counts["discriminator_params"].nunique() == 1
