import json
import os
import pytest
from ice_gan.run_config import (apply_overrides, corpus_kwargs,
                                get_default_run_config, load_run_config,
                                merge_run_config, parse_override,
                                resolve_run_config, save_run_config,
                                trainer_kwargs, validate_run_config)


def test_defaults_are_valid():
    config = validate_run_config(merge_run_config())
    assert config == get_default_run_config()
    assert config["model"]["grm_mode"] == "grm"


def test_precedence(tmp_path):
    """defaults < file < overrides < ICEGAN_OUT."""
    fname = os.path.join(tmp_path, "run.json")
    with open(fname, "w") as f:
        json.dump({"optimizer": {"epochs": 5, "lr": 0.01},
                   "output": {"root": "from_file"}}, f)
    config = resolve_run_config(fname, ["optimizer.epochs=7"], environ={})
    assert config["optimizer"]["epochs"] == 7
    assert config["optimizer"]["lr"] == 0.01
    assert config["optimizer"]["batch_size"] == 16
    assert config["output"]["root"] == "from_file"
    config = resolve_run_config(fname, ["output.root=from_flag"],
                                environ={"ICEGAN_OUT": "from_env"})
    assert config["output"]["root"] == "from_env"


def test_parse_override():
    assert parse_override("optimizer.lr=1e-3") == (["optimizer", "lr"],
                                                   1e-3)
    assert parse_override("model.level1_skip=false")[1] is False
    assert parse_override("output.run_name=null")[1] is None
    assert parse_override("model.grm_mode=se")[1] == "se"
    assert parse_override("model.channel_plan=[1, 2]")[1] == [1, 2]
    for text in ["optimizer.lr", "lr=1", "optimizer..lr=1"]:
        with pytest.raises(ValueError):
            parse_override(text)


def test_apply_overrides():
    config = get_default_run_config()
    updated = apply_overrides(config, ["corpus.kwargs.n_subjects=3",
                                       "model.discriminator=cnn"])
    assert updated["corpus"]["kwargs"] == {"n_subjects": 3}
    assert updated["model"]["discriminator"] == "cnn"
    assert config["model"]["discriminator"] == "capsule"
    with pytest.raises(ValueError):
        apply_overrides(config, ["model.depth=3"])
    with pytest.raises(ValueError):
        apply_overrides(config, ["network.depth=3"])
    with pytest.raises(ValueError):
        apply_overrides(config, ["optimizer.lr.value=3"])


def test_validation_lists_every_problem():
    config = apply_overrides(get_default_run_config(),
                             ["model.grm_mode=attention",
                              "optimizer.batch_size=0",
                              "model.image_size=200",
                              "loss_weights.alpha=-1",
                              "corpus.kwargs.frames=4"])
    with pytest.raises(ValueError) as err:
        validate_run_config(config)
    message = str(err.value)
    for fragment in ["model.grm_mode", "optimizer.batch_size",
                     "multiple of 128", "loss_weights", "corpus.kwargs"]:
        assert fragment in message


def test_unknown_sections_and_files(tmp_path):
    with pytest.raises(ValueError):
        merge_run_config({"network": {}})
    with pytest.raises(ValueError):
        merge_run_config({"optimizer": {"momentum": 0.9}})
    with pytest.raises(FileNotFoundError):
        load_run_config(os.path.join(tmp_path, "missing.json"))
    fname = os.path.join(tmp_path, "broken.json")
    with open(fname, "w") as f:
        f.write("{not json")
    with pytest.raises(ValueError):
        load_run_config(fname)


def test_json_round_trip(tmp_path):
    config = resolve_run_config(overrides=["model.grm_mode=se",
                                           "corpus.kwargs.n_subjects=4"],
                                environ={})
    fname = save_run_config(config, os.path.join(tmp_path, "config.json"))
    assert resolve_run_config(fname, environ={}) == config


def test_derived_keyword_arguments():
    config = resolve_run_config(overrides=["model.grm_mode=skip",
                                           "optimizer.epochs=3"],
                                environ={})
    kwargs = trainer_kwargs(config)
    assert kwargs["generator_kwargs"]["skip_mode"] == "skip"
    assert kwargs["generator_kwargs"]["fusion_kwargs"] == {}
    assert kwargs["training_kwargs"]["epochs"] == 3
    assert kwargs["training_kwargs"]["warmup_epochs"] == 10
    assert kwargs["discriminator_kwargs"]["d_exp"] == 32
    assert corpus_kwargs(config)["image_size"] == 128
