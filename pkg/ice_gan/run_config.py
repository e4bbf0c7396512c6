"""
Run configuration.

A run configuration is a nested dict with the sections corpus, model,
optimizer, loss_weights, training and output. Values are resolved with the
precedence

    defaults < config file < command-line overrides < ICEGAN_OUT

where ICEGAN_OUT only overrides output.root. The configuration round-trips
through JSON unchanged, and the snapshot written into a run directory is
enough to rerun it.
"""
import copy
import json
import os
from .generator import get_available_decoder_fusions
from .graph_reasoning import get_available_inverse_projections
from .ice_gan import get_available_discriminators, get_available_skip_modes
from .load_data import get_available_corpus_origins, get_load_corpus_defaults
from .losses import LossWeights
from .training import get_available_loss_targets
from .utils import check_kwargs_and_set_defaults

OUTPUT_ENV_VAR = "ICEGAN_OUT"


def get_default_run_config():
    """Defaults of every section of the run configuration."""
    return {
        "corpus": {"origin": "toy",
                   "kwargs": {}},
        "model": {"channel_plan": [20, 40, 80, 160, 320, 320],
                  "image_size": 128,
                  "z_dim": 100,
                  "grm_mode": "grm",
                  "decoder_fusion": "concat",
                  "level1_skip": True,
                  "inverse_projection": "deconv",
                  "discriminator": "capsule",
                  "d_exp": 32,
                  "routing_iterations": 3,
                  "discriminator_kwargs": {}},
        "optimizer": {"lr": 1e-3,
                      "min_lr": 0.0,
                      "batch_size": 16,
                      "epochs": 100,
                      "seed": 0,
                      "beta1": 0.9,
                      "beta2": 0.999,
                      "eps": 1e-8},
        "loss_weights": LossWeights().to_dict(),
        "training": {"warmup_epochs": 10,
                     "checkpoint_every": 10,
                     "pixel_target": "apex",
                     "perceptual_target": "onset",
                     "use_neighbors": True,
                     "perceptual_seed": 1234,
                     "perceptual_widths": [8, 16, 32, 64],
                     "debug_level": 0,
                     "verbose": False,
                     "debug_plots": False},
        "output": {"root": "runs",
                   "run_name": None,
                   "dump_graphs": False},
    }


def merge_run_config(user_config=None):
    """Defaults updated section by section with `user_config`.

    Unknown sections or keys raise ValueError.
    """
    defaults = get_default_run_config()
    user_config = check_kwargs_and_set_defaults(
        user_config, defaults, "run config",
        "ice_gan.run_config.get_default_run_config()")
    config = {}
    for section, values in defaults.items():
        config[section] = check_kwargs_and_set_defaults(
            user_config[section], values, f"run config section {section}",
            "ice_gan.run_config.get_default_run_config()")
    return copy.deepcopy(config)


def _check_range(problems, section, key, value, low=None, high=None,
                 integer=False):
    if integer and (isinstance(value, bool) or not isinstance(value, int)):
        problems.append(f"{section}.{key} must be an integer, got {value!r}")
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        problems.append(f"{section}.{key} must be a number, got {value!r}")
        return
    if low is not None and value < low:
        problems.append(f"{section}.{key} must be >= {low}, got {value}")
    if high is not None and value > high:
        problems.append(f"{section}.{key} must be <= {high}, got {value}")


def validate_run_config(config):
    """Raise ValueError listing every invalid value of a merged config."""
    problems = []
    corpus, model = config["corpus"], config["model"]
    optimizer, training = config["optimizer"], config["training"]
    choices = [
        ("corpus", "origin", corpus["origin"],
         get_available_corpus_origins()),
        ("model", "grm_mode", model["grm_mode"], get_available_skip_modes()),
        ("model", "decoder_fusion", model["decoder_fusion"],
         get_available_decoder_fusions()),
        ("model", "inverse_projection", model["inverse_projection"],
         get_available_inverse_projections()),
        ("model", "discriminator", model["discriminator"],
         get_available_discriminators()),
        ("training", "pixel_target", training["pixel_target"],
         get_available_loss_targets()),
        ("training", "perceptual_target", training["perceptual_target"],
         get_available_loss_targets()),
    ]
    for section, key, value, allowed in choices:
        if value not in allowed:
            problems.append(f"{section}.{key} {value!r} must be one of "
                            f"{allowed}")
    if corpus["origin"] in get_available_corpus_origins():
        unknown = (set(corpus["kwargs"])
                   - set(get_load_corpus_defaults(corpus["origin"])))
        if unknown:
            problems.append(f"corpus.kwargs has unknown key(s) "
                            f"{sorted(unknown)} for origin "
                            f"{corpus['origin']!r}")
    plan = model["channel_plan"]
    if (not isinstance(plan, list) or len(plan) != 6
            or not all(isinstance(c, int) and c >= 1 for c in plan)):
        problems.append(f"model.channel_plan must list 6 positive ints, got "
                        f"{plan!r}")
    _check_range(problems, "model", "image_size", model["image_size"], 128,
                 integer=True)
    if isinstance(model["image_size"], int) and model["image_size"] % 128:
        problems.append(f"model.image_size must be a multiple of 128, got "
                        f"{model['image_size']}")
    for key in ["z_dim", "d_exp", "routing_iterations"]:
        _check_range(problems, "model", key, model[key], 1, integer=True)
    _check_range(problems, "optimizer", "lr", optimizer["lr"], 0.0)
    _check_range(problems, "optimizer", "min_lr", optimizer["min_lr"], 0.0,
                 optimizer["lr"] if isinstance(optimizer["lr"], (int, float))
                 else None)
    _check_range(problems, "optimizer", "batch_size",
                 optimizer["batch_size"], 1, integer=True)
    _check_range(problems, "optimizer", "epochs", optimizer["epochs"], 0,
                 integer=True)
    _check_range(problems, "optimizer", "seed", optimizer["seed"], 0,
                 integer=True)
    for key in ["beta1", "beta2"]:
        _check_range(problems, "optimizer", key, optimizer[key], 0.0, 1.0)
    _check_range(problems, "training", "warmup_epochs",
                 training["warmup_epochs"], 0, integer=True)
    _check_range(problems, "training", "checkpoint_every",
                 training["checkpoint_every"], 1, integer=True)
    if not isinstance(config["output"]["dump_graphs"], bool):
        problems.append(f"output.dump_graphs must be true or false, got "
                        f"{config['output']['dump_graphs']!r}")
    if training["debug_level"] not in [-1, 0, 1, 2]:
        problems.append(f"training.debug_level must be one of [-1, 0, 1, "
                        f"2], got {training['debug_level']!r}")
    try:
        LossWeights.from_dict(config["loss_weights"])
    except (ValueError, TypeError) as err:
        problems.append(f"loss_weights: {err}")
    if problems:
        raise ValueError("Invalid run config:\n  " + "\n  ".join(problems))
    return config


def save_run_config(config, fname):
    with open(fname, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
    return fname


def load_run_config(fname):
    """Read a JSON run config and merge it with the defaults."""
    if not os.path.exists(fname):
        raise FileNotFoundError(f"Run config {fname} not found.")
    with open(fname, encoding="utf-8") as f:
        try:
            user_config = json.load(f)
        except json.JSONDecodeError as err:
            raise ValueError(f"Run config {fname} is not valid JSON: {err}")
    return merge_run_config(user_config)


def parse_override(text):
    """Split "section.key=value" into (["section", "key"], value).

    The value is parsed as JSON when possible ("3", "1e-3", "true",
    "[1, 2]", "null"), otherwise kept as a string.
    """
    if "=" not in text:
        raise ValueError(f"Override {text!r} must look like "
                         "section.key=value")
    path, raw = text.split("=", 1)
    keys = path.strip().split(".")
    if len(keys) < 2 or not all(keys):
        raise ValueError(f"Override {text!r} must name a section and a key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_overrides(config, overrides):
    """Copy of `config` with "section.key=value" overrides applied.

    Only existing keys can be overridden; dict-valued entries such as
    corpus.kwargs accept new sub-keys.
    """
    config = copy.deepcopy(config)
    for text in overrides or []:
        keys, value = parse_override(text)
        node = config
        for depth, key in enumerate(keys[:-1]):
            if not isinstance(node, dict) or key not in node:
                raise ValueError(f"Unknown config entry "
                                 f"{'.'.join(keys[:depth + 1])} in override "
                                 f"{text!r}")
            node = node[key]
        if not isinstance(node, dict):
            raise ValueError(f"Cannot override {text!r}: "
                             f"{'.'.join(keys[:-1])} is not a section")
        if keys[-1] not in node and len(keys) == 2:
            raise ValueError(f"Unknown config entry {'.'.join(keys)} in "
                             f"override {text!r}")
        node[keys[-1]] = value
    return config


def apply_environment(config, environ=None):
    """Apply ICEGAN_OUT to output.root."""
    environ = os.environ if environ is None else environ
    config = copy.deepcopy(config)
    if environ.get(OUTPUT_ENV_VAR):
        config["output"]["root"] = environ[OUTPUT_ENV_VAR]
    return config


def resolve_run_config(fname=None, overrides=None, environ=None):
    """Merged and validated config following the documented precedence."""
    config = (load_run_config(fname) if fname is not None
              else merge_run_config())
    config = apply_overrides(config, overrides)
    config = apply_environment(config, environ)
    return validate_run_config(config)


def generator_kwargs(config):
    """Generator extra_kwargs of a run config."""
    model = config["model"]
    fusion_kwargs = {}
    if model["grm_mode"] == "grm":
        fusion_kwargs = {"inverse_projection": model["inverse_projection"]}
    return {"channel_plan": list(model["channel_plan"]),
            "image_size": model["image_size"],
            "z_dim": model["z_dim"],
            "skip_mode": model["grm_mode"],
            "decoder_fusion": model["decoder_fusion"],
            "level1_skip": model["level1_skip"],
            "fusion_kwargs": fusion_kwargs}


def discriminator_kwargs(config):
    """Discriminator extra_kwargs of a run config."""
    model = config["model"]
    kwargs = dict(model["discriminator_kwargs"])
    kwargs.update({"image_size": model["image_size"],
                   "d_exp": model["d_exp"],
                   "routing_iterations": model["routing_iterations"],
                   "debug_level": config["training"]["debug_level"]})
    return kwargs


def trainer_kwargs(config):
    """Keyword arguments of `training.Trainer` for a run config."""
    training = dict(config["optimizer"])
    training.update(config["training"])
    return {"generator_kwargs": generator_kwargs(config),
            "discriminator": config["model"]["discriminator"],
            "discriminator_kwargs": discriminator_kwargs(config),
            "loss_weights": dict(config["loss_weights"]),
            "training_kwargs": training}


def corpus_kwargs(config):
    """Keyword arguments of `load_data.load_corpus` for a run config."""
    kwargs = dict(config["corpus"]["kwargs"])
    origin = config["corpus"]["origin"]
    if "image_size" in get_load_corpus_defaults(origin):
        kwargs.setdefault("image_size", config["model"]["image_size"])
    return kwargs
