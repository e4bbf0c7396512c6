"""Base class for the multi-task discriminators."""
from dataclasses import dataclass
import json
import numpy as np
from scipy.stats import entropy
from .convolution import receptive_field
from .layers import Conv2d, ParamRegistry, conv_spec
from .tensor import Tensor, leaky_relu
from .utils import check_kwargs_and_set_defaults, get_rng

NUM_CLASSES = 3


@dataclass
class DiscriminatorOutput:
    """Outputs of one discriminator pass.

    adv: Tensor (N,)
        Probability that each input is a real apex face.
    exp_scores: Tensor (N, 3)
        Per-class scores in (0, 1); the argmax is the predicted class.
    exp_poses: Tensor (N, 3, d_exp)
        Class capsule poses, None for convolutional heads.
    couplings: dict
        Routing couplings of this pass, {"adv": [...], "exp": [...]} with
        one (N, n_in, n_out) array per iteration. None for convolutional
        heads.
    """
    adv: object
    exp_scores: object
    exp_poses: object = None
    couplings: dict = None

    def predicted_classes(self):
        return np.argmax(self.exp_scores.data, axis=-1)

    def coupling_entropies(self, tag="exp"):
        """Per-sample mean entropy (N,) of the last routing iteration."""
        if self.couplings is None:
            return None
        return np.mean(entropy(self.couplings[tag][-1], axis=-1), axis=-1)


def get_default_discriminator_kwargs():
    """Defaults for discriminator extra_kwargs.

    patch_widths: list of 4 ints
        Channels of the PatchGAN encoder layers. The first three layers
        halve the resolution (k=4, s=2, p=1), the last keeps stride 1.
    image_size: int
        Side of the square input images.
    leaky_slope: float
        Negative slope of the LeakyReLU activations.
    num_primary_types: int
        Capsule types of PrimaryCaps.
    d_prim, d_adv, d_exp: int
        Pose dimensions of PrimaryCaps, AdvCaps and ExpCaps.
    routing_iterations: int
        Dynamic routing iterations.
    recon_hidden: list of 2 ints
        Hidden sizes of the reconstruction head.
    head_width: int
        Width of the first conv of the convolutional head ("cnn").
    size_match_d_exp: int
        d_exp of the capsule discriminator whose parameter count the
        "cnn_large" head width is matched to.
    debug_level: int
        See `ice_gan.utils.debug_message`.
    """
    return {"patch_widths": [64, 128, 256, 512],
            "image_size": 128,
            "leaky_slope": 0.2,
            "num_primary_types": 8,
            "d_prim": 16,
            "d_adv": 256,
            "d_exp": 32,
            "routing_iterations": 3,
            "recon_hidden": [512, 1024],
            "head_width": 128,
            "size_match_d_exp": 8,
            "debug_level": 0}


def patch_encoder_specs(patch_widths):
    """ConvSpecs of the PatchGAN encoder for the given widths."""
    specs = []
    in_channels = 1
    for i, width in enumerate(patch_widths):
        stride = 2 if i < len(patch_widths) - 1 else 1
        specs.append(conv_spec(in_channels, width, 4, stride, 1))
        in_channels = width
    return specs


def patch_encoder_parameter_count(patch_widths):
    return sum(s.in_channels * s.out_channels * s.kernel**2 + s.out_channels
               for s in patch_encoder_specs(patch_widths))


class discriminator:
    """Base class for D: a PatchGAN encoder followed by a two-task head.

    Subclasses build the head in `build_head` and implement `head`,
    `classification_loss` and `planned_head_parameter_count`.
    """

    def __init__(self, extra_kwargs=None, seed=0):
        """Init discriminator.

        parameters:
        -----------
        extra_kwargs: dict
            See `get_default_discriminator_kwargs`.
        seed:
            Seed (or numpy Generator) of the parameter initialization.
        """
        self.extra_kwargs = check_kwargs_and_set_defaults(
            extra_kwargs, get_default_discriminator_kwargs(),
            "discriminator kwargs",
            "ice_gan.discriminator.get_default_discriminator_kwargs()")
        if len(self.extra_kwargs["patch_widths"]) != 4:
            raise ValueError("patch_widths must list 4 widths, got "
                             f"{self.extra_kwargs['patch_widths']}")
        self.kind = None
        self.image_size = self.extra_kwargs["image_size"]
        self.registry = ParamRegistry("discriminator")
        rng = get_rng(seed)
        self.encoder_specs = patch_encoder_specs(
            self.extra_kwargs["patch_widths"])
        self.encoder = [Conv2d(self.registry, f"patch/conv{i}", spec, rng)
                        for i, spec in enumerate(self.encoder_specs, start=1)]
        self.feature_size = self.image_size
        for spec in self.encoder_specs:
            self.feature_size = spec.output_size(self.feature_size)
        self.build_head(rng)

    def build_head(self, rng):
        raise NotImplementedError("Please override me.")

    def head(self, features):
        """DiscriminatorOutput from PatchGAN features."""
        raise NotImplementedError("Please override me.")

    def classification_loss(self, output, labels, x, weights):
        """Expression classification loss and its logged parts.

        Returns
        -------
        (loss Tensor, dict of float components)
        """
        raise NotImplementedError("Please override me.")

    @classmethod
    def planned_head_parameter_count(cls, extra_kwargs):
        raise NotImplementedError("Please override me.")

    @classmethod
    def planned_parameter_count(cls, extra_kwargs=None):
        """Parameter count of the discriminator built with `extra_kwargs`.

        Computed from the layer shapes without allocating the model.
        """
        kw = check_kwargs_and_set_defaults(
            extra_kwargs, get_default_discriminator_kwargs(),
            "discriminator kwargs",
            "ice_gan.discriminator.get_default_discriminator_kwargs()")
        return (patch_encoder_parameter_count(kw["patch_widths"])
                + cls.planned_head_parameter_count(kw))

    def head_specs(self):
        """ConvSpecs of head convolutions contributing to the receptive field."""
        return []

    def receptive_field(self):
        """Receptive field (pixels) of one unit of the first head layer."""
        return receptive_field(self.encoder_specs + self.head_specs()[:1])

    def count_parameters(self):
        return self.registry.count_parameters()

    def features(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        size = self.image_size
        if x.ndim != 4 or x.shape[1:] != (1, size, size):
            raise ValueError(f"Expected images of shape (N, 1, {size}, "
                             f"{size}), got {x.shape}")
        h = x
        for conv in self.encoder:
            h = leaky_relu(conv(h), self.extra_kwargs["leaky_slope"])
        return h

    def discriminate(self, x):
        """Run D on images x (N, 1, H, W) in [-1, 1]."""
        return self.head(self.features(x))

    def predict(self, x):
        """Predicted expression classes (N,) for images x."""
        return self.discriminate(x).predicted_classes()


def write_evaluation_dump(fname, sample_ids, output, true_classes):
    """Write one JSON line per sample with D's outputs."""
    adv = output.adv.data
    scores = output.exp_scores.data
    predicted = output.predicted_classes()
    entropies = output.coupling_entropies()
    with open(fname, "w") as f:
        for i, sample_id in enumerate(sample_ids):
            record = {"sample_id": sample_id,
                      "adv_len": float(adv[i]),
                      "exp_lengths": [float(v) for v in scores[i]],
                      "predicted_class": int(predicted[i]),
                      "true_class": int(true_classes[i])}
            if entropies is not None:
                record["exp_coupling_entropy"] = float(entropies[i])
            f.write(json.dumps(record) + "\n")
    return fname
