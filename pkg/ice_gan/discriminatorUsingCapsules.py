"""Capsule-enhanced discriminator."""
from .capsules import PrimaryCaps, RoutingCaps
from .discriminator import (discriminator, DiscriminatorOutput, NUM_CLASSES,
                            patch_encoder_specs)
from .convolution import ConvSpec
from .layers import Linear, flatten
from .losses import l_cls, l_margin, l_rec
from .tensor import mul, relu, reshape, sigmoid
from .utils import one_hot


class discriminatorUsingCapsules(discriminator):
    """PatchGAN features -> PrimaryCaps -> routed AdvCaps and ExpCaps.

    AdvCaps is a single capsule whose length is the probability that the
    input is real. ExpCaps holds one capsule per expression class; the
    class with the longest capsule is the prediction. Both route from the
    same PrimaryCaps bank with their own transformation weights. A
    three-layer reconstruction head decodes the true-class ExpCaps pose back
    to the input image.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.kind = "capsule"

    def build_head(self, rng):
        kw = self.extra_kwargs
        reg = self.registry
        self.primary = PrimaryCaps(reg, "primary",
                                   kw["patch_widths"][-1],
                                   kw["num_primary_types"], kw["d_prim"], rng)
        self.num_primary = self.primary.num_capsules(self.feature_size)
        self.adv_caps = RoutingCaps(reg, "adv_caps", self.num_primary, 1,
                                    kw["d_prim"], kw["d_adv"],
                                    kw["routing_iterations"], rng, "adv")
        self.exp_caps = RoutingCaps(reg, "exp_caps", self.num_primary,
                                    NUM_CLASSES, kw["d_prim"], kw["d_exp"],
                                    kw["routing_iterations"], rng, "exp")
        hidden1, hidden2 = kw["recon_hidden"]
        self.recon = [
            Linear(reg, "recon/fc1", NUM_CLASSES * kw["d_exp"], hidden1, rng),
            Linear(reg, "recon/fc2", hidden1, hidden2, rng),
            Linear(reg, "recon/fc3", hidden2, self.image_size**2, rng)]

    def head_specs(self):
        return [self.primary.conv.spec]

    @classmethod
    def planned_head_parameter_count(cls, kw):
        size = kw["image_size"]
        for spec in patch_encoder_specs(kw["patch_widths"]):
            size = spec.output_size(size)
        prim_channels = kw["num_primary_types"] * kw["d_prim"]
        grid = ConvSpec(kw["patch_widths"][-1], prim_channels, 4, 2,
                        1).output_size(size)
        num_primary = kw["num_primary_types"] * grid**2
        hidden1, hidden2 = kw["recon_hidden"]
        pixels = kw["image_size"]**2
        return (kw["patch_widths"][-1] * 16 * prim_channels + prim_channels
                + num_primary * kw["d_adv"] * kw["d_prim"]
                + num_primary * NUM_CLASSES * kw["d_exp"] * kw["d_prim"]
                + NUM_CLASSES * kw["d_exp"] * hidden1 + hidden1
                + hidden1 * hidden2 + hidden2
                + hidden2 * pixels + pixels)

    def head(self, features):
        primary = self.primary(features)
        adv_bank = self.adv_caps(primary)
        exp_bank = self.exp_caps(primary)
        adv = reshape(adv_bank.lengths(), (features.shape[0],))
        return DiscriminatorOutput(adv, exp_bank.lengths(), exp_bank.poses,
                                   {"adv": adv_bank.couplings,
                                    "exp": exp_bank.couplings})

    def reconstruct(self, exp_poses, true_classes):
        """Decode the true-class ExpCaps poses into images in [0, 1].

        Poses of the other classes are masked to zero before the head.

        parameters:
        -----------
        exp_poses: Tensor
            ExpCaps poses (N, 3, d_exp).
        true_classes:
            Class indices (N,) in {0, 1, 2}.

        returns:
        --------
        Tensor (N, 1, H, W).
        """
        n = exp_poses.shape[0]
        mask = one_hot(true_classes, NUM_CLASSES)
        if mask.shape[0] != n:
            raise ValueError(f"Got {mask.shape[0]} classes for {n} samples.")
        h = flatten(mul(exp_poses, mask[:, :, None]))
        h = relu(self.recon[0](h))
        h = relu(self.recon[1](h))
        out = sigmoid(self.recon[2](h))
        return reshape(out, (n, 1, self.image_size, self.image_size))

    def classification_loss(self, output, labels, x, weights):
        margin = l_margin(output.exp_scores, labels, weights.m_plus,
                          weights.m_minus, weights.lambda_k)
        rec = l_rec(self.reconstruct(output.exp_poses, labels), x)
        return (l_cls(margin, rec, weights.beta),
                {"l_margin": margin.item(), "l_rec": rec.item()})
