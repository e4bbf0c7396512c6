"""Convolutional discriminator head, the counterpart of the capsule head."""
from .discriminator import discriminator, DiscriminatorOutput
from .convolution import ConvSpec
from .layers import Conv2d
from .losses import l_cross_entropy
from .tensor import leaky_relu, mean, sigmoid, softmax


class discriminatorUsingConvolutions(discriminator):
    """PatchGAN features -> two convolutions -> adversarial and class heads.

    The first convolution (k=4, s=2, p=1) has `head_width` channels, the
    second (k=3, s=1, p=1) produces 4 channels that are averaged over
    space: channel 0 gives the probability of real through a sigmoid,
    channels 1-3 the class probabilities through a softmax.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.kind = "cnn"

    def build_head(self, rng):
        width = self.extra_kwargs["head_width"]
        self.head_conv1 = Conv2d(self.registry, "head/conv1",
                                 ConvSpec(self.extra_kwargs["patch_widths"][-1],
                                          width, 4, 2, 1), rng)
        self.head_conv2 = Conv2d(self.registry, "head/conv2",
                                 ConvSpec(width, 4, 3, 1, 1), rng)

    def head_specs(self):
        return [self.head_conv1.spec, self.head_conv2.spec]

    @staticmethod
    def head_parameter_count(in_channels, width):
        return in_channels * 16 * width + width + width * 9 * 4 + 4

    @classmethod
    def planned_head_parameter_count(cls, kw):
        return cls.head_parameter_count(kw["patch_widths"][-1],
                                        kw["head_width"])

    def head(self, features):
        h = leaky_relu(self.head_conv1(features),
                       self.extra_kwargs["leaky_slope"])
        pooled = mean(self.head_conv2(h), axis=(2, 3))
        return DiscriminatorOutput(sigmoid(pooled[:, 0]),
                                   softmax(pooled[:, 1:], axis=-1))

    def classification_loss(self, output, labels, x, weights):
        loss = l_cross_entropy(output.exp_scores, labels)
        return loss, {"l_margin": loss.item(), "l_rec": 0.0}
