"""
Objectives of the generator and the discriminator.

Generator: identity-preserving loss L_ip = L_pixel + alpha * L_per and the
non-saturating adversarial term. Discriminator: adversarial term and the
classification loss L_cls = L_margin + beta * L_rec. The full objective is

    L = lambda_adv * L_adv + lambda_mes * L_ip + lambda_mer * L_cls.
"""
from dataclasses import dataclass, asdict, fields
import numpy as np
from .layers import Conv2d, ParamRegistry, conv_spec
from .tensor import (Tensor, clip, log, mean, mul, relu, square, sub,
                     tensor_abs, tensor_sum, add)
from .utils import get_rng, one_hot

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Task weights and margin-loss constants."""
    lambda_adv: float = 0.1
    lambda_mes: float = 1.0
    lambda_mer: float = 1.0
    alpha: float = 0.1
    beta: float = 5e-4
    m_plus: float = 0.9
    m_minus: float = 0.1
    lambda_k: float = 0.5

    def __post_init__(self):
        negative = [f.name for f in fields(self) if getattr(self, f.name) < 0]
        if negative:
            raise ValueError(f"Loss weights must be nonnegative: {negative}")
        if not self.m_plus > self.m_minus:
            raise ValueError(f"m_plus ({self.m_plus}) must exceed m_minus "
                             f"({self.m_minus})")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"Invalid key(s) {sorted(unknown)} in loss "
                             f"weights. Should be among "
                             f"{[f.name for f in fields(cls)]}")
        return cls(**values)


def _check_same_shape(a, b, name):
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch in {name}: {a.shape} vs {b.shape}")


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def l_pixel(x_syn, target, sample_weights=None):
    """Mean absolute difference between x_syn and target.

    With `sample_weights` (N,), each sample's mean absolute difference is
    weighted and the result normalized by the weight sum; samples with
    weight 0 do not contribute.
    """
    x_syn, target = _as_tensor(x_syn), _as_tensor(target)
    _check_same_shape(x_syn, target, "l_pixel")
    diff = tensor_abs(sub(x_syn, target))
    if sample_weights is None:
        return mean(diff)
    w = np.asarray(sample_weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ValueError("l_pixel sample weights sum to zero.")
    per_sample = mean(diff, axis=tuple(range(1, diff.ndim)))
    return mul(tensor_sum(mul(per_sample, w)), 1.0 / total)


class PerceptualNet:
    """Fixed random-weight feature extractor used as perceptual cost network.

    Four k=4, s=2, p=1 convolutions with ReLU; features are tapped after
    the second and the fourth layer. Weights are drawn once from `seed` and
    never trained.
    """

    def __init__(self, seed=1234, widths=(8, 16, 32, 64)):
        if len(widths) != 4:
            raise ValueError(f"PerceptualNet needs 4 widths, got {widths}")
        self.seed = seed
        self.widths = tuple(widths)
        self.registry = ParamRegistry("perceptual", trainable=False)
        rng = get_rng(seed)
        in_channels = 1
        self.layers = []
        for i, width in enumerate(widths, start=1):
            self.layers.append(Conv2d(self.registry, f"conv{i}",
                                      conv_spec(in_channels, width), rng))
            in_channels = width
        self.taps = (2, 4)

    def features(self, x):
        h = _as_tensor(x)
        taps = []
        for i, layer in enumerate(self.layers, start=1):
            h = relu(layer(h))
            if i in self.taps:
                taps.append(h)
        return taps


def l_perceptual(target, x_syn, net):
    """Mean over taps of the mean squared feature distance."""
    target, x_syn = _as_tensor(target), _as_tensor(x_syn)
    _check_same_shape(target, x_syn, "l_perceptual")
    terms = [mean(square(sub(a, b))) for a, b in zip(net.features(target),
                                                     net.features(x_syn))]
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term)
    return mul(total, 1.0 / len(terms))


def l_ip(x_syn, pixel_target, perceptual_target, net, alpha,
         sample_weights=None):
    """Identity-preserving loss L_pixel + alpha * L_per.

    Returns
    -------
    (total, l_pixel value, l_per value); the last two as Tensors.
    """
    pixel = l_pixel(x_syn, pixel_target, sample_weights)
    per = l_perceptual(perceptual_target, x_syn, net)
    return add(pixel, mul(per, alpha)), pixel, per


def l_margin(lengths, labels, m_plus=0.9, m_minus=0.1, lambda_k=0.5):
    """Margin loss on capsule lengths, averaged over the batch.

    sum_k T_k max(0, m+ - |v_k|)^2 + lambda_k (1 - T_k) max(0, |v_k| - m-)^2

    Parameters
    ----------
    lengths: Tensor
        Class capsule lengths (N, K).
    labels:
        True class indices (N,).
    """
    lengths = _as_tensor(lengths)
    targets = one_hot(labels, lengths.shape[-1])
    present = square(relu(sub(m_plus, lengths)))
    absent = square(relu(sub(lengths, m_minus)))
    per_class = add(mul(present, targets),
                    mul(absent, lambda_k * (1.0 - targets)))
    return mean(tensor_sum(per_class, axis=-1))


def l_rec(recon, x):
    """Mean squared error between a reconstruction in [0, 1] and x in [-1, 1].

    x is mapped to [0, 1] first.
    """
    recon, x = _as_tensor(recon), _as_tensor(x)
    _check_same_shape(recon, x, "l_rec")
    target = (x.data + 1.0) / 2.0
    return mean(square(sub(recon, target)))


def l_cls(margin, rec, beta):
    """L_cls = L_margin + beta * L_rec."""
    return add(margin, mul(rec, beta))


def l_cross_entropy(probs, labels):
    """Mean negative log-probability of the true class."""
    probs = _as_tensor(probs)
    targets = one_hot(labels, probs.shape[-1])
    picked = tensor_sum(mul(probs, targets), axis=-1)
    return mul(mean(log(clip(picked, PROB_EPS, 1.0 - PROB_EPS))), -1.0)


def gan_discriminator_term(d_real, d_fake):
    """-mean[log D(x_real) + log(1 - D(x_fake))], D clamped to [eps, 1-eps]."""
    real = log(clip(_as_tensor(d_real), PROB_EPS, 1.0 - PROB_EPS))
    fake = log(sub(1.0, clip(_as_tensor(d_fake), PROB_EPS, 1.0 - PROB_EPS)))
    return mul(add(mean(real), mean(fake)), -1.0)


def gan_generator_term(d_fake):
    """Non-saturating generator term -mean log D(x_fake)."""
    fake = log(clip(_as_tensor(d_fake), PROB_EPS, 1.0 - PROB_EPS))
    return mul(mean(fake), -1.0)


def l_gan(d_real, d_fake):
    """(d_term, g_term) of the adversarial game."""
    return (gan_discriminator_term(d_real, d_fake),
            gan_generator_term(d_fake))


def total_objective(adv, ip, cls, weights):
    """lambda_adv * adv + lambda_mes * ip + lambda_mer * cls.

    Terms may be Tensors, floats or None (treated as absent).
    """
    total = Tensor(0.0)
    for term, weight in ((adv, weights.lambda_adv), (ip, weights.lambda_mes),
                         (cls, weights.lambda_mer)):
        if term is not None:
            total = add(total, mul(term, weight))
    return total
