"""
Capsule layers: squashing, primary capsules and dynamic routing.

A capsule is a pose vector whose length, bounded below 1 by `squash`, is
read as the probability that the entity it represents is present. Routing
by agreement couples every lower capsule i to the upper capsules j through
coefficients c_ij = softmax_j(b_ij), refined over a few iterations by the
agreement between the prediction u_hat_ij = W_ij u_i and the upper output
v_j.
"""
from dataclasses import dataclass, field
import numpy as np
from scipy.special import softmax
from scipy.stats import entropy
from .convolution import ConvSpec
from .layers import Conv2d
from .tensor import (Tensor, add, clip, div, einsum, mul, norm, reshape,
                     square, transpose)
from .utils import get_rng


# |v| never reaches 1: r^2 / (1 + r^2) rounds to 1.0 for r above ~1e8
MAX_LENGTH = 1.0 - 1e-12
# lengths are clipped to [TINY, HUGE] where they enter a division or square
TINY = 1e-150
HUGE = 1e150


def squash(s, axis=-1):
    """v = (|s|^2 / (1 + |s|^2)) s / |s|, with squash(0) = 0.

    The length factor is clipped at MAX_LENGTH, so |v| < 1 also holds in
    floating point for arbitrarily long s; the gradient at 0 is 0.
    """
    length = norm(s, axis=axis, keepdims=True)
    bounded = square(clip(length, 0.0, HUGE))
    factor = clip(div(bounded, add(bounded, 1.0)), 0.0, MAX_LENGTH)
    return mul(div(s, clip(length, TINY, np.inf)), factor)


def squash_array(s, axis=-1):
    """`squash` on plain numpy arrays, used between routing iterations."""
    return squash(Tensor(s), axis=axis).data


@dataclass
class CapsuleBank:
    """Poses (N, n_caps, d) of one capsule layer plus its routing record.

    couplings holds c (N, n_in, n_out) of every routing iteration that
    produced this bank; it is empty for primary capsules.
    """
    tag: str
    poses: object
    couplings: list = field(default_factory=list)

    @property
    def num_capsules(self):
        return self.poses.shape[1]

    @property
    def dim(self):
        return self.poses.shape[2]

    def lengths(self):
        """Differentiable capsule lengths (N, n_caps)."""
        return norm(self.poses, axis=-1)


def coupling_entropy(couplings):
    """Mean entropy of the coupling distribution of each lower capsule."""
    return float(np.mean(entropy(couplings, axis=-1)))


class PrimaryCaps:
    """Convolutional primary capsules.

    A k=4, s=2, p=1 convolution produces num_types * dim channels; every
    grid position of every capsule type is one capsule of dimension `dim`.
    """

    def __init__(self, registry, path, in_channels, num_types=8, dim=16,
                 rng=None):
        self.num_types = num_types
        self.dim = dim
        self.conv = Conv2d(registry, f"{path}/conv",
                           ConvSpec(in_channels, num_types * dim, 4, 2, 1),
                           get_rng(rng))

    def num_capsules(self, size):
        """Number of capsules produced from a size x size feature map."""
        return self.num_types * self.conv.output_size(size) ** 2

    def __call__(self, x):
        h = self.conv(x)
        n, _, gh, gw = h.shape
        h = reshape(h, (n, self.num_types, self.dim, gh, gw))
        h = transpose(h, (0, 1, 3, 4, 2))
        poses = reshape(h, (n, self.num_types * gh * gw, self.dim))
        return CapsuleBank("primary", squash(poses))


class RoutingCaps:
    """Upper capsule layer fed by dynamic routing."""

    def __init__(self, registry, path, num_in, num_out, dim_in, dim_out,
                 iterations=3, rng=None, tag="upper"):
        """Init RoutingCaps.

        parameters:
        -----------
        registry: ParamRegistry
        path: str
            Parameter path prefix.
        num_in, num_out: int
            Number of lower and upper capsules.
        dim_in, dim_out: int
            Pose dimensions of lower and upper capsules.
        iterations: int
            Routing iterations r >= 1.
        rng:
            Seed or numpy Generator.
        tag: str
            Tag of the produced CapsuleBank.
        """
        if iterations < 1:
            raise ValueError(f"Routing needs at least 1 iteration, got "
                             f"{iterations}")
        rng = get_rng(rng)
        self.num_in, self.num_out = num_in, num_out
        self.iterations = iterations
        self.tag = tag
        std = 1.0 / np.sqrt(num_in * dim_out)
        self.weight = registry.register(
            f"{path}/route_weight",
            rng.normal(0.0, std, (num_in, num_out, dim_out, dim_in)))

    def predictions(self, lower):
        """u_hat (N, n_in, n_out, d_out) from lower poses (N, n_in, d_in)."""
        if lower.num_capsules != self.num_in:
            raise ValueError(f"Expected {self.num_in} lower capsules, got "
                             f"{lower.num_capsules}")
        return einsum("ijdk,nik->nijd", self.weight, lower.poses)

    def __call__(self, lower):
        return dynamic_route(self.predictions(lower), self.iterations,
                             self.tag)


def dynamic_route(u_hat, iterations=3, tag="upper"):
    """Routing by agreement.

    Logits b start at 0. Each iteration computes c = softmax_j(b),
    s_j = sum_i c_ij u_hat_ij, v_j = squash(s_j) and, except after the
    last iteration, b_ij += <u_hat_ij, v_j>. The logits and couplings are
    constants for the gradient tape; gradients reach u_hat through the
    last iteration only.

    Parameters
    ----------
    u_hat: Tensor
        Predictions (N, n_in, n_out, d_out).
    iterations: int
        r >= 1.
    tag: str
        Tag of the returned CapsuleBank.

    Returns
    -------
    CapsuleBank with poses v (N, n_out, d_out) and the couplings of every
    iteration.
    """
    if iterations < 1:
        raise ValueError(f"Routing needs at least 1 iteration, got "
                         f"{iterations}")
    u_data = u_hat.data
    logits = np.zeros(u_data.shape[:3])
    history = []
    for iteration in range(iterations):
        if not np.all(np.isfinite(logits)):
            bad = np.argwhere(~np.isfinite(logits))
            raise FloatingPointError(
                f"Non-finite routing logits at iteration {iteration} for "
                f"{tag} capsules: {len(bad)} entries, first at index "
                f"{tuple(bad[0])}; max |u_hat| = "
                f"{np.nanmax(np.abs(u_data))}")
        couplings = softmax(logits, axis=2)
        history.append(couplings)
        if iteration == iterations - 1:
            s = einsum("nij,nijd->njd", Tensor(couplings), u_hat)
            return CapsuleBank(tag, squash(s), history)
        v = squash_array(np.einsum("nij,nijd->njd", couplings, u_data))
        logits = logits + np.einsum("nijd,njd->nij", u_data, v)
