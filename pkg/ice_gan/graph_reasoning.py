"""
Graph reasoning over channel graphs.

An encoder feature map f (N, C, H, W) is aggregated into supernodes by a
strided convolution T, the supernode features f̂ (N, C, Ns) define a fully
connected graph over the C channels with node features given by the rows of
the similarity map

    M = phi(f̂) theta(f̂)^T / sqrt(Ns),

a graph convolution with learnable adjacency reasons over it,

    M̂ = relu((A + I) M W),

and the result is projected back to the resolution of f and added to it,

    g = f + T^-1(M̂).
"""
import os
from dataclasses import dataclass
import numpy as np
from .convolution import ConvSpec
from .layers import Conv2d, ConvTranspose2d
from .tensor import (add, matmul, mul, relu, reshape, tensor_from_bytes,
                     tensor_to_bytes, transpose)
from .utils import check_kwargs_and_set_defaults, check_choice, get_rng


@dataclass
class SupernodeFeatures:
    """Supernode matrix f̂ of shape (N, C, Ns) and the (C, H, W) it came from."""
    fhat: object
    source_shape: tuple

    @property
    def num_supernodes(self):
        return self.fhat.shape[-1]

    @property
    def grid_shape(self):
        _, h, w = self.source_shape
        return (h // 2, w // 2)


@dataclass
class ChannelGraph:
    """Similarity map M over channels and the learnable graph parameters."""
    M: object
    A: object
    W: object
    phi: object
    theta: object

    @property
    def num_nodes(self):
        return self.M.shape[-1]


def check_grm_geometry(shape):
    """Spatial extents must be even and at least 2."""
    _, _, h, w = shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ValueError("Graph reasoning needs even spatial extents >= 2, "
                         f"got feature map of shape {shape}")


def supernode_transform(f, transform):
    """Aggregate f into supernodes with the k=3, s=2, p=1 conv `transform`.

    Parameters
    ----------
    f: Tensor
        Feature map (N, C, H, W) with H, W even.
    transform: Conv2d
        Channel-preserving convolution.

    Returns
    -------
    SupernodeFeatures with f̂ of shape (N, C, H/2 * W/2).
    """
    check_grm_geometry(f.shape)
    n, c, h, w = f.shape
    reduced = transform(f)
    return SupernodeFeatures(reshape(reduced, (n, c, (h // 2) * (w // 2))),
                             (c, h, w))


def similarity_map(supernodes, phi, theta):
    """M = phi f̂ (theta f̂)^T / sqrt(Ns), one C x C matrix per sample."""
    fhat = supernodes.fhat
    mapped_phi = matmul(phi, fhat)
    mapped_theta = matmul(theta, fhat)
    scale = 1.0 / np.sqrt(supernodes.num_supernodes)
    return mul(matmul(mapped_phi, transpose(mapped_theta, (0, 2, 1))), scale)


def gcn_update(M, A, W):
    """M̂ = relu((A + I) M W)."""
    self_loops = add(A, np.eye(A.shape[-1]))
    return relu(matmul(matmul(self_loops, M), W))


def inverse_project_and_fuse(M_hat, supernodes, f, inverse_transform):
    """g = f + deconv(reshape(M̂ f̂)).

    Parameters
    ----------
    M_hat: Tensor
        Reasoned channel graph (N, C, C).
    supernodes: SupernodeFeatures
        Output of `supernode_transform` for `f`.
    f: Tensor
        The encoder feature map the supernodes were computed from.
    inverse_transform: ConvTranspose2d
        k=4, s=2, p=1 channel-preserving transposed convolution.
    """
    n = f.shape[0]
    c = supernodes.source_shape[0]
    grid = supernodes.grid_shape
    projected = reshape(matmul(M_hat, supernodes.fhat), (n, c, *grid))
    restored = inverse_transform(projected)
    if restored.shape != f.shape:
        raise ValueError(f"Shape mismatch: reconstructed map {restored.shape}"
                         f" vs feature map {f.shape}")
    return add(f, restored)


def channel_attention_fuse(M_hat, f, scale):
    """g = f + scale * reshape(M̂ f): M̂ used directly as channel attention."""
    n, c, h, w = f.shape
    attended = matmul(M_hat, reshape(f, (n, c, h * w)))
    return add(f, mul(reshape(attended, (n, c, h, w)), scale))


class GraphReasoningModule:
    """Learnable graph reasoning block mapping (N, C, H, W) to itself."""

    def __init__(self, registry, path, channels, rng=None,
                 extra_kwargs=None):
        """Init GraphReasoningModule.

        Parameters
        ----------
        registry: ParamRegistry
            Registry receiving the module's parameters.
        path: str
            Parameter path prefix.
        channels: int
            Channel count C of the feature maps to reason over.
        rng:
            Seed or numpy Generator for the initialization.
        extra_kwargs: dict
            See `get_default_extra_kwargs`.
        """
        self.extra_kwargs = check_kwargs_and_set_defaults(
            extra_kwargs, self.get_default_extra_kwargs(),
            "GraphReasoningModule extra_kwargs",
            "GraphReasoningModule.get_default_extra_kwargs()")
        check_choice(self.extra_kwargs["inverse_projection"],
                     get_available_inverse_projections(),
                     "inverse_projection")
        rng = get_rng(rng)
        self.channels = channels
        self.path = path
        self.transform = Conv2d(registry, f"{path}/transform",
                                ConvSpec(channels, channels, 3, 2, 1), rng)
        scale = np.sqrt(1.0 / channels)
        self.phi = registry.register(
            f"{path}/phi", rng.normal(0.0, scale, (channels, channels)))
        self.theta = registry.register(
            f"{path}/theta", rng.normal(0.0, scale, (channels, channels)))
        self.A = registry.register(
            f"{path}/A", rng.normal(0.0, self.extra_kwargs["adjacency_std"],
                                    (channels, channels)))
        self.W = registry.register(f"{path}/W", np.eye(channels))
        if self.extra_kwargs["inverse_projection"] == "deconv":
            self.inverse_transform = ConvTranspose2d(
                registry, f"{path}/inverse_transform",
                ConvSpec(channels, channels, 4, 2, 1), rng)
        else:
            self.attention_scale = registry.register(
                f"{path}/attention_scale", np.zeros((channels, 1, 1)))
        self.last_graph = None

    @staticmethod
    def get_default_extra_kwargs():
        """Defaults for extra_kwargs.

        inverse_projection: str
            How M̂ is brought back to the feature map.
            - "deconv": reshape(M̂ f̂) followed by a transposed convolution.
            - "channel_attention": M̂ applied to the channels of f with a
              per-channel scale initialized at zero.
            Default is "deconv".
        adjacency_std: float
            Standard deviation of the normal initialization of A.
            Default is 0.01.
        record_graphs: bool
            Keep the last M and M̂ (as numpy arrays) in `last_graph`.
            Default is True.
        """
        return {"inverse_projection": "deconv",
                "adjacency_std": 0.01,
                "record_graphs": True}

    def channel_graph(self, supernodes):
        return ChannelGraph(similarity_map(supernodes, self.phi, self.theta),
                            self.A, self.W, self.phi, self.theta)

    def __call__(self, f):
        supernodes = supernode_transform(f, self.transform)
        graph = self.channel_graph(supernodes)
        M_hat = gcn_update(graph.M, graph.A, graph.W)
        if self.extra_kwargs["record_graphs"]:
            self.last_graph = {"M": graph.M.data.copy(),
                               "M_hat": M_hat.data.copy()}
        if self.extra_kwargs["inverse_projection"] == "deconv":
            return inverse_project_and_fuse(M_hat, supernodes, f,
                                            self.inverse_transform)
        return channel_attention_fuse(M_hat, f, self.attention_scale)

    def reduce_to_skip(self):
        """Set A=0, W=I, phi=theta=I and zero the inverse projection.

        The module then returns its input unchanged.
        """
        eye = np.eye(self.channels)
        self.A.data = np.zeros_like(eye)
        self.W.data = eye.copy()
        self.phi.data = eye.copy()
        self.theta.data = eye.copy()
        if self.extra_kwargs["inverse_projection"] == "deconv":
            self.inverse_transform.weight.data = np.zeros_like(
                self.inverse_transform.weight.data)
            self.inverse_transform.bias.data = np.zeros_like(
                self.inverse_transform.bias.data)
        else:
            self.attention_scale.data = np.zeros_like(
                self.attention_scale.data)


def get_available_inverse_projections():
    return ["deconv", "channel_attention"]


def dump_graphs(modules, directory):
    """Save the last recorded M and M̂ of each module as serialized tensors.

    Every module that has run writes `<path>.graph` to `directory` (with
    "/" in its parameter path replaced by "_"): M followed by M̂, both in
    the `tensor_to_bytes` layout. Modules that have not run are skipped.

    Returns
    -------
    List of the written file names.
    """
    os.makedirs(directory, exist_ok=True)
    fnames = []
    for module in modules:
        if module.last_graph is None:
            continue
        fname = os.path.join(directory,
                             module.path.replace("/", "_") + ".graph")
        with open(fname, "wb") as f:
            f.write(tensor_to_bytes(module.last_graph["M"])
                    + tensor_to_bytes(module.last_graph["M_hat"]))
        fnames.append(fname)
    print(f"Channel graphs of {len(fnames)} module(s) saved to {directory}")
    return fnames


def load_graph(fname):
    """(M, M_hat) as numpy arrays from a file written by `dump_graphs`."""
    with open(fname, "rb") as f:
        buffer = f.read()
    M, offset = tensor_from_bytes(buffer)
    M_hat, end = tensor_from_bytes(buffer, offset)
    if end != len(buffer):
        raise ValueError(f"{fname} has {len(buffer) - end} trailing bytes.")
    return M.data, M_hat.data
