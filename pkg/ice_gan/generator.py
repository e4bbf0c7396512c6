"""
Identity-aware encoder-decoder generator.

The encoder turns a neutral onset face x_on (N, 1, 128, 128) in [-1, 1] into
six feature maps f_1..f_6 and an identity embedding e. The synthesis seed
s = (e, z, c) concatenates e with Gaussian noise z and a one-hot class c.
The decoder deconvolves s to the resolution of f_6 and climbs back up,
fusing at every level i in [2, 6] the decoder map with the skip map
g_i = fusion_i(f_i) (channel concatenation, or addition), and ends with a
transposed convolution and tanh producing X_syn with the shape of x_on.
"""
import numpy as np
from .convolution import ConvSpec
from .ice_gan import get_available_skip_modes
from .layers import Conv2d, ConvTranspose2d, ParamRegistry, conv_spec
from .tensor import Tensor, add, concat, relu, reshape, tanh
from .utils import (check_kwargs_and_set_defaults, check_choice,
                    check_one_hot, get_rng, one_hot)

NUM_CLASSES = 3


def get_default_generator_kwargs():
    """Defaults for Generator extra_kwargs.

    channel_plan: list of 6 ints
        Channels of f_1..f_6. The embedding has channel_plan[-1] entries.
    image_size: int
        Side of the square input and output images. Must be a multiple of
        128 so that f_6 is at least 2 x 2; the bottleneck kernel spans
        the whole of f_6.
    z_dim: int
        Dimension of the noise vector.
    skip_mode: str
        One of `ice_gan.get_available_skip_modes()`.
    decoder_fusion: str
        "concat" (channel concatenation) or "add".
    level1_skip: bool
        Feed f_1 to the final transposed convolution. Ignored when
        skip_mode is "none".
    fusion_kwargs: dict
        extra_kwargs of the skip fusion class.
    """
    return {"channel_plan": [20, 40, 80, 160, 320, 320],
            "image_size": 128,
            "z_dim": 100,
            "skip_mode": "grm",
            "decoder_fusion": "concat",
            "level1_skip": True,
            "fusion_kwargs": {}}


def get_available_decoder_fusions():
    return ["concat", "add"]


def make_seed(e, z, c):
    """Synthesis seed s = concat(e, z, c).

    Parameters
    ----------
    e: Tensor
        Embedding, (N, C_e) or (N, C_e, 1, 1).
    z: Tensor or array
        Noise, (N, z_dim).
    c: Tensor or array
        One-hot classes, (N, 3).

    Returns
    -------
    Tensor of shape (N, C_e + z_dim + 3, 1, 1).
    """
    c_data = c.data if isinstance(c, Tensor) else c
    check_one_hot(c_data)
    n = e.shape[0]
    e = reshape(e, (n, -1))
    z = z if isinstance(z, Tensor) else Tensor(z)
    c = c if isinstance(c, Tensor) else Tensor(c)
    if z.shape[0] != n or c.shape[0] != n:
        raise ValueError(f"Batch mismatch in seed: e {e.shape}, z {z.shape}"
                         f", c {c.shape}")
    s = concat([e, reshape(z, (n, -1)), reshape(c, (n, -1))], axis=1)
    return reshape(s, (n, s.shape[1], 1, 1))


class Generator:
    """Encoder-decoder generator G with its own parameter registry."""

    def __init__(self, extra_kwargs=None, seed=0):
        """Init Generator.

        parameters:
        -----------
        extra_kwargs: dict
            See `get_default_generator_kwargs`.
        seed:
            Seed (or numpy Generator) of the parameter initialization.
        """
        self.extra_kwargs = check_kwargs_and_set_defaults(
            extra_kwargs, get_default_generator_kwargs(),
            "generator kwargs", "ice_gan.generator."
            "get_default_generator_kwargs()")
        kw = self.extra_kwargs
        check_choice(kw["skip_mode"], get_available_skip_modes(),
                     "skip_mode")
        check_choice(kw["decoder_fusion"], get_available_decoder_fusions(),
                     "decoder_fusion")
        plan = list(kw["channel_plan"])
        if len(plan) != 6 or min(plan) < 1:
            raise ValueError("channel_plan must list 6 positive channel "
                             f"counts, got {plan}")
        if kw["image_size"] % 128 or kw["image_size"] < 128:
            raise ValueError("image_size must be a positive multiple of 128, "
                             f"got {kw['image_size']}")
        if kw["decoder_fusion"] == "add" and kw["skip_mode"] == "none":
            raise ValueError("decoder_fusion 'add' needs skip maps; use "
                             "'concat' with skip_mode 'none'.")
        rng = get_rng(seed)
        self.plan = plan
        self.image_size = kw["image_size"]
        self.f6_size = self.image_size // 64
        self.z_dim = kw["z_dim"]
        self.seed_dim = plan[-1] + self.z_dim + NUM_CLASSES
        self.registry = ParamRegistry("generator")
        reg = self.registry

        self.encoder = []
        in_channels = 1
        for level, channels in enumerate(plan, start=1):
            self.encoder.append(Conv2d(reg, f"encoder/conv{level}",
                                       conv_spec(in_channels, channels), rng))
            in_channels = channels
        self.bottleneck = Conv2d(reg, "encoder/bottleneck",
                                 ConvSpec(plan[-1], plan[-1], self.f6_size, 1,
                                          0), rng)

        fusion_class = get_available_skip_modes(return_dict=True)[
            kw["skip_mode"]]
        # skips[i] serves level i + 2
        self.skips = [fusion_class(reg, f"skip{level}", plan[level - 1],
                                   rng, kw["fusion_kwargs"] or None)
                      for level in range(2, 7)]

        self.entry = ConvTranspose2d(reg, "decoder/entry",
                                     ConvSpec(self.seed_dim, plan[-1],
                                              self.f6_size, 1, 0), rng)
        self.decoder = {}
        for level in range(6, 1, -1):
            self.decoder[level] = ConvTranspose2d(
                reg, f"decoder/deconv{level}",
                conv_spec(self._fused_channels(level), plan[level - 2]), rng)
        head_in = plan[0] + (plan[0] if self.uses_level1_skip else 0)
        self.head = ConvTranspose2d(reg, "decoder/head",
                                    conv_spec(head_in, 1), rng)

    @property
    def uses_level1_skip(self):
        return (self.extra_kwargs["level1_skip"]
                and self.extra_kwargs["skip_mode"] != "none")

    @property
    def grm_modules(self):
        return [skip.grm for skip in self.skips if hasattr(skip, "grm")]

    def _fused_channels(self, level):
        skip = self.skips[level - 2]
        if self.extra_kwargs["decoder_fusion"] == "add":
            return self.plan[level - 1]
        return self.plan[level - 1] + skip.output_channels

    def count_parameters(self):
        return self.registry.count_parameters()

    def _check_image(self, x):
        size = self.image_size
        if x.ndim != 4 or x.shape[1:] != (1, size, size):
            raise ValueError(f"Expected images of shape (N, 1, {size}, "
                             f"{size}), got {x.shape}")

    def encode(self, x_on):
        """Encode onset faces.

        Returns
        -------
        e: Tensor (N, C_6, 1, 1), the identity embedding.
        features: list of the 6 encoder maps f_1..f_6.
        """
        x_on = x_on if isinstance(x_on, Tensor) else Tensor(x_on)
        self._check_image(x_on)
        features = []
        h = x_on
        for conv in self.encoder:
            h = relu(conv(h))
            features.append(h)
        return self.bottleneck(h), features

    def skip_maps(self, features):
        """g_2..g_6 from f_2..f_6 (entries are None for skip_mode none)."""
        return [skip(f) for skip, f in zip(self.skips, features[1:])]

    def _fuse(self, g, f_dec):
        if g is None:
            return f_dec
        adding = self.extra_kwargs["decoder_fusion"] == "add"
        if (g.shape != f_dec.shape if adding
                else g.shape[2:] != f_dec.shape[2:]):
            raise ValueError(f"Shape mismatch at fusion: skip {g.shape}, "
                             f"decoder {f_dec.shape}")
        if self.extra_kwargs["decoder_fusion"] == "add":
            return add(g, f_dec)
        return concat([g, f_dec], axis=1)

    def decode(self, s, skip_maps, f1=None):
        """Decode a seed into X_syn.

        parameters:
        -----------
        s: Tensor
            Seed (N, seed_dim, 1, 1), see `make_seed`.
        skip_maps: list
            g_2..g_6 as returned by `skip_maps`.
        f1: Tensor
            Encoder level-1 map, used when level-1 skip is enabled.
        """
        if s.shape[1:] != (self.seed_dim, 1, 1):
            raise ValueError(f"Seed must have shape (N, {self.seed_dim}, 1, "
                             f"1), got {s.shape}")
        if len(skip_maps) != 5:
            raise ValueError("decode needs skip maps for levels 2..6, got "
                             f"{len(skip_maps)}")
        f_dec = relu(self.entry(s))
        for level in range(6, 1, -1):
            fused = self._fuse(skip_maps[level - 2], f_dec)
            f_dec = relu(self.decoder[level](fused))
        if self.uses_level1_skip:
            if f1 is None:
                raise ValueError("level1_skip is enabled but f1 is None.")
            f_dec = concat([f1, f_dec], axis=1)
        return tanh(self.head(f_dec))

    def forward(self, x_on, c, z):
        """X_syn for onset faces x_on, one-hot classes c and noise z."""
        e, features = self.encode(x_on)
        s = make_seed(e, z, c)
        return self.decode(s, self.skip_maps(features), features[0])

    def sample_noise(self, n, rng):
        return get_rng(rng).standard_normal((n, self.z_dim))

    def synthesize(self, x_on, c, rng=None):
        """Synthesize apex faces of classes `c` from onset faces `x_on`.

        parameters:
        -----------
        x_on:
            Array or Tensor (N, 1, H, W) in [-1, 1].
        c:
            Integer class indices (N,) or one-hot array (N, 3).
        rng:
            Seed or numpy Generator for the noise. The same seed gives
            bit-identical output.

        returns:
        --------
        numpy array (N, 1, H, W) in [-1, 1].
        """
        x_on = x_on.data if isinstance(x_on, Tensor) else np.asarray(x_on)
        c = np.asarray(c)
        if c.ndim <= 1:
            c = one_hot(c, NUM_CLASSES)
        z = self.sample_noise(x_on.shape[0], rng)
        return self.forward(Tensor(x_on), c, z).data

    def synthesize_all_classes(self, x_on, rng=None):
        """One synthetic face per class from a single onset (1, 1, H, W).

        All classes share the same noise vector.
        """
        x_on = x_on.data if isinstance(x_on, Tensor) else np.asarray(x_on)
        z = np.repeat(self.sample_noise(1, rng), NUM_CLASSES, axis=0)
        batch = np.repeat(x_on[:1], NUM_CLASSES, axis=0)
        return self.forward(Tensor(batch), np.eye(NUM_CLASSES), z).data

    def embedding(self, x_on):
        """Identity embeddings (N, C_6) as numpy array."""
        e, _ = self.encode(Tensor(np.asarray(x_on)))
        return e.data.reshape(e.shape[0], -1)


def embedding_similarity(generator, x_a, x_b):
    """Cosine similarity between the identity embeddings of two faces."""
    e = generator.embedding(np.concatenate([x_a, x_b], axis=0))
    a, b = e[0], e[1]
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0

