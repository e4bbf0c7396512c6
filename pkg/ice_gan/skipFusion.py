"""Base class for the skip paths between generator encoder and decoder."""


class skipFusion:
    """Base class for the transformation applied to one encoder level.

    A skip fusion maps the encoder feature map f_i (N, C_i, H_i, W_i) of
    one generator level to the map g_i that the decoder concatenates with
    its own feature map at that level. Subclasses implement `fuse`.
    """

    def __init__(self, registry, path, channels, rng=None,
                 extra_kwargs=None):
        """Init skipFusion.

        parameters:
        -----------
        registry: ParamRegistry
            Registry receiving the parameters of the fusion, if any.
        path: str
            Parameter path prefix, e.g. "skip3".
        channels: int
            Channel count C_i of the encoder level.
        rng:
            Seed or numpy Generator for parameter initialization.
        extra_kwargs: dict
            Variant specific options, see `get_default_extra_kwargs` of
            the subclass.
        """
        self.registry = registry
        self.path = path
        self.channels = channels
        self.extra_kwargs = extra_kwargs
        self.mode = None

    @staticmethod
    def get_default_extra_kwargs():
        """Defaults for extra_kwargs."""
        return {}

    @property
    def output_channels(self):
        """Channels the fused map contributes to the decoder input."""
        return self.channels

    def fuse(self, f):
        """Map encoder features f_i to g_i (or None when dropped)."""
        raise NotImplementedError("Please override me.")

    def __call__(self, f):
        if f.shape[1] != self.channels:
            raise ValueError(f"Shape mismatch at {self.path}: expected "
                             f"{self.channels} channels, got {f.shape}")
        return self.fuse(f)
