"""Skip connection through the graph reasoning module."""
from .skipFusion import skipFusion
from .graph_reasoning import GraphReasoningModule


class skipFusionUsingGraphReasoning(skipFusion):
    """g_i = f_i + T^-1(M̂_i), see `graph_reasoning`."""

    def __init__(self, registry, path, channels, rng=None,
                 extra_kwargs=None):
        super().__init__(registry, path, channels, rng, extra_kwargs)
        self.mode = "grm"
        self.grm = GraphReasoningModule(registry, f"{path}/grm", channels,
                                        rng, extra_kwargs)
        self.extra_kwargs = self.grm.extra_kwargs

    @staticmethod
    def get_default_extra_kwargs():
        return GraphReasoningModule.get_default_extra_kwargs()

    def fuse(self, f):
        return self.grm(f)
