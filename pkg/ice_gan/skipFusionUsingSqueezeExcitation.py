"""Skip connection gated by squeeze-and-excitation."""
from .skipFusion import skipFusion
from .layers import Linear
from .tensor import mean, mul, relu, reshape, sigmoid
from .utils import check_kwargs_and_set_defaults, get_rng


class skipFusionUsingSqueezeExcitation(skipFusion):
    """Rescale encoder channels by a learned gate in (0, 1).

    gate = sigmoid(W2 relu(W1 avgpool(f))), g = f * gate.
    """

    def __init__(self, registry, path, channels, rng=None,
                 extra_kwargs=None):
        super().__init__(registry, path, channels, rng, extra_kwargs)
        self.mode = "se"
        self.extra_kwargs = check_kwargs_and_set_defaults(
            extra_kwargs, self.get_default_extra_kwargs(),
            "squeeze-excitation extra_kwargs",
            "skipFusionUsingSqueezeExcitation.get_default_extra_kwargs()")
        rng = get_rng(rng)
        hidden = max(1, channels // self.extra_kwargs["reduction"])
        self.squeeze = Linear(registry, f"{path}/squeeze", channels, hidden,
                              rng)
        self.excite = Linear(registry, f"{path}/excite", hidden, channels,
                             rng)

    @staticmethod
    def get_default_extra_kwargs():
        """Defaults for extra_kwargs.

        reduction: int
            Bottleneck ratio of the gating MLP. Default is 16.
        """
        return {"reduction": 16}

    def fuse(self, f):
        n, c = f.shape[:2]
        pooled = mean(f, axis=(2, 3))
        gate = sigmoid(self.excite(relu(self.squeeze(pooled))))
        return mul(f, reshape(gate, (n, c, 1, 1)))
