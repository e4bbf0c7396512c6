"""Plain U-net skip connection."""
from .skipFusion import skipFusion


class skipFusionUsingIdentity(skipFusion):
    """Pass the encoder features to the decoder unchanged."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.mode = "skip"

    def fuse(self, f):
        return f
