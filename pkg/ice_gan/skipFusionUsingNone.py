"""Generator without skip connections."""
from .skipFusion import skipFusion


class skipFusionUsingNone(skipFusion):
    """Drop the encoder features; the decoder sees only its own maps."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.mode = "none"

    @property
    def output_channels(self):
        return 0

    def fuse(self, f):
        return None
