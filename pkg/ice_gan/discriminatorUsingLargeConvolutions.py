"""Convolutional discriminator sized to match the capsule discriminator."""
import numpy as np
from .discriminatorUsingConvolutions import discriminatorUsingConvolutions
from .discriminatorUsingCapsules import discriminatorUsingCapsules


def size_matched_head_width(extra_kwargs):
    """Smallest head width whose discriminator is at least as large as the
    capsule discriminator with d_exp = extra_kwargs["size_match_d_exp"].
    """
    capsule_kwargs = dict(extra_kwargs)
    capsule_kwargs["d_exp"] = extra_kwargs["size_match_d_exp"]
    target = discriminatorUsingCapsules.planned_head_parameter_count(
        capsule_kwargs)
    in_channels = extra_kwargs["patch_widths"][-1]
    per_width = (discriminatorUsingConvolutions.head_parameter_count(
        in_channels, 1) - 4)
    return max(1, int(np.ceil((target - 4) / per_width)))


class discriminatorUsingLargeConvolutions(discriminatorUsingConvolutions):
    """discriminatorUsingConvolutions with `size_matched_head_width`."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.kind = "cnn_large"

    def build_head(self, rng):
        self.extra_kwargs["head_width"] = size_matched_head_width(
            self.extra_kwargs)
        super().build_head(rng)

    @classmethod
    def planned_head_parameter_count(cls, kw):
        kw = dict(kw)
        kw["head_width"] = size_matched_head_width(kw)
        return super().planned_head_parameter_count(kw)
