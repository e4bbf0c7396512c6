"""ice_gan wrapper holding the registries of pluggable components.

Identity-aware conditional GAN for micro-expression synthesis and
recognition, built on a from-scratch numpy autodiff core.
"""
__copyright__ = "Copyright (C) 2026 The ice_gan developers"
__status__ = "testing"
__author__ = "The ice_gan developers"
__version__ = "0.1.0"
__license__ = """
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in
all copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
THE SOFTWARE.
"""

from .skipFusionUsingNone import skipFusionUsingNone
from .skipFusionUsingIdentity import skipFusionUsingIdentity
from .skipFusionUsingSqueezeExcitation import skipFusionUsingSqueezeExcitation
from .skipFusionUsingGraphReasoning import skipFusionUsingGraphReasoning
from .discriminatorUsingCapsules import discriminatorUsingCapsules
from .discriminatorUsingConvolutions import discriminatorUsingConvolutions
from .discriminatorUsingLargeConvolutions import \
    discriminatorUsingLargeConvolutions


def get_available_skip_modes(return_dict=False):
    """Get all available generator skip modes.

    - "none": no skip connections.
    - "skip": plain skip connections.
    - "se": skip connections gated by squeeze-and-excitation.
    - "grm": skip connections through graph reasoning.

    If return_dict is True, returns a dictionary mapping mode names to
    skipFusion classes. Else, just returns a list of mode names.
    """
    modes = {
        "none": skipFusionUsingNone,
        "skip": skipFusionUsingIdentity,
        "se": skipFusionUsingSqueezeExcitation,
        "grm": skipFusionUsingGraphReasoning,
    }

    if return_dict:
        return modes
    else:
        return list(modes.keys())


def get_available_discriminators(return_dict=False):
    """Get all available discriminator kinds.

    - "capsule": PrimaryCaps with routed AdvCaps/ExpCaps.
    - "cnn": two-convolution head of width `head_width`.
    - "cnn_large": two-convolution head sized to match the parameter count
      of the capsule discriminator.

    If return_dict is True, returns a dictionary of discriminator classes.
    Else, just returns a list of names.
    """
    kinds = {
        "capsule": discriminatorUsingCapsules,
        "cnn": discriminatorUsingConvolutions,
        "cnn_large": discriminatorUsingLargeConvolutions,
    }

    if return_dict:
        return kinds
    else:
        return list(kinds.keys())


def build_discriminator(kind="capsule", extra_kwargs=None, seed=0):
    """Instantiate the discriminator named `kind`."""
    available = get_available_discriminators(return_dict=True)
    if kind not in available:
        raise ValueError(f"Unknown discriminator {kind!r}. Must be one of "
                         f"{list(available.keys())}")
    return available[kind](extra_kwargs, seed=seed)
