from . import ice_gan
from . import load_data
__author__ = ice_gan.__author__
__copyright__ = ice_gan.__copyright__
__license__ = ice_gan.__license__
__version__ = ice_gan.__version__
__doc__ = ice_gan.__doc__

from .ice_gan import get_available_skip_modes
from .ice_gan import get_available_discriminators
from .ice_gan import build_discriminator
from .generator import Generator
from .load_data import load_corpus
from .training import Trainer
