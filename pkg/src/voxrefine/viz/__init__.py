from .color_utils import *
from .volume_slice import *
