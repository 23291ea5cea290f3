from .raycast import *
from .labels import *
from .head import *
