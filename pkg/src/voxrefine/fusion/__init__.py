from .densify import *
from .camera import *
from .attention import *
