from .grid import *
from .sparse import *
