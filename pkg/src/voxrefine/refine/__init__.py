from .hvfr import *
