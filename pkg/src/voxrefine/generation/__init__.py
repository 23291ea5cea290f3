from .probability import *
from .classes import *
from .region import *
