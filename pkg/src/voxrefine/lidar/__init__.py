from .pointcloud import *
from .sparse_conv import *
from .backbone import *
