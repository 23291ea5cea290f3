from .kitti import *
from .nuscenes import *
from .rig import *
from .volumes import *
from .reports import *
