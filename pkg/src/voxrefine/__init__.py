from . import errors
from . import voxel
from . import lidar
from . import fusion
from . import refine
from . import occlusion
from . import losses
from . import generation
