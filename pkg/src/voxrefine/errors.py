# Exception hierarchy for voxrefine. Errors that can end a CLI run carry the
# process exit code they map to.


class VoxRefineError(Exception):
    exit_code = 1


class InvalidScale(VoxRefineError):
    pass


class InvalidFactor(VoxRefineError):
    pass


class OutOfBounds(VoxRefineError):
    pass


class EmptyInput(VoxRefineError):
    pass


class ShapeError(VoxRefineError):
    pass


class DuplicateVoxel(VoxRefineError):
    pass


class NoLabels(VoxRefineError):
    pass


class ConfigError(VoxRefineError):
    exit_code = 1


class DatasetNotFound(VoxRefineError):
    exit_code = 2


class ParseError(VoxRefineError):
    exit_code = 3


class DimensionMismatch(VoxRefineError):
    exit_code = 4
