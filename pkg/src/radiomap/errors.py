"""Exception types raised across the package."""


class RadioMapError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RadioMapError, ValueError):
    pass


class ConfigurationError(RadioMapError, ValueError):
    pass


class OrderingError(RadioMapError, ValueError):
    """A measurement arrived with a time index that is not newer than its predecessors."""


class EmptyDictionaryError(RadioMapError, ValueError):
    pass


class DimensionError(RadioMapError, ValueError):
    pass


class DegenerateConstraintError(RadioMapError, ValueError):
    """The constraint normal vanishes, so the set is not a proper hyperslab."""


class OutOfAreaError(RadioMapError, ValueError):
    pass
