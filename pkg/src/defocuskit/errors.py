"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a physical formula."""


class DataError(ValueError):
    """Array contents violate a precondition (invalid pixels, shape mismatch...)."""


class FormatError(ValueError):
    """A file could not be parsed or uses an unsupported format."""
