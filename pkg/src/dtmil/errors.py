"""Exception hierarchy shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NumericalInputError(ValueError):
    """An input is structurally valid but numerically unusable (e.g. an
    indefinite Gram matrix)."""


class DegenerateInputError(InvalidInputError):
    """Data or initialization that would pin the algorithm at a fixed point
    (all-zero codeword, all-zero instance pool)."""


class DatasetFormatError(InvalidInputError):
    """A dataset file does not conform to the JSON-lines bag format."""


class ModelFormatError(InvalidInputError):
    """A model file is malformed, has the wrong version, or holds the wrong
    model kind for the requested loader."""
