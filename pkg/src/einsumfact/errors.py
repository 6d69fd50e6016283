"""Exception types shared across the package."""


class ModelStringError(ValueError):
    """Malformed or inconsistent einsum model string / dimension binding."""


class LossDomainError(ValueError):
    """Data or parameters outside the domain of the selected loss."""


class EmptySelectionError(ValueError):
    """A mask view selected no entries."""
