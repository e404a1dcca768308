"""
DRACO - Error Categories.

Every exception raised on purpose by the package derives from DracoError.
The three category bases carry the process exit code used by the CLI:

    ConfigError      2   bad config file, schema violation, mismatched checkpoint
    DataError        3   missing/corrupt files, rejected synthesis, bad joins
    NumericalError   4   non-finite loss, degenerate distributions or features

Module-specific exceptions live next to the code that raises them and
subclass one of these bases.
"""


class DracoError(Exception):
    """Base exception for DRACO operations."""
    exit_code = 1


class ConfigError(DracoError):
    """Invalid configuration or incompatible artifacts."""
    exit_code = 2


class DataError(DracoError):
    """Input data missing, malformed or unusable."""
    exit_code = 3


class NumericalError(DracoError):
    """Computation produced an undefined or non-finite result."""
    exit_code = 4
