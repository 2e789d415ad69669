"""Exception types shared across the package."""


class RerlError(Exception):
    """Base class for all package errors."""


class ConstructionError(RerlError, ValueError):
    """Raised when a model or grid specification is invalid."""


class AssumptionError(RerlError, ValueError):
    """Raised when an MDP violates the assumptions required by the linear solver."""


class ConvergenceError(RerlError, RuntimeError):
    """Raised when an iterative oracle fails to converge within its budget."""


class ConsistencyError(RerlError, ValueError):
    """Raised when a desirability vector does not solve its linear system."""


class ConfigurationError(RerlError, ValueError):
    """Raised for unsupported backend parameters."""


class LevelExhaustedError(RerlError, RuntimeError):
    """Raised when a multiplication is requested on a ciphertext with no levels left.

    The caller needs to bootstrap first.
    """


class DecryptionError(RerlError, RuntimeError):
    """Raised when decryption is impossible (missing secret key, bad level)."""


class CapacityError(RerlError, ValueError):
    """Raised when a system does not fit into the ciphertext slots."""


class SerializationError(RerlError, ValueError):
    """Raised on malformed, truncated or version-mismatched byte streams."""


class SynthesisError(RerlError, RuntimeError):
    """Raised when decrypted desirabilities are too noisy to build a policy."""


class ProtocolError(SerializationError):
    """Raised on bad framing, unexpected message types or a remote failure."""
