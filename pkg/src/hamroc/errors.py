"""Exception types shared across the toolkit."""


class HamrocError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(HamrocError):
    """Operand dimensions are inconsistent."""


class NotSPD(HamrocError):
    """Matrix is not symmetric positive definite, even after diagonal jitter."""


class RankDeficient(HamrocError):
    """Matrix does not have full column rank."""


class RankDeficientJacobian(HamrocError):
    """Decoder Jacobian lost rank; the latent mass matrix is not invertible."""


class InvalidConfig(HamrocError):
    """Configuration value violates its contract."""


class IndexOutOfRange(HamrocError):
    """Node or edge index outside the valid range."""


class PinnedNode(HamrocError):
    """Operation requested on a pinned node."""


class DegenerateSpring(HamrocError):
    """A spring collapsed below the minimum length; its length gradient is undefined."""


class NumericalBlowup(HamrocError):
    """Simulated state norm exceeded the instability threshold."""


class RejectionExhausted(HamrocError):
    """Rejection sampling failed to produce a valid sample within the retry budget."""


class NonFiniteLoss(HamrocError):
    """Training loss became NaN or infinite."""
