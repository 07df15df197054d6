"""Exception types shared across the package."""


class PostclustError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(PostclustError, ValueError):
    """A matrix required to be symmetric positive definite is not."""


class TooFewObservations(PostclustError, ValueError):
    """Clustering needs at least two observations."""


class InvalidK(PostclustError, ValueError):
    """Requested cluster count is outside 1..n."""


class EmptyClusterCollapse(PostclustError, RuntimeError):
    """A Lloyd iteration emptied a cluster; the replicate should be discarded."""


class UnsupportedLinkage(PostclustError, ValueError):
    """Linkage not in the supported family for this operation."""


class DegenerateDirection(PostclustError, ValueError):
    """The two cluster means coincide, so the perturbation direction is undefined."""


class ClusteringMismatch(PostclustError, ValueError):
    """The requested cluster pair is not produced by the stated clustering."""


class OverlappingGroups(PostclustError, ValueError):
    """Contrast groups must be disjoint."""


class EmptyGroup(PostclustError, ValueError):
    """Contrast groups must be nonempty."""


class RankDeficient(PostclustError, ValueError):
    """Covariance estimation needs a full-rank centered data matrix (n > p)."""


class EmptyTruncationMass(PostclustError, ArithmeticError):
    """The truncation set carries no representable chi mass (below 1e-300)."""


class ZeroDenominator(PostclustError, RuntimeError):
    """No Monte Carlo draw preserved the clustering; increase the draw count."""


class ParseError(PostclustError, ValueError):
    """Malformed input file."""
