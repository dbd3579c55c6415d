"""Exception hierarchy.

Every error raised by the library derives from :class:`FrechetError`, so
callers (the CLI in particular) can report the originating case by class
name.
"""


class FrechetError(Exception):
    """Base class for all library errors."""


# metric_space
class VariantMismatch(FrechetError, ValueError):
    pass


class NotSpd(FrechetError, ValueError):
    pass


class NotSymmetric(FrechetError, ValueError):
    pass


class NotUnit(FrechetError, ValueError):
    pass


class NonFinite(FrechetError, ValueError):
    pass


class NotTangent(FrechetError, ValueError):
    pass


class AntipodalPair(FrechetError, ValueError):
    pass


class EmptySample(FrechetError, ValueError):
    pass


class NoConvergence(FrechetError, RuntimeError):
    pass


class DegenerateSphereSample(FrechetError, ValueError):
    pass


# manifold_graph
class TooFewPoints(FrechetError, ValueError):
    pass


class DimensionMismatch(FrechetError, ValueError):
    pass


# regression
class EmptyNeighborhood(FrechetError):
    """No labeled point lies within the bandwidth of the query."""


class IsolatedQuery(FrechetError):
    """The query reaches no labeled vertex in the neighbor graph."""


class NotEnoughReachable(FrechetError):
    pass


class AllCandidatesFailed(FrechetError):
    pass


class DegenerateDistances(FrechetError, ValueError):
    pass


# cli / io
class SchemaError(FrechetError, ValueError):
    pass


class ConfigError(FrechetError, ValueError):
    pass
