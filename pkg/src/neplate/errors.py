"""Exception types raised across the package."""


class NeplateError(Exception):
    """Base class for all package errors."""


class NotSPD(NeplateError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class OutOfDomain(NeplateError, ValueError):
    """A point lies outside the region where a field can be evaluated."""


class MeshMismatch(NeplateError, ValueError):
    """Nodal data does not match the shape of the mesh or grid."""


class DegenerateImmersion(NeplateError, ValueError):
    """Too many cells of an immersion have a vanishing area element."""


class LineSearchFailure(NeplateError, RuntimeError):
    """Backtracking could not find a step satisfying the Armijo condition."""


class TooFewRows(NeplateError, ValueError):
    """A scaling study has fewer converged rows than the classifier needs."""


class EmptyResult(NeplateError, OSError):
    """Attempted to write a plot or table for an empty result."""


class ConfigError(NeplateError, ValueError):
    """Invalid experiment configuration."""
