"""Exception taxonomy.

Every failure mode of the numerical constructions maps to one class here so
callers can react to the specific geometry problem (bad quadrant, escaped
orbit, ...) instead of parsing messages.
"""


class HornmapError(Exception):
    """Base class for all errors raised by this package."""


class MoreThanTwoFixedPoints(HornmapError):
    """Root isolation found more than two fixed points in the localization disk."""


class PoleAtLattice(HornmapError):
    """Covering chart evaluated where its denominator vanishes."""


class NoConvergence(HornmapError):
    """An iterative refinement (Newton, descent, series solve) did not converge."""


class DomainExhausted(HornmapError):
    """No radius in the exclusion ladder certifies the lifted-map bounds."""


class OutOfDomain(HornmapError):
    """Evaluation requested outside the certified or reachable domain."""


class QuadrantViolatesBounds(HornmapError):
    """The near-translation bounds fail at a probe point of the quadrant."""


class OrbitEscapedQuadrant(HornmapError):
    """An orbit left the quadrant before reaching the far zone."""


class ExtrapolationDiverged(HornmapError):
    """Richardson/series extrapolation failed to settle."""


class DiskNotContained(HornmapError):
    """The probe disk is not contained in the coordinate's quadrant."""


class SeedOutsideQuadrant(HornmapError):
    """Newton seed for inversion fell outside the quadrant."""


class EtaTooSmall(HornmapError):
    """Requested strip height fails the univalence/inversion probes."""


class AlphaTooLarge(HornmapError):
    """Rotation number too large for the requested quadrant geometry."""


class EmptyDomain(HornmapError):
    """A domain restriction removed every probe point."""


class LeftDomain(HornmapError):
    """A return-map orbit left the restricted domain."""


class RootsNotDistinct(HornmapError):
    """Periodic points supplied to the petal normalization are not distinct."""


class BranchCutCrossed(HornmapError):
    """A periodic point sits on the q-th-root branch cut."""


class ConfigInvalid(HornmapError):
    """Job configuration failed validation."""
