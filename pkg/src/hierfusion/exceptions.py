"""Exception hierarchy for the toolkit.

Every error raised by the library derives from :class:`HierFusionError`,
so callers (including the CLI) can catch one type. The leaf classes mirror
the failure modes of the individual modules.
"""


class HierFusionError(Exception):
    """Base class for all toolkit errors."""


# -- taxonomy ------------------------------------------------------------

class StructureError(HierFusionError):
    """A label structure violates its invariants."""


class OrphanSubclass(StructureError):
    """A subclass has no parent superclass."""


class UnknownSubclass(StructureError):
    """parent_of references a subclass that is not in the subclass list."""


class UnknownSuperclass(StructureError):
    """parent_of references a superclass that is not declared."""


class EmptySuperclass(StructureError):
    """A declared superclass has no children."""


class DuplicateSubclass(StructureError):
    """The same subclass appears twice."""


class IdOutOfRange(HierFusionError):
    """A subclass id is outside [0, subclass_count)."""


class SubclassSpaceMismatch(HierFusionError):
    """Inputs disagree on the shared subclass id space."""


# -- features ------------------------------------------------------------

class FeatureFileError(HierFusionError):
    """A feature file violates its format."""


class MalformedRow(FeatureFileError):
    """A row cannot be parsed."""


class DimensionMismatch(HierFusionError):
    """Vector or matrix dimensions disagree."""


class NonFiniteValue(HierFusionError):
    """A NaN or infinity appeared where finite values are required."""


class UnknownLabel(FeatureFileError):
    """A sample label does not resolve against the subclass name table."""


class ClassTooSmall(HierFusionError):
    """A class has too few samples for the requested operation."""

    def __init__(self, class_id, message=None):
        self.class_id = class_id
        super().__init__(message or f"class {class_id} has too few samples")


class InvalidSpec(HierFusionError):
    """A synthetic-data spec violates its invariants."""


# -- structure builder ---------------------------------------------------

class IsolatedClass(HierFusionError):
    """A class has zero affinity degree (or a degenerate embedding row)."""


class EigensolverFailure(HierFusionError):
    """The eigensolver did not converge within its iteration budget."""


class DegeneratePoints(HierFusionError):
    """k-means cannot find k distinct points to seed from."""


class EmptyCluster(HierFusionError):
    """A cluster ended up with no members."""


# -- metrics -------------------------------------------------------------

class EmptyBatch(HierFusionError):
    """A prediction batch (or structure set) is empty where content is required."""


# -- model ---------------------------------------------------------------

class InvalidConfig(HierFusionError):
    """A model or experiment configuration violates its invariants."""


class LabelOutOfRange(HierFusionError):
    """A training label is outside the head's class range."""


class DivergedLoss(HierFusionError):
    """Training produced a non-finite loss."""


# -- checkpoint / files --------------------------------------------------

class CheckpointError(HierFusionError):
    """A checkpoint file is malformed or truncated."""
