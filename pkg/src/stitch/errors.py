"""Domain exception hierarchy.

Every error the toolkit raises on bad input or violated contracts derives
from StitchError, so the CLI can map them to exit code 1 uniformly.
"""


class StitchError(Exception):
    """Base class for all domain errors."""


# layout planning
class MalformedLLMResponse(StitchError):
    pass


class EmptyLayout(StitchError):
    pass


class UnsatisfiableScene(StitchError):
    pass


class ProviderError(StitchError):
    """Transport-level failure talking to a layout provider."""


# model core
class FullyMaskedRow(StitchError):
    pass


# region binding
class DegenerateBox(StitchError):
    pass


# cutout
class NoTextTokens(StitchError):
    pass


class AllZeroWeights(StitchError):
    pass


class EmptyAfterRestriction(StitchError):
    pass


class EmptyTarget(StitchError):
    pass


class EmptyCorpus(StitchError):
    pass


# pipeline
class ShapeMismatch(StitchError):
    pass


class BranchDivergence(StitchError):
    pass


# benchmark
class UnknownTask(StitchError):
    pass


class InsufficientVocab(StitchError):
    pass


class MissingClassMetadata(StitchError):
    pass


class Misaligned(StitchError):
    pass


# configuration
class UnknownKey(StitchError):
    pass


class TypeMismatch(StitchError):
    pass
