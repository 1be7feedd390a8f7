"""Exception hierarchy.

Every error raised on purpose by the package derives from ``SpoofCuesError``.
``DataError`` subclasses describe bad or degenerate inputs (CLI exit code 2);
the rest are stage failures (exit code 3).
"""


class SpoofCuesError(Exception):
    pass


class DataError(SpoofCuesError):
    pass


# audio ingest
class MalformedWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class AllSilent(DataError):
    pass


class EmptyClass(DataError):
    pass


class DuplicatePath(DataError):
    pass


# frame analysis
class ClipTooShort(DataError):
    pass


class TooFewBins(DataError):
    pass


class NoVoicedContent(DataError):
    pass


class TooFewCycles(DataError):
    pass


class EmptySeries(DataError):
    pass


# statistics / selection
class AllFeaturesDropped(DataError):
    pass


class NoFeatureSurvives(DataError):
    pass


class NotFitted(SpoofCuesError):
    pass


class TooFewRows(DataError):
    pass


# classifiers
class SingularCovariance(SpoofCuesError):
    pass


class EmptyComponent(SpoofCuesError):
    pass


class ClassTooSmall(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# evaluation
class SingleClass(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ConfigMismatch(SpoofCuesError):
    """Artifacts produced under a different configuration were found."""


class NonConvergenceWarning(UserWarning):
    """An iterative trainer hit its iteration cap; the model is still returned."""
