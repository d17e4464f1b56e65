"""Exception hierarchy shared across the package.

Every error raised by earkd derives from EarKDError so callers (CLI,
service) can map library failures to exit codes / HTTP statuses in one
place.
"""


class EarKDError(Exception):
    """Base class for all earkd errors."""


# --- signal layer ---

class InvalidBand(EarKDError):
    """Frequency band is empty or falls outside the Nyquist range."""


class SignalTooShort(EarKDError):
    """Signal has too few samples for the requested operation."""


class EmptyResult(EarKDError):
    """Operation would produce no output (e.g. recording shorter than one epoch)."""


# --- preprocessing ---

class NotEnoughChannels(EarKDError):
    """Pairwise statistics need at least two channels."""


class AllChannelsRejected(EarKDError):
    """Channel rejection left no usable channels."""


class MissingChannel(EarKDError):
    def __init__(self, name: str):
        super().__init__(f"required channel {name!r} not present in recording")
        self.name = name


class RecordingRejected(EarKDError):
    """Whole recording unusable: a derivation cannot be computed."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- dataset / containers ---

class CorruptContainer(EarKDError):
    """Recording container contents disagree with its manifest."""


class UnsupportedFormat(EarKDError):
    """Container declares a dtype or byte order we do not read."""


class InvalidStageToken(EarKDError):
    def __init__(self, line: int, token: str):
        super().__init__(f"line {line}: unknown sleep stage token {token!r}")
        self.line = line
        self.token = token


class AlignmentError(EarKDError):
    """Paired scalp/ear inputs differ in length or sample rate."""


class LabelCountMismatch(EarKDError):
    """Hypnogram label count does not match the number of epochs."""


class NotEnoughSubjects(EarKDError):
    """Leave-one-subject-out needs at least two subjects."""


class InvalidConfig(EarKDError):
    """Configuration values violate a documented constraint."""


class ConfigNotFound(EarKDError):
    """Configuration file path does not exist."""


# --- models / training ---

class ShapeError(EarKDError):
    """Tensor arguments have incompatible shapes."""


class InvalidLabel(EarKDError):
    """Stage label outside the 0..4 code range."""


class EmptyDataset(EarKDError):
    """Training requires a nonempty dataset."""


class FeatureShapeMismatch(EarKDError):
    """Teacher and student feature dimensions differ."""


class CheckpointMismatch(EarKDError):
    """Checkpoint header is incompatible with the requested data/model."""


# --- evaluation ---

class EmptyMatrix(EarKDError):
    """Metrics are undefined on an all-zero confusion matrix."""


class NotEnoughPoints(EarKDError):
    """2-D embedding needs at least three points."""


# --- cli ---

class UsageError(EarKDError):
    """Bad command-line usage; maps to exit code 2."""
