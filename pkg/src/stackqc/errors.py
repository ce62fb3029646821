"""Exception taxonomy shared across the package.

Two families matter downstream:

* :class:`IqmFailure` subclasses signal that a single metric could not be
  computed on a given stack.  The extraction pipeline catches them, stores a
  zero value and sets the paired ``<name>_nan`` flag; they never abort a stack.
* Everything else derives from :class:`StackQcError` and propagates normally
  (bad files, bad manifests, bad model inputs).
"""


class StackQcError(Exception):
    """Base class for all package errors."""


# --- ingestion -------------------------------------------------------------

class MalformedHeader(StackQcError):
    """NIfTI-1 header is structurally invalid (bad magic or sizeof_hdr)."""


class UnsupportedDatatype(StackQcError):
    """NIfTI datatype code outside the supported integer/float set."""


class DimensionError(StackQcError):
    """Image is not 3D after squeezing singleton dimensions."""


class NotBids(StackQcError):
    """Filename does not carry the minimal sub-*/..._T2w entities."""


class DuplicateStackId(StackQcError):
    """Two manifest rows share a stack_id."""


class UnknownSplit(StackQcError):
    """Manifest split value outside {train, pure_test}."""


class MissingFile(StackQcError):
    """A path referenced by the manifest does not exist."""


# --- metric failures (caught by the pipeline, become NaN flags) ------------

class IqmFailure(StackQcError):
    """A single IQM could not be computed; value becomes 0 + flag."""


class TooFewSlices(IqmFailure):
    pass


class EmptyRegion(IqmFailure):
    pass


class EmptyMask(IqmFailure):
    pass


class DegeneratePair(IqmFailure):
    """All slice pairs were skipped (zero variance / empty selections)."""


class SingularFit(IqmFailure):
    """Polynomial bias fit is rank-deficient."""


class ZeroVariance(IqmFailure):
    pass


class AllZeroStd(IqmFailure):
    pass


class EqualMeans(IqmFailure):
    pass


class ConstantImage(IqmFailure):
    pass


class MissingInput(IqmFailure):
    """Required input (label map, dl sidecar) absent for this stack."""


# --- segmentation ----------------------------------------------------------

class UnmappedLabel(StackQcError):
    """A label present in the segmentation has no merge-table entry."""

    def __init__(self, label: int):
        self.label = int(label)
        super().__init__(f"label {int(label)} missing from the merge table")


# --- pipeline --------------------------------------------------------------

class ConfigConflict(StackQcError):
    """Catalogue overrides produced duplicate IQM names."""


class AlignmentError(StackQcError):
    """IQM vectors and manifest records do not pair up by stack_id."""


# --- models ----------------------------------------------------------------

class FeatureMismatch(StackQcError):
    """Prediction input columns do not match the fitted feature names."""


class TooFewFeatures(StackQcError):
    """Fewer features available than the requested selection size."""


class NonFiniteFeatures(StackQcError):
    """Feature matrix contains NaN or infinities (flags should absorb them)."""


# --- evaluation ------------------------------------------------------------

class TooFewGroups(StackQcError):
    """Not enough subjects/scanners to build the requested split plan."""


class NoOverlap(StackQcError):
    """No common stacks between two raters."""


class ScopeEmpty(StackQcError):
    """The requested protocol has no records in scope."""


# --- reports / service -----------------------------------------------------

class RenderError(StackQcError):
    """Volume too degenerate to render a report."""


class AddressInUse(StackQcError):
    """Requested bind address is already taken."""


class CorruptRatings(StackQcError):
    """Ratings log failed to parse; the service refuses to start."""
