"""Exception types shared across the toolkit."""


class UwbposError(Exception):
    """Base class for all toolkit-specific errors."""


class AllZeroCir(UwbposError):
    """A CIR window contains only zeros; max-normalization is undefined."""


class MissingLabel(UwbposError):
    """A labeled quantity was requested from an unlabeled record."""


class DelayOutOfRange(UwbposError):
    """A multipath delay falls outside the CIR buffer."""


class NoPeakFound(UwbposError):
    """No sample satisfies the peak detector's conditions."""


class NoEdgeFound(UwbposError):
    """No sample satisfies the leading-edge detector's conditions."""


class EmptyGrid(UwbposError):
    """A tuning grid contains no valid parameter combination."""


class ShapeMismatch(UwbposError):
    """Tensor shapes are incompatible with the requested operation."""


class NoForwardCache(UwbposError):
    """backward() called without a preceding forward() pass."""


class EmptyDataset(UwbposError):
    """Training requires non-empty train and validation sets."""


class TooFewAnchors(UwbposError):
    """Positioning needs at least three usable anchors."""


class DegenerateGeometry(UwbposError):
    """The linearized system is singular or ill-conditioned (e.g. collinear anchors)."""


class SingularUpdate(UwbposError):
    """The Gauss-Newton update is undefined at the current iterate."""


class SchemaMismatch(UwbposError):
    """An input file does not match the configured schema."""


class PartialIngest(UwbposError):
    """Ingestion produced no usable records."""


class AnchorOrderMismatch(UwbposError):
    """A fingerprint set's anchors do not match the model's training order."""


class EmptySamples(UwbposError):
    """A statistic was requested over an empty sample set."""


class MissingArtifacts(UwbposError):
    """An evaluation method lacks its tuned parameters or trained model."""
