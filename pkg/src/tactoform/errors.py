"""Exception types shared across the package."""


class TactoformError(Exception):
    """Base class for all library errors."""


# --- grid I/O ---

class BadMagic(TactoformError):
    """File does not start with the expected magic bytes."""


class DimMismatch(TactoformError):
    """Array or vector dimensions do not match the declared shape."""


class TruncatedFile(TactoformError):
    """File ended before the declared payload was read."""


# --- geometry / clouds ---

class EmptySurface(TactoformError):
    """No cell reaches the surface-extraction threshold."""


class EmptyCloud(TactoformError):
    """Point cloud operand is empty."""


class DegenerateCalibration(TactoformError):
    """Calibration points are collinear or coincident."""


# --- tactile ---

class InsufficientCalibration(TactoformError):
    """Reflectance lookup table has no calibration samples."""


# --- prior / corpus ---

class ShapeOutOfBounds(TactoformError):
    """A sampled shape parameterization cannot fit inside the grid margin."""


class NoVisiblePixels(TactoformError):
    """Depth view contains no usable pixel."""


class RankDeficientWarning(UserWarning):
    """Corpus rank is below the requested latent dimension."""


# --- refinement ---

class OutOfBounds(TactoformError):
    """A constraint cell lies outside the voxel grid."""


# --- policy ---

class RegionTooLarge(TactoformError):
    """Requested window does not fit inside the search grid."""


class NoTouchableRegion(TactoformError):
    """Every candidate placement is masked or blocked."""


# --- sim ---

class PlanOutOfBounds(TactoformError):
    """Touch plan does not intersect the scene volume."""


class BadScene(TactoformError):
    """Scene configuration is malformed."""


# --- service ---

class UnknownPrior(TactoformError):
    """Requested prior id is not loaded."""


class SessionNotFound(TactoformError):
    """No session with the given id."""


class SessionConflict(TactoformError):
    """A mutation is already in flight for this session."""


class BlockedPlan(TactoformError):
    """Requested touch plan fails the clearance check."""
