"""Semantic exception hierarchy.

Every contract violation raises a named error rather than a bare ValueError,
so callers (and tests) can distinguish modeling mistakes from numerics.
"""


class ChainlabError(Exception):
    """Base class for all package errors."""


class ContractViolation(ChainlabError):
    """Caller broke a documented precondition (mismatched reports, domains...)."""


# --- probability engine ---------------------------------------------------


class AllZeroWeights(ChainlabError):
    """normalize() received weights that are all zero."""


class NegativeWeight(ChainlabError):
    """A weight or probability is negative."""


class InvalidDistribution(ChainlabError):
    """Probabilities do not form a distribution (sum/negativity/duplicates)."""


class SupportMismatch(ChainlabError):
    """Consecutive pipeline stages disagree on an outcome alphabet."""


class UnknownAxis(ChainlabError):
    """A joint-distribution operation referenced an axis that does not exist."""


class ZeroEvidence(ChainlabError):
    """Conditioning on an outcome of probability zero."""


class AbsoluteContinuityViolated(ChainlabError):
    """KL divergence with p(u) > 0 where q(u) = 0."""


# --- information metrics --------------------------------------------------


class ZeroDensity(ChainlabError):
    """Score requested at an outcome with zero likelihood."""


class DpiViolation(ChainlabError):
    """Numerics claim a processed stage is MORE informative; modeling bug."""


class SuperEfficient(ChainlabError):
    """Estimator variance below the information bound; biased or wrong J."""


class NotSufficient(ChainlabError):
    """Statistic fails the sufficiency check required by the operation."""


# --- channels ---------------------------------------------------------------


class SupportTooSmall(ChainlabError):
    """Kernel half-width truncates more mass than tolerated."""


class GridTooNarrow(ChainlabError):
    """Quantization grid loses more than the allowed tail mass."""


# --- restorers / estimators -------------------------------------------------


class NonNumericSupport(ChainlabError):
    """Operation needs numeric outcome labels (e.g. conditional means)."""


class MissingOracle(ChainlabError):
    """Class-conditional restorer requested without the class oracle."""


class EmptySample(ChainlabError):
    """Parameter estimate requested from zero samples."""


class ZeroL1Norm(ChainlabError):
    """Rate estimate undefined: all samples have zero l1 mass."""


# --- classification ---------------------------------------------------------


class NotBinary(ChainlabError):
    """Separability is defined here for exactly two classes."""


class PartitionIncomplete(ChainlabError):
    """Class partition does not cover the source support."""


class OrderingViolation(ChainlabError):
    """An exact error-ordering theorem failed; implementation bug."""


# --- domain shift -----------------------------------------------------------


class DimensionMismatch(ChainlabError):
    """Targets or weights disagree on dimensions."""


class DomainsCoincide(ChainlabError):
    """All domain inverses agree everywhere; nothing to average."""


class Diverged(ChainlabError):
    """Training loss increased for too many consecutive epochs."""


# --- sparse recovery --------------------------------------------------------


class MissingAdmissibilityConstants(ChainlabError):
    """Certificate requested without the kernel's (beta, eps) constants."""


# --- experiment harness -----------------------------------------------------


class UnknownExperiment(ChainlabError):
    """Experiment id not in the catalog."""


class InvalidOverride(ChainlabError):
    """Config key unknown or value out of range for the experiment schema."""
