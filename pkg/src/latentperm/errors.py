"""Exception and warning types shared across the package."""


class ConfigError(Exception):
    """Raised for malformed or inconsistent experiment configuration (CLI exit code 2)."""


class DataError(Exception):
    """Raised for malformed input data: bad files, unknown labels, id mismatches (CLI exit code 3)."""


class ClampedSampleWarning(UserWarning):
    """A group had fewer rows than the requested sample size; all rows were used."""


class ZeroNormCosineWarning(UserWarning):
    """A zero-norm vector was encountered under cosine; its dissimilarity is defined as 1.0."""


class RankDeficientWarning(UserWarning):
    """The regression design matrix was rank deficient; the least-norm solution was used."""


class ZeroDirectionWarning(UserWarning):
    """The two groups had identical means, so the projection direction is zero and AUC is 0.5."""
