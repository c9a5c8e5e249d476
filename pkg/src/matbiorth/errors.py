"""Exception types raised across the package."""


class MatBiorthError(Exception):
    """Base class for all numerical and consistency failures."""


# matpoly
class NonMonic(MatBiorthError):
    pass


class ClusterAmbiguous(MatBiorthError):
    pass


class SingularQ(MatBiorthError):
    pass


class NonzeroRemainder(MatBiorthError):
    pass


# kernels
class InsufficientMoments(MatBiorthError):
    pass


class NoCauchyProvider(MatBiorthError):
    pass


class SpectrumHitsSupport(MatBiorthError):
    pass


class HankelUnsupported(MatBiorthError):
    pass


class RadiusTooSmall(MatBiorthError):
    pass


# factor
class QuasidefinitenessFailure(MatBiorthError):
    def __init__(self, k, msg=None):
        self.k = k
        super().__init__(msg or f"leading truncation of size {k} is singular")


class SingularLeadingBlock(MatBiorthError):
    pass


# transforms
class SingularJetBlock(MatBiorthError):
    pass


class NoPoisedSet(MatBiorthError):
    pass


class SingularPoisedCandidate(MatBiorthError):
    pass


class NonzeroDivisionRemainder(MatBiorthError):
    pass


class SingularUvarovMatrix(MatBiorthError):
    pass


class WindowTooSmall(MatBiorthError):
    pass


# toda
class NonzeroT2(MatBiorthError):
    pass


# cli
class UnknownSeries(MatBiorthError):
    pass
