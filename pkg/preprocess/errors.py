"""
Exception classes shared by every stage of the HB small area estimation workflow.

Input problems derive from ``InputError`` (a ``ValueError``) and make the command line
exit with code 2; failures inside the Gibbs sampler derive from ``SamplerError`` (a
``RuntimeError``) and make it exit with code 3.
"""


class HBSAEError(Exception):
    """Base class. ``reason`` is the short machine-readable tag printed by the CLI."""

    @property
    def reason(self) -> str:
        return type(self).__name__


class InputError(HBSAEError, ValueError):
    pass


class EmptyData(InputError):
    pass


class RankDeficientDesign(InputError):
    pass


class TooFewAreas(InputError):
    pass


class TooFewUnits(InputError):
    pass


class AreaMismatch(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class NonPositiveValue(InputError):
    pass


class NonPositiveTruth(InputError):
    pass


class SampleTooLarge(InputError):
    pass


class ConfigurationError(InputError):
    pass


class InvalidParameter(InputError):
    pass


class VariantMismatch(InputError):
    pass


class ZeroPosteriorVariance(InputError):
    pass


class SamplerError(HBSAEError, RuntimeError):
    pass


class SingularPrecision(SamplerError):
    pass


class DegenerateState(SamplerError):
    pass


class SliceFailure(SamplerError):
    pass


class ChainFailure(SamplerError):
    """A chain stopped; keeps the chain index and the iteration where it happened."""

    def __init__(self, chain_index: int, iteration: int, cause: Exception):
        self.chain_index = chain_index
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"chain {chain_index} failed at iteration {iteration}: "
                         f"{type(cause).__name__}: {cause}")

    def __reduce__(self):
        return type(self), (self.chain_index, self.iteration, self.cause)

    @property
    def reason(self) -> str:
        if isinstance(self.cause, HBSAEError):
            return self.cause.reason
        return type(self).__name__


class StudyFailure(SamplerError):
    """A simulation replicate could not be fitted; the whole study is aborted."""

    def __init__(self, replicate: int, method: str, cause: Exception):
        self.replicate = replicate
        self.method = method
        self.cause = cause
        super().__init__(f"replicate {replicate}, method {method}: "
                         f"{type(cause).__name__}: {cause}")

    def __reduce__(self):
        return type(self), (self.replicate, self.method, self.cause)

    @property
    def reason(self) -> str:
        if isinstance(self.cause, HBSAEError):
            return self.cause.reason
        return type(self).__name__
