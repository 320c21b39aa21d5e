"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all ecgfusion errors."""


# signal
class MissingLead(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


# ts_features
class ZeroPower(PipelineError):
    pass


# ehr_features
class EmptyCorpus(PipelineError):
    pass


class DegenerateTable(PipelineError):
    pass


# cohort
class OutOfRange(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


# gbt
class SingleClass(PipelineError):
    pass


class EmptyMatrix(PipelineError):
    pass


class NonFiniteFeature(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    pass


class CorruptModel(PipelineError):
    pass


# eval
class OneClassOnly(PipelineError):
    pass


class DegenerateResampling(PipelineError):
    pass


class MisalignedCutoff(PipelineError):
    pass


# explain
class FewerThanTwoPoints(PipelineError):
    pass


# synth
class InvalidProfile(PipelineError):
    pass


class InvalidPrevalence(PipelineError):
    pass


# cli
class ConfigInvalid(PipelineError):
    pass


class UpstreamArtifactMissing(PipelineError):
    pass
