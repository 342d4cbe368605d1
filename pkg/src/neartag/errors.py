"""Exception types raised across the package.

Every error that callers are expected to catch derives from EngineError,
so CLI entry points can map any engine failure to a nonzero exit code
without enumerating modules.
"""


class EngineError(Exception):
    pass


# --- serialized stream / file errors ---

class IoFailure(EngineError):
    pass


class MagicMismatch(EngineError):
    pass


class VersionMismatch(EngineError):
    pass


class CorruptRecord(EngineError):
    pass


class CorruptFile(EngineError):
    pass


class BadDistribution(EngineError):
    pass


class MixedDimensions(EngineError):
    pass


class MixedDatasetIds(EngineError):
    pass


# --- numeric / shape errors ---

class DimensionMismatch(EngineError):
    pass


class TooFewSamples(EngineError):
    pass


class RankDeficient(EngineError):
    pass


class NonFiniteInput(EngineError):
    pass


# --- datastore errors ---

class EmptyInput(EngineError):
    pass


class EmptyStore(EngineError):
    pass


class NoCentroids(EngineError):
    pass


# --- fusion / decoding errors ---

class EmptyNeighborList(EngineError):
    pass


class LambdaOutOfRange(EngineError):
    pass


class UnrepairedSequence(EngineError):
    pass
