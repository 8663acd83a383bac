"""Exception hierarchy shared by every patentrag module."""


class PatentRagError(Exception):
    """Base class for all errors raised by patentrag."""


# corpus
class UnreadableSource(PatentRagError):
    pass


class UnknownFormat(PatentRagError):
    pass


class EmptyCorpus(PatentRagError):
    pass


# embedder
class EmptyText(PatentRagError):
    pass


class RemoteUnavailable(PatentRagError):
    pass


class DimensionMismatch(PatentRagError):
    pass


class BatchEmbeddingError(PatentRagError):
    """A chunk of an embedding batch failed; ``start``/``stop`` give the input range."""

    def __init__(self, start: int, stop: int, cause: Exception):
        super().__init__(f"embedding failed for inputs [{start}, {stop}): {cause}")
        self.start = start
        self.stop = stop
        self.cause = cause


# index
class DuplicateDocId(PatentRagError):
    pass


class EmptyIndex(PatentRagError):
    pass


class BadK(PatentRagError):
    pass


class TooFewVectors(PatentRagError):
    pass


class NotTrained(PatentRagError):
    pass


class BadNprobe(PatentRagError):
    pass


class CorruptFile(PatentRagError):
    pass


class IoFailure(PatentRagError):
    pass


# ragpipe
class UnknownDocId(PatentRagError):
    pass


class EmptyContext(PatentRagError):
    pass


class GeneratorUnavailable(PatentRagError):
    pass


# evalkit
class EmptyRelevantSet(PatentRagError):
    pass


class EmptyHits(PatentRagError):
    pass


class EmptyInput(PatentRagError):
    pass


class EvalError(PatentRagError):
    pass


class ConfigError(PatentRagError):
    pass
