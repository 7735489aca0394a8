"""Exception hierarchy for the detector pipeline."""


class OGSError(Exception):
    """Base class for every error raised by this package."""


class EmptySequence(OGSError):
    def __init__(self, source_id=""):
        super().__init__(f"no opcodes in {source_id!r}" if source_id else "no opcodes")
        self.source_id = source_id


class CorpusLoadError(OGSError):
    """One or more manifest entries failed to load.

    ``errors`` holds ``(source_id, exception)`` pairs; ``samples`` holds the
    entries that did load, in manifest order.
    """

    def __init__(self, errors, samples=()):
        lines = "; ".join(f"{sid}: {exc}" for sid, exc in errors)
        super().__init__(f"{len(errors)} corpus entries failed: {lines}")
        self.errors = list(errors)
        self.samples = list(samples)


class ManifestError(OGSError):
    pass


class EmptyAlphabet(OGSError):
    pass


class UnknownOpcode(OGSError):
    def __init__(self, token):
        super().__init__(f"opcode {token!r} is not in the alphabet")
        self.token = token


class AlphabetMismatch(OGSError):
    pass


class EmptyFilter(OGSError):
    pass


class SingleClassCorpus(OGSError):
    pass


class DegenerateTraining(OGSError):
    pass


class FormatVersionMismatch(OGSError):
    pass


class SchemaError(OGSError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class InsufficientSamples(OGSError):
    def __init__(self, label, k, available):
        super().__init__(f"class {label!r} has {available} samples, need at least {k}")
        self.label = label
        self.k = k


class EmptyFamilyMap(OGSError):
    pass


class EmptyBase(OGSError):
    pass


class EmptyBenignPool(OGSError):
    pass


class ConfigError(OGSError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
