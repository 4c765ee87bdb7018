"""Exception types shared across the package."""


class S2stError(Exception):
    """Base class for all package errors."""


class ShapeError(S2stError):
    """Operand shapes do not conform to an operation's shape rule."""


class NumericError(S2stError):
    """A forward computation produced NaN or Inf."""


class ContractError(S2stError):
    """A documented precondition was violated by the caller."""


class ConfigError(S2stError):
    """Invalid or inconsistent configuration."""


class DeterminismError(S2stError):
    """A function expected to be deterministic produced differing results."""


class MaskError(S2stError):
    """An attention query row has no unmasked key to attend to."""


class VocabError(S2stError):
    """A token id or symbol falls outside the vocabulary."""


class ParseError(S2stError):
    """A manifest, config, or wire message failed to parse."""


class ClientError(S2stError):
    """The external MT/TTS/ASR client misbehaved at the protocol level."""


class CheckpointError(S2stError):
    """A checkpoint file is truncated, corrupt, or incompatible."""
