from __future__ import annotations


class VoiceRestoreError(Exception):
    """Base class for every error raised by this package."""


# ---- audio / signal ----


class SampleRateMismatch(VoiceRestoreError, ValueError):
    pass


class EmptyAudio(VoiceRestoreError, ValueError):
    pass


class UnsupportedAudioFormat(VoiceRestoreError, ValueError):
    pass


class LengthMismatch(VoiceRestoreError, ValueError):
    pass


class ZeroNoise(VoiceRestoreError, ValueError):
    """SNR is undefined when the noise has no energy."""


class ZeroSignal(VoiceRestoreError, ValueError):
    pass


class ShapeMismatch(VoiceRestoreError, ValueError):
    pass


# ---- degradation ----


class SnrOutOfRange(VoiceRestoreError, ValueError):
    pass


class ParameterOutOfRange(VoiceRestoreError, ValueError):
    pass


class DegradationStepError(VoiceRestoreError):
    """Wraps an operator failure with the index of the failing operator."""

    def __init__(self, op_index: int, kind: str, cause: Exception) -> None:
        self.op_index = op_index
        self.kind = kind
        self.cause = cause
        super().__init__(f"degradation op #{op_index} ({kind}) failed: {cause}")


# ---- training / checkpoints ----


class ConfigError(VoiceRestoreError, ValueError):
    """Settings that cannot work together at call time."""


class NonFiniteLoss(VoiceRestoreError, FloatingPointError):
    pass


class NonFiniteState(VoiceRestoreError, FloatingPointError):
    pass


class VersionMismatch(VoiceRestoreError, ValueError):
    pass


class CorruptCheckpoint(VoiceRestoreError, ValueError):
    pass


class EmptyManifest(VoiceRestoreError, ValueError):
    pass


# ---- conditioning / diffusion ----


class TooFewFrames(VoiceRestoreError, ValueError):
    pass


class FeatureKindMismatch(VoiceRestoreError, ValueError):
    pass


class UnitOutOfRange(VoiceRestoreError, ValueError):
    pass


class ClipTooShort(VoiceRestoreError, ValueError):
    pass


class EmptyEnrollment(VoiceRestoreError, ValueError):
    pass


class TimeOutOfRange(VoiceRestoreError, ValueError):
    pass


# ---- pipeline / eval / cli ----


class MissingComponent(VoiceRestoreError, KeyError):
    def __str__(self) -> str:
        # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ZeroReference(VoiceRestoreError, ValueError):
    pass


class UsageError(VoiceRestoreError):
    pass
