"""Exception hierarchy shared by every noisyamt module."""


class NoisyAmtError(Exception):
    """Base class for all toolkit errors."""


class AudioDomainError(NoisyAmtError, ValueError):
    """An audio operation received input outside its domain (e.g. empty buffer)."""


class SilentSignalError(AudioDomainError):
    """SNR is undefined because the signal has zero power."""


class WavFormatError(NoisyAmtError):
    """Malformed RIFF/WAVE container."""

    def __init__(self, chunk, message):
        self.chunk = chunk
        super().__init__(f"{chunk} chunk: {message}")


class UnsupportedCodecError(NoisyAmtError):
    """WAV encoding other than PCM16 or IEEE float32."""


class AudioTooLargeError(NoisyAmtError):
    """Decoded audio would not fit in available memory."""


class MidiParseError(NoisyAmtError):
    def __init__(self, offset, message):
        self.offset = offset
        super().__init__(f"byte {offset}: {message}")


class NotesFormatError(NoisyAmtError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ManifestSchemaError(NoisyAmtError):
    pass


class TranscriberError(NoisyAmtError):
    """A transcriber could not produce a usable NoteList for one cell."""


class TranscriberFailure(TranscriberError):
    def __init__(self, returncode, stderr):
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"exit status {returncode}: {stderr.strip()}")


class TranscriberTimeout(TranscriberError):
    pass


class TranscriberOutputError(TranscriberError):
    pass


class DegenerateSampleError(NoisyAmtError, ValueError):
    """t statistic undefined: zero variance or too few observations."""


class ConvergenceError(NoisyAmtError, ArithmeticError):
    pass


class CoverageError(NoisyAmtError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(map(str, self.missing[:10]))
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"missing cells: {shown}{more}")
