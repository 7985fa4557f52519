"""Exception types shared across csiscope."""


class CsiScopeError(Exception):
    """Base class for every error raised by this package."""


# --- frame codec ---

class InvalidFrame(CsiScopeError):
    """Frame failed validation and cannot be encoded."""


class BadMagic(CsiScopeError):
    """Buffer does not start with the expected magic bytes."""


class TruncatedFrame(CsiScopeError):
    """Buffer length does not match the declared frame layout."""


class BadFieldRange(CsiScopeError):
    """A decoded header field is outside its allowed range."""


class UnknownChanspec(CsiScopeError):
    """Chanspec encodes an unsupported bandwidth, or one that contradicts the sample count."""


class BadPcapMagic(CsiScopeError):
    """File does not begin with a recognised pcap global header."""


class UnknownLinkType(CsiScopeError):
    """pcap link type is not Ethernet; nothing useful can be extracted."""


# --- sources ---

class BadUri(CsiScopeError):
    """Source URI is malformed or uses an unknown scheme."""


class BindFailed(CsiScopeError):
    """UDP socket could not be bound (port in use or permission denied)."""


class UnknownProfile(CsiScopeError):
    """No synthetic profile registered under that name."""


class SourceClosed(CsiScopeError):
    """Operation on a handle that has been closed."""


class EndOfStream(CsiScopeError):
    """Finite source has no more frames."""


# --- pipeline ---

class ChainInvalid(CsiScopeError):
    """Plugin chain cannot run as configured (stage/order/size mismatch)."""


class AlreadyLinear(CsiScopeError):
    """Reorder requested on a frame already in linear order. No-op signal, not fatal."""


class BadTarget(CsiScopeError):
    """Bandwidth narrowing target is not smaller than the current subcarrier count."""


class IndexOutOfRange(CsiScopeError):
    """A logical subcarrier index falls outside [-N/2, N/2)."""


class BadAlpha(CsiScopeError):
    """Smoothing factor outside (0, 1]."""


class UnknownPlugin(CsiScopeError):
    """Plugin id not present in the chain (or registry, for add)."""


class BadParamType(CsiScopeError):
    """Plugin parameter value has the wrong type."""


# --- recordings ---

class UnsupportedFormat(CsiScopeError):
    """Recording format name not one of csv-simple / csv-compact / binary."""


class NMismatch(CsiScopeError):
    """Frame subcarrier count differs from the recording's fixed N."""


class BadHeader(CsiScopeError):
    """Recording file header is missing or unrecognisable."""


class TruncatedRecord(CsiScopeError):
    """File ends in the middle of a record; frames before the cut were intact."""


# --- classifier bridge ---

class SpawnFailed(CsiScopeError):
    """Classifier executable could not be started."""


class EmptyWindow(CsiScopeError):
    """Feature extraction over zero frames."""


class MissingClass(CsiScopeError):
    """Training data contains no windows for one of the classes."""


class DimensionMismatch(CsiScopeError):
    """Feature vector length differs from the model's centroid dimensionality."""


class LengthMismatch(CsiScopeError):
    """Prediction and label sequences have different lengths."""


# --- control server ---

class UnknownCommand(CsiScopeError):
    """Control message names a command the session does not understand."""
