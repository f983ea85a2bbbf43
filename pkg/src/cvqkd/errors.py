"""Shared exception types for the post-processing stack."""


class CvqkdError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CvqkdError):
    """Invalid or inconsistent configuration values."""


class CodebookError(CvqkdError):
    """Malformed, truncated or checksum-failing codebook data."""


class InfeasibleCodeError(CvqkdError):
    """Requested code parameters cannot be realised (e.g. too many edges)."""


class ChannelTooNoisyError(CvqkdError):
    """No supported code rate fits the observed symbol channel."""


class AuthenticationError(CvqkdError):
    """Message tag verification failed, or authentication keys ran out."""


class TransportError(CvqkdError):
    """Framing violation or broken transport underneath a session."""


class SessionAborted(CvqkdError):
    """Raised internally to unwind a session after a protocol abort.

    Carries the machine-readable reason token; the session runner turns
    it into an ordinary result, it never escapes to callers.
    """

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail
