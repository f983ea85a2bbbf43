from .channel import (LoopbackTransport, SecureChannel, TcpTransport,
                      Transcript, loopback_pair)
from .machine import (ROLE_A, ROLE_B, SessionConfig, SessionResult, run_pair,
                      run_party)
from . import messages

__all__ = [
    "LoopbackTransport", "SecureChannel", "TcpTransport", "Transcript",
    "loopback_pair", "ROLE_A", "ROLE_B", "SessionConfig", "SessionResult",
    "run_pair", "run_party", "messages",
]
