"""Post-processing stack for entanglement-based continuous-variable QKD.

Subpackages cover the whole pipeline: Gaussian channel simulation,
discretisation, non-binary LDPC reconciliation, finite-size key length
computation, authentication and privacy amplification, and a two-party
session runner with a framed, authenticated wire format.
"""

__version__ = "0.1.0"
