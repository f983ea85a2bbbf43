"""Non-binary LDPC codes: construction, serialization, syndrome decoding."""

from .matrix import ParityCheckMatrix
from .peg import peg_construct, check_capacities, shortest_cycle_through_variables
from .decoder import Decoder, DecodeResult, decode, fwht, xor_convolve, DEFAULT_MAX_ITERS
from .codebook import (Codebook, build_codebook, verify_codebook, store_matrix,
                       load_matrix, matrix_to_text, matrix_from_text, code_filename)

__all__ = [
    "ParityCheckMatrix", "peg_construct", "check_capacities",
    "shortest_cycle_through_variables", "Decoder", "DecodeResult", "decode",
    "fwht", "xor_convolve", "DEFAULT_MAX_ITERS", "Codebook", "build_codebook",
    "verify_codebook", "store_matrix", "load_matrix", "matrix_to_text",
    "matrix_from_text", "code_filename",
]
