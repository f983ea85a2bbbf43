"""Syndrome decoding by probability-domain belief propagation.

Check node updates are XOR-convolutions of the incoming symbol
distributions, computed in the Walsh-Hadamard domain: transform each
message (length 2^m, one 2-point butterfly per bit), multiply pointwise,
transform back.  Edge coefficients act before and after as the index
permutation p -> c*p, so the parity constraint sum(c_e * x_e) = s_j
becomes a plain XOR constraint on the permuted variables.  Leave-one-out
products at both check and variable nodes use prefix/suffix cumulative
products over a padded (group, slot, symbol) tensor, with all-ones
padding as the multiplicative identity.

Messages stay normalized after every update; rows that collapse to zero
mass (all entries clipped) are replaced by the uniform distribution.
Failure to satisfy the syndrome is reported in the result, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import ParityCheckMatrix

DEFAULT_MAX_ITERS = 60


@dataclass
class DecodeResult:
    estimate: np.ndarray
    converged: bool
    iterations: int
    syndrome_matched: bool


def fwht(a: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform along the last axis (length 2^m), unscaled."""
    q = a.shape[-1]
    out = np.array(a, dtype=np.float64, copy=True)
    flat = out.reshape(-1, q)
    h = 1
    while h < q:
        shaped = flat.reshape(-1, q // (2 * h), 2, h)
        top = shaped[:, :, 0, :] + shaped[:, :, 1, :]
        bot = shaped[:, :, 0, :] - shaped[:, :, 1, :]
        shaped[:, :, 0, :] = top
        shaped[:, :, 1, :] = bot
        h *= 2
    return out


def xor_convolve(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Distribution of x XOR y for independent x ~ p, y ~ r (direct sum)."""
    q = p.shape[-1]
    out = np.zeros(q)
    for x in range(q):
        for y in range(q):
            out[x ^ y] += p[x] * r[y]
    return out


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    np.maximum(a, 0.0, out=a)
    totals = a.sum(axis=-1, keepdims=True)
    dead = totals[..., 0] <= 0.0
    if np.any(dead):
        a[dead] = 1.0
        totals = a.sum(axis=-1, keepdims=True)
    a /= totals
    return a


def _leave_one_out(values, group_of, slot_of, n_groups, max_deg):
    """Per edge, the product of `values` over its group excluding itself."""
    q = values.shape[-1]
    padded = np.ones((n_groups, max_deg, q))
    padded[group_of, slot_of] = values
    pref = np.ones_like(padded)
    np.cumprod(padded[:, :-1], axis=1, out=pref[:, 1:])
    suff = np.ones_like(padded)
    if max_deg > 1:
        suff[:, :-1] = np.cumprod(padded[:, :0:-1], axis=1)[:, ::-1]
    return pref[group_of, slot_of] * suff[group_of, slot_of]


class Decoder:
    """Reusable decoding state for one matrix (index maps, permutations)."""

    def __init__(self, matrix: ParityCheckMatrix):
        self.matrix = matrix
        field = matrix.field
        q = field.order
        coeffs = matrix.edge_coeff
        mul = field.mul_table
        # gather maps: w -> inv(c)*w  (into the XOR domain) and a -> c*a
        self.perm_in = mul[field.inv_table[coeffs]]
        self.perm_out = mul[coeffs]
        self.edge_col = matrix.edge_col
        self.edge_check = matrix.edge_check
        degs = matrix.check_degrees()
        self.max_chk_deg = int(degs.max())
        slot_c = np.arange(matrix.n_edges) - matrix.check_ptr[matrix.edge_check]
        self.slot_c = slot_c
        col_weights = matrix.column_weights()
        self.max_col_w = int(col_weights.max())
        order = np.lexsort((matrix.edge_check, matrix.edge_col))
        slot_v = np.zeros(matrix.n_edges, dtype=np.int64)
        starts = np.zeros(matrix.n, dtype=np.int64)
        starts[1:] = np.cumsum(col_weights)[:-1]
        slot_v[order] = np.arange(matrix.n_edges) - starts[matrix.edge_col[order]]
        self.slot_v = slot_v
        self.q = q

    def decode(self, syndrome, priors, max_iters: int = DEFAULT_MAX_ITERS,
               on_iteration=None) -> DecodeResult:
        m = self.matrix
        s = np.asarray(syndrome, dtype=np.uint8)
        if s.shape != (m.n_checks,):
            raise ValueError("syndrome length mismatch")
        p = np.asarray(priors, dtype=np.float64)
        if p.shape != (m.n, self.q):
            raise ValueError(f"priors must have shape ({m.n}, {self.q})")
        if np.any(p < -1e-12):
            raise ValueError("priors must be nonnegative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each prior row must sum to 1")
        p = _normalize_rows(p.copy())

        estimate = np.argmax(p, axis=1).astype(np.uint8)
        if np.array_equal(m.syndrome(estimate), s):
            return DecodeResult(estimate, True, 0, True)

        # target per edge: index map a -> s_j XOR c*a
        target = s[self.edge_check][:, None] ^ self.perm_out
        rows = np.arange(m.n_edges)[:, None]

        v2c = p[self.edge_col].copy()
        for it in range(1, max_iters + 1):
            shuffled = v2c[rows, self.perm_in]
            spectra = fwht(shuffled)
            prod_except = _leave_one_out(spectra, self.edge_check, self.slot_c,
                                         m.n_checks, self.max_chk_deg)
            conv = fwht(prod_except) / self.q
            c2v = _normalize_rows(conv[rows, target])

            belief_pad = np.ones((m.n, self.max_col_w, self.q))
            belief_pad[self.edge_col, self.slot_v] = c2v
            beliefs = _normalize_rows(p * belief_pad.prod(axis=1))
            estimate = np.argmax(beliefs, axis=1).astype(np.uint8)
            matched = np.array_equal(m.syndrome(estimate), s)
            if on_iteration is not None:
                on_iteration(it, c2v, beliefs)
            if matched:
                return DecodeResult(estimate, True, it, True)
            if it < max_iters:
                others = _leave_one_out(c2v, self.edge_col, self.slot_v,
                                        m.n, self.max_col_w)
                v2c = _normalize_rows(p[self.edge_col] * others)
        return DecodeResult(estimate, False, max_iters, False)


def decode(matrix: ParityCheckMatrix, syndrome, priors,
           max_iters: int = DEFAULT_MAX_ITERS, on_iteration=None) -> DecodeResult:
    return Decoder(matrix).decode(syndrome, priors, max_iters, on_iteration)
