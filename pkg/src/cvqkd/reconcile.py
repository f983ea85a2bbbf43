"""Hybrid error reconciliation: published low bits plus syndrome decoding.

Each d-bit symbol splits into d1 low bits, revealed verbatim, and d2
high bits reconciled through a syndrome over GF(2^d2).  The receiver
corrects toward the sender: from his own analog value and the revealed
low bits he forms a posterior over the sender's high part under a
bivariate Gaussian channel model fitted to the published estimation
pairs, then runs belief propagation against the sender's syndrome.

The split and the code rate are chosen from the fitted model: the rate
cap is margin * (1 - H/d2) where H is the model conditional entropy of
the high part given the receiver's value and the low bits, and the
expected disclosure d1 + (1 - R) * d2 bits per symbol is minimized over
the available field orders.  Any trailing symbols that do not fill a
code block have their high part revealed outright.

Every published quantity is charged to a leakage ledger by category so
the key length computation and the efficiency measurement can cite
exact bit counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .discretize import BinningSpec, join_symbols, split_symbols
from .errors import ChannelTooNoisyError, ConfigError
from .finitekey import PredictedChannel, distance_std_bins, expected_distance_bins
from .ldpc import DEFAULT_MAX_ITERS, Codebook, DecodeResult, Decoder

CAT_LSB = "lsb"
CAT_SYNDROME = "syndrome"
CAT_REVEAL = "tail_reveal"
CAT_CONFIRM = "confirmation"
CAT_PE = "estimation_symbols"

# categories that count against the secret key; published estimation
# symbols are excluded because those samples never enter the key
_KEY_CATEGORIES = (CAT_LSB, CAT_SYNDROME, CAT_REVEAL, CAT_CONFIRM)


class LeakageLedger:
    """Exact per-category bit accounting of everything published."""

    def __init__(self):
        self._bits: dict[str, int] = {}

    def add(self, category: str, bits: int):
        if bits < 0:
            raise ValueError("cannot charge negative bits")
        self._bits[category] = self._bits.get(category, 0) + int(bits)

    def bits(self, category: str) -> int:
        return self._bits.get(category, 0)

    @property
    def key_leakage_bits(self) -> int:
        return sum(self._bits.get(c, 0) for c in _KEY_CATEGORIES)

    def as_dict(self) -> dict:
        return dict(self._bits)

    def summary(self) -> str:
        lines = ["leakage ledger (bits)"]
        for cat in sorted(self._bits):
            mark = "" if cat in _KEY_CATEGORIES else "  [not charged to key]"
            lines.append(f"  {cat}: {self._bits[cat]}{mark}")
        lines.append(f"  charged total: {self.key_leakage_bits}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# channel model fitted from published estimation pairs

@dataclass(frozen=True)
class ChannelFit:
    """Bivariate Gaussian moments of the analog pair, in quadrature units."""

    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    cov: float
    n_samples: int

    def __post_init__(self):
        if self.var_a <= 0 or self.var_b <= 0:
            raise ConfigError("fitted variances must be positive")
        if self.cov * self.cov >= self.var_a * self.var_b:
            raise ConfigError("fitted covariance violates Cauchy-Schwarz")

    @property
    def slope(self) -> float:
        return self.cov / self.var_b

    @property
    def conditional_std(self) -> float:
        return math.sqrt(self.var_a - self.cov * self.cov / self.var_b)


def bin_centers(indices, spec: BinningSpec) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.float64)
    return -spec.alpha + (idx + 0.5) * spec.delta


def fit_channel(pe_a, pe_b, spec: BinningSpec) -> ChannelFit:
    """Fit analog second moments from binned estimation pairs.

    Sheppard's correction removes the delta^2/12 quantisation variance
    from the diagonal; the covariance needs no correction.  The
    covariance is clamped just inside the Cauchy-Schwarz cone so a
    freakishly tight sample cannot produce a degenerate model.
    """
    a = bin_centers(pe_a, spec)
    b = bin_centers(pe_b, spec)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("estimation pair arrays must be equal-length 1-d")
    if a.size < 16:
        raise ConfigError("too few estimation samples to fit a channel")
    correction = spec.delta ** 2 / 12.0
    var_a = float(np.var(a, ddof=1)) - correction
    var_b = float(np.var(b, ddof=1)) - correction
    cov = float(np.cov(a, b, ddof=1)[0, 1])
    if var_a <= 0 or var_b <= 0:
        raise ChannelTooNoisyError("quantisation dominates the fitted variance")
    cap = 0.999999 * math.sqrt(var_a * var_b)
    cov = max(-cap, min(cap, cov))
    return ChannelFit(mean_a=float(np.mean(a)), mean_b=float(np.mean(b)),
                      var_a=var_a, var_b=var_b, cov=cov, n_samples=a.size)


def _interval_mass(lo: np.ndarray, hi: np.ndarray, mu, sigma: float,
                   fine_lo_idx: np.ndarray, bins: int) -> np.ndarray:
    """Gaussian mass of bin intervals; edge bins saturate to +-infinity."""
    z_hi = np.where(fine_lo_idx == bins - 1, np.inf, (hi - mu) / sigma)
    z_lo = np.where(fine_lo_idx == 0, -np.inf, (lo - mu) / sigma)
    return ndtr(z_hi) - ndtr(z_lo)


def msb_priors(fit: ChannelFit, spec: BinningSpec, lsb_a, b_values) -> np.ndarray:
    """Posterior over the sender's high part for each receiver sample.

    Row i is p(high | receiver value b_i, revealed low bits l_i), i.e.
    the Gaussian conditional mass of the fine bin (high << d1) | l_i.
    """
    lsb = np.asarray(lsb_a, dtype=np.int64)
    b = np.asarray(b_values, dtype=np.float64)
    if lsb.shape != b.shape or lsb.ndim != 1:
        raise ValueError("lsb and receiver value arrays must match")
    q = 1 << spec.d2
    fine = (np.arange(q, dtype=np.int64) << spec.d1)[None, :] + lsb[:, None]
    lo = -spec.alpha + fine * spec.delta
    hi = lo + spec.delta
    mu = (fit.mean_a + fit.slope * (b - fit.mean_b))[:, None]
    mass = _interval_mass(lo, hi, mu, fit.conditional_std, fine, spec.bins)
    np.clip(mass, 0.0, None, out=mass)
    totals = mass.sum(axis=1, keepdims=True)
    dead = totals[:, 0] <= 0.0
    if np.any(dead):
        mass[dead] = 1.0 / q
        totals[dead] = 1.0
    return mass / totals


def _row_entropy_bits(p: np.ndarray) -> np.ndarray:
    safe = np.where(p > 0.0, p, 1.0)
    return -(p * np.log2(safe)).sum(axis=1)


def empirical_msb_entropy(fit: ChannelFit, spec: BinningSpec, pe_a, pe_b,
                          cap: int = 20000) -> float:
    """Average posterior entropy of the high part over estimation pairs."""
    pe_a = np.asarray(pe_a)
    pe_b = np.asarray(pe_b)
    if pe_a.size > cap:
        pick = np.linspace(0, pe_a.size - 1, cap).astype(np.int64)
        pe_a, pe_b = pe_a[pick], pe_b[pick]
    _, lsb = split_symbols(pe_a, spec)
    rows = msb_priors(fit, spec, lsb, bin_centers(pe_b, spec))
    return float(_row_entropy_bits(rows).mean())


def conditional_entropy_fine(fit: ChannelFit, spec: BinningSpec,
                             chunk: int = 256) -> float:
    """Model conditional entropy H(sender symbol | receiver symbol), bits.

    Receiver bins are weighted by their marginal mass; within a bin the
    conditional mean is evaluated at the bin center, which is accurate
    because the bin width is tiny against the marginal spread.
    """
    bins = spec.bins
    idx = np.arange(bins, dtype=np.int64)
    lo = -spec.alpha + idx * spec.delta
    hi = lo + spec.delta
    sigma_b = math.sqrt(fit.var_b)
    p_b = _interval_mass(lo, hi, fit.mean_b, sigma_b, idx, bins)
    p_b = p_b / p_b.sum()
    centers = bin_centers(idx, spec)
    total = 0.0
    for start in range(0, bins, chunk):
        rows = slice(start, min(start + chunk, bins))
        weights = p_b[rows]
        live = weights > 1e-18
        if not np.any(live):
            continue
        mu = (fit.mean_a + fit.slope * (centers[rows][live] - fit.mean_b))[:, None]
        mass = _interval_mass(lo[None, :], hi[None, :], mu,
                              fit.conditional_std, idx[None, :], bins)
        totals = mass.sum(axis=1, keepdims=True)
        mass = mass / np.where(totals > 0, totals, 1.0)
        total += float((weights[live] * _row_entropy_bits(mass)).sum())
    return total


# ---------------------------------------------------------------------------
# parameter selection

@dataclass(frozen=True)
class ReconcileParams:
    d1: int
    d2: int
    order: int
    rate_pct: int
    block_length: int
    msb_entropy: float
    leak_per_symbol: float

    def to_dict(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "order": self.order,
                "rate_pct": self.rate_pct, "block_length": self.block_length,
                "msb_entropy": self.msb_entropy,
                "leak_per_symbol": self.leak_per_symbol}

    @classmethod
    def from_dict(cls, data: dict) -> "ReconcileParams":
        return cls(d1=int(data["d1"]), d2=int(data["d2"]),
                   order=int(data["order"]), rate_pct=int(data["rate_pct"]),
                   block_length=int(data["block_length"]),
                   msb_entropy=float(data["msb_entropy"]),
                   leak_per_symbol=float(data["leak_per_symbol"]))


def select_params(fit: ChannelFit, spec: BinningSpec, pe_a, pe_b,
                  codebook: Codebook, *, margin: float = 0.95,
                  allowed_orders: Optional[Sequence[int]] = None,
                  entropy_cap: int = 20000) -> ReconcileParams:
    """Pick the split and code rate with the least expected disclosure.

    For each available field order the empirical high-part entropy sets
    a rate cap margin * (1 - H/d2); the best rate at or below the cap is
    taken from the codebook grid.  Orders whose cap falls below the
    whole grid are skipped; if every order is skipped the channel cannot
    be reconciled with the available codes.
    """
    if not 0.0 < margin <= 1.0:
        raise ConfigError("margin must lie in (0, 1]")
    best: Optional[ReconcileParams] = None
    considered = []
    for order in codebook.orders():
        if allowed_orders is not None and order not in allowed_orders:
            continue
        d2 = order.bit_length() - 1
        if (1 << d2) != order or not 0 < d2 < spec.d:
            continue
        sub = spec.with_split(spec.d - d2)
        h2 = empirical_msb_entropy(fit, sub, pe_a, pe_b, cap=entropy_cap)
        cap_pct = margin * (1.0 - h2 / d2) * 100.0
        grid = [round(r * 100) for r in codebook.rates(order)
                if round(r * 100) <= cap_pct]
        considered.append((order, h2, cap_pct))
        if not grid:
            continue
        pct = max(grid)
        leak = sub.d1 + (1.0 - pct / 100.0) * d2
        cand = ReconcileParams(d1=sub.d1, d2=d2, order=order, rate_pct=pct,
                               block_length=codebook.block_length(
                                   order, pct / 100.0),
                               msb_entropy=h2, leak_per_symbol=leak)
        if best is None or (cand.leak_per_symbol, cand.d2) < (
                best.leak_per_symbol, best.d2):
            best = cand
    if best is None:
        detail = ", ".join(f"order {o}: H={h:.3f} cap={c:.1f}%"
                           for o, h, c in considered) or "no usable orders"
        raise ChannelTooNoisyError(f"no code rate fits the channel ({detail})")
    return best


def predict_channel(difference_std_snu: float, spec: BinningSpec,
                    leak_per_symbol: float) -> PredictedChannel:
    """Distance statistics implied by a Gaussian difference of given spread."""
    return PredictedChannel(
        expected_distance=expected_distance_bins(difference_std_snu, spec),
        distance_std=distance_std_bins(difference_std_snu, spec),
        leak_per_symbol=leak_per_symbol,
        range_bound=float(spec.bins - 1))


# ---------------------------------------------------------------------------
# block orchestration

@dataclass
class SenderReconciliation:
    lsb: np.ndarray                 # published low bits, one per symbol
    syndromes: list[np.ndarray]     # one per full code block
    tail_msb: np.ndarray            # high parts of the block remainder
    lsb_bits: int
    syndrome_bits: int
    reveal_bits: int


def reconciliation_bit_counts(total: int, params: ReconcileParams,
                              n_checks: int):
    """(lsb, syndrome, tail reveal) bit counts, derivable by either party."""
    n_full = total // params.block_length
    tail = total - n_full * params.block_length
    return (params.d1 * total, n_full * n_checks * params.d2,
            params.d2 * tail)


def sender_encode(fine_a, params: ReconcileParams, spec: BinningSpec,
                  codebook: Codebook) -> SenderReconciliation:
    sub = spec.with_split(params.d1)
    fine = np.asarray(fine_a, dtype=np.uint16)
    msb, lsb = split_symbols(fine, sub)
    matrix = codebook.get(params.order, params.rate_pct / 100.0)
    n = matrix.n
    n_full = fine.size // n
    syndromes = [matrix.syndrome(msb[i * n:(i + 1) * n].astype(np.int64))
                 for i in range(n_full)]
    tail_msb = msb[n_full * n:]
    lsb_bits, syndrome_bits, reveal_bits = reconciliation_bit_counts(
        fine.size, params, matrix.n_checks)
    return SenderReconciliation(
        lsb=lsb, syndromes=syndromes, tail_msb=tail_msb,
        lsb_bits=lsb_bits, syndrome_bits=syndrome_bits,
        reveal_bits=reveal_bits)


@dataclass
class ReceiverReconciliation:
    fine: np.ndarray                    # receiver's corrected symbols
    blocks: list[DecodeResult]
    all_matched: bool


def receiver_correct(values_b, lsb_a, syndromes, tail_msb,
                     params: ReconcileParams, fit: ChannelFit,
                     spec: BinningSpec, codebook: Codebook,
                     max_iters: int = DEFAULT_MAX_ITERS) -> ReceiverReconciliation:
    """Belief-propagation correction of every full block, in order.

    Decode failures are recorded per block, never raised; the caller
    decides whether a failed block aborts the run or falls through to
    the confirmation check.
    """
    sub = spec.with_split(params.d1)
    values = np.asarray(values_b, dtype=np.float64)
    lsb = np.asarray(lsb_a, dtype=np.uint16)
    if values.shape != lsb.shape:
        raise ValueError("value and lsb arrays must align")
    matrix = codebook.get(params.order, params.rate_pct / 100.0)
    n = matrix.n
    n_full = values.size // n
    if len(syndromes) != n_full:
        raise ValueError("syndrome count does not match the block layout")
    if values.size - n_full * n != np.asarray(tail_msb).size:
        raise ValueError("tail reveal does not match the block layout")
    decoder = Decoder(matrix)
    msb_hat = np.zeros(values.size, dtype=np.uint16)
    blocks: list[DecodeResult] = []
    for i in range(n_full):
        rows = slice(i * n, (i + 1) * n)
        priors = msb_priors(fit, sub, lsb[rows], values[rows])
        res = decoder.decode(np.asarray(syndromes[i]), priors,
                             max_iters=max_iters)
        msb_hat[rows] = res.estimate
        blocks.append(res)
    msb_hat[n_full * n:] = np.asarray(tail_msb, dtype=np.uint16)
    fine = join_symbols(msb_hat, lsb, sub)
    matched = all(b.syndrome_matched for b in blocks)
    return ReceiverReconciliation(fine=fine, blocks=blocks,
                                  all_matched=matched)


def charge_reconciliation(ledger: LeakageLedger, sent: SenderReconciliation):
    ledger.add(CAT_LSB, sent.lsb_bits)
    ledger.add(CAT_SYNDROME, sent.syndrome_bits)
    ledger.add(CAT_REVEAL, sent.reveal_bits)


def measured_efficiency(conditional_entropy_bits: float, lsb_bits: int,
                        syndrome_bits: int, n_symbols: int) -> float:
    """Ratio of the channel's intrinsic uncertainty to the disclosure rate."""
    if n_symbols <= 0:
        raise ValueError("no symbols reconciled")
    disclosed = (lsb_bits + syndrome_bits) / n_symbols
    if disclosed <= 0:
        raise ValueError("no disclosure recorded")
    return conditional_entropy_bits / disclosed
