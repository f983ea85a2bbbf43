"""Channel parameter estimation and the secret key length computation.

The estimation statistic is the average absolute distance between the
two parties' published symbols, computed on bin indices with exact
integer arithmetic.  The key length is

    l = (N - k) * (log2(1/c(delta)) - log2(gamma(t))) - leak - log2(1/eps)

with t = unit_scale * (d_pe0 + mu).  Both gamma (a bound on how much
correlation the distance statistic certifies) and mu (the statistical
fluctuation allowance for estimating on k of N samples) are pluggable:
the bundled reference gamma is the Renyi-1/2 exponential of a two-sided
geometric distribution of the index difference with the given mean
absolute value, and the reference mu is an empirical Bernstein bound
scaled for estimating the unobserved remainder.  A deliberately simple
stub pair exists for deterministic pipeline tests.  By default the
distance is converted from bin indices to quadrature units (factor
delta) before gamma is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .crypto import RandomnessService
from .discretize import BinningSpec
from .errors import ConfigError


@dataclass(frozen=True)
class EstimationResult:
    k: int
    d_pe: float
    d_pe_exact: Fraction
    d_pe0: float
    passed: bool


def estimate_distance(xa, xb, d_pe0: float) -> EstimationResult:
    xa = np.asarray(xa, dtype=np.int64)
    xb = np.asarray(xb, dtype=np.int64)
    if xa.size == 0:
        raise ValueError("estimation set is empty")
    if xa.shape != xb.shape:
        raise ValueError("estimation arrays differ in length")
    total = int(np.abs(xa - xb).sum())
    exact = Fraction(total, xa.size)
    d_pe = float(exact)
    return EstimationResult(k=int(xa.size), d_pe=d_pe, d_pe_exact=exact,
                            d_pe0=float(d_pe0), passed=d_pe <= d_pe0)


def choose_estimation_set(n_total: int, k: int, seed) -> np.ndarray:
    """Sorted uniformly random k-subset of {0, ..., n_total-1}."""
    if not 0 < k < n_total:
        raise ValueError("need 0 < k < n_total")
    pool = np.arange(n_total, dtype=np.int64)
    draws = RandomnessService(seed).stream("estimation-set").u64(k)
    for i in range(k):
        # residue bias is < 2^-43 for any n_total below 2^21
        j = i + int(draws[i] % np.uint64(n_total - i))
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:k])


# ---------------------------------------------------------------------------
# gamma / mu plugins

def reference_gamma(t: float) -> float:
    """2^(Renyi-1/2 entropy) of the two-sided geometric distribution whose
    mean absolute value is t.  Monotone, equals 1 at t = 0, diverges as the
    certified correlation vanishes.  Without a support cutoff no finite
    supremum over all difference distributions exists, so a one-parameter
    family with the right limits is used as the certification curve."""
    if t < 0:
        raise ConfigError("gamma argument must be nonnegative")
    if t == 0.0:
        return 1.0
    lam = t / (1.0 + math.sqrt(1.0 + t * t))
    root = math.sqrt(lam)
    return (1.0 + root) ** 3 / ((1.0 + lam) * (1.0 - root))


def stub_gamma(t: float) -> float:
    return 2.0 ** t


def reference_mu(k: int, n_total: int, epsilon: float, *,
                 sample_std: Optional[float] = None,
                 range_bound: Optional[float] = None) -> float:
    """Empirical Bernstein deviation allowance for the mean distance.

    Uses the observed sample standard deviation plus a range-driven term,
    inflated by n/(n-k) because the estimate must cover the unobserved
    remainder of the population rather than the sampled part.
    """
    if sample_std is None or range_bound is None:
        raise ConfigError("reference mu needs sample_std and range_bound")
    if not 1 < k < n_total:
        raise ConfigError("need 1 < k < n_total")
    log_term = math.log(2.0 / (epsilon / 4.0))
    dev = sample_std * math.sqrt(2.0 * log_term / k) \
        + 7.0 * range_bound * log_term / (3.0 * (k - 1))
    return dev * n_total / (n_total - k)


def stub_mu_factory(constant: float = 10.0) -> Callable:
    def stub_mu(k: int, n_total: int, epsilon: float, **_ignored) -> float:
        return constant / math.sqrt(k)
    return stub_mu


def default_c_delta(delta: float) -> float:
    return delta * delta / (2.0 * math.pi)


@dataclass
class KeyLengthModel:
    epsilon: float
    c_delta: Callable[[float], float] = default_c_delta
    gamma: Callable[[float], float] = reference_gamma
    mu: Callable = reference_mu
    # None means: convert bin-index distance to quadrature units (delta)
    unit_scale: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")

    def scale_for(self, spec: BinningSpec) -> float:
        return spec.delta if self.unit_scale is None else self.unit_scale


def reference_model(epsilon: float = 2e-10) -> KeyLengthModel:
    return KeyLengthModel(epsilon=epsilon)


def stub_model(epsilon: float = 2e-10, mu_constant: float = 10.0) -> KeyLengthModel:
    return KeyLengthModel(epsilon=epsilon, gamma=stub_gamma,
                          mu=stub_mu_factory(mu_constant))


# ---------------------------------------------------------------------------
# the key length equation

@dataclass
class KeyLengthReport:
    n_minus_k: int
    k: int
    d_pe0: float
    mu: float
    scaled_distance: float
    log2_inv_c: float
    log2_gamma: float
    leak_bits: float
    log2_inv_eps: float
    ell: float

    def render(self) -> str:
        lines = ["key length report",
                 f"  samples kept (N-k):    {self.n_minus_k}",
                 f"  estimation samples k:  {self.k}",
                 f"  distance threshold:    {self.d_pe0!r} bins",
                 f"  fluctuation mu:        {self.mu!r} bins",
                 f"  gamma argument:        {self.scaled_distance!r}",
                 f"  log2(1/c(delta)):      {self.log2_inv_c!r}",
                 f"  log2(gamma):           {self.log2_gamma!r}",
                 f"  leakage (bits):        {self.leak_bits!r}",
                 f"  log2(1/epsilon):       {self.log2_inv_eps!r}",
                 f"  secret key length:     {self.ell!r}"]
        return "\n".join(lines)

    def canonical_bytes(self) -> bytes:
        """Stable encoding both parties can compare field by field."""
        parts = [f"{self.n_minus_k}", f"{self.k}", self.d_pe0.hex(),
                 self.mu.hex(), self.scaled_distance.hex(),
                 self.log2_inv_c.hex(), self.log2_gamma.hex(),
                 float(self.leak_bits).hex(), self.log2_inv_eps.hex(),
                 self.ell.hex()]
        return "|".join(parts).encode()


def compute_key_length(n_minus_k: int, k: int, spec: BinningSpec,
                       model: KeyLengthModel, d_pe0: float, leak_bits: float,
                       *, sample_std: Optional[float] = None,
                       range_bound: Optional[float] = None) -> KeyLengthReport:
    if n_minus_k <= 0:
        raise ConfigError("no samples left for key generation")
    c_val = model.c_delta(spec.delta)
    if not 0.0 < c_val < 1.0:
        raise ConfigError("c(delta) outside (0, 1)")
    mu_val = model.mu(k, n_minus_k + k, model.epsilon,
                      sample_std=sample_std, range_bound=range_bound)
    scale = model.scale_for(spec)
    t = scale * (d_pe0 + mu_val)
    gamma_val = model.gamma(t)
    if not gamma_val >= 1.0 or not math.isfinite(gamma_val):
        raise ConfigError(f"gamma({t}) = {gamma_val} is not a usable bound")
    log2_inv_c = -math.log2(c_val)
    log2_gamma = math.log2(gamma_val)
    log2_inv_eps = -math.log2(model.epsilon)
    ell = n_minus_k * (log2_inv_c - log2_gamma) - leak_bits - log2_inv_eps
    return KeyLengthReport(n_minus_k=n_minus_k, k=k, d_pe0=float(d_pe0),
                           mu=float(mu_val), scaled_distance=float(t),
                           log2_inv_c=log2_inv_c, log2_gamma=log2_gamma,
                           leak_bits=float(leak_bits),
                           log2_inv_eps=log2_inv_eps, ell=float(ell))


def secret_key_length(n_minus_k: int, spec: BinningSpec, model: KeyLengthModel,
                      d_pe0: float, leak_bits: float, *, k: int = 1,
                      sample_std: Optional[float] = None,
                      range_bound: Optional[float] = None) -> float:
    report = compute_key_length(n_minus_k, k, spec, model, d_pe0, leak_bits,
                                sample_std=sample_std, range_bound=range_bound)
    return report.ell


# ---------------------------------------------------------------------------
# pre-run helpers: threshold and estimation-size choice

@dataclass
class PredictedChannel:
    """What the source characterization promises about the distance."""
    expected_distance: float   # bins, mean |a - b|
    distance_std: float        # bins, std of |a - b|
    leak_per_symbol: float     # bits expected from reconciliation
    range_bound: float         # bins, hard cap on |a - b|


def expected_distance_bins(difference_std_snu: float, spec: BinningSpec) -> float:
    """Mean |a - b| in bin units for a centred Gaussian difference."""
    sigma_bins = difference_std_snu / spec.delta
    return sigma_bins * math.sqrt(2.0 / math.pi)


def distance_std_bins(difference_std_snu: float, spec: BinningSpec) -> float:
    sigma_bins = difference_std_snu / spec.delta
    return sigma_bins * math.sqrt(1.0 - 2.0 / math.pi)


def threshold_from_prediction(predicted: PredictedChannel,
                              headroom: float = 1.15) -> float:
    if headroom < 1.0:
        raise ConfigError("threshold headroom below 1 aborts honest runs")
    return headroom * predicted.expected_distance


@dataclass
class OptimizeResult:
    k: int
    predicted_ell: float
    positive: bool


def optimize_k(n_total: int, candidate_ks, spec: BinningSpec,
               model: KeyLengthModel, predicted: PredictedChannel,
               d_pe0: Optional[float] = None,
               extra_leak_bits: float = 0.0) -> OptimizeResult:
    """Grid argmax of the predicted key length over estimation sizes.

    Ties break toward fewer estimation samples.  The winner is returned
    even when every candidate predicts a nonpositive length, flagged so
    the caller can refuse to start the run.
    """
    candidates = sorted(set(int(k) for k in candidate_ks))
    if not candidates:
        raise ValueError("no candidate estimation sizes")
    threshold = threshold_from_prediction(predicted) if d_pe0 is None else d_pe0
    best: Optional[OptimizeResult] = None
    for k in candidates:
        if not 0 < k < n_total:
            continue
        n_minus_k = n_total - k
        leak = predicted.leak_per_symbol * n_minus_k + extra_leak_bits
        report = compute_key_length(
            n_minus_k, k, spec, model, threshold, leak,
            sample_std=predicted.distance_std,
            range_bound=predicted.range_bound)
        if best is None or report.ell > best.predicted_ell:
            best = OptimizeResult(k=k, predicted_ell=report.ell,
                                  positive=report.ell > 0)
    if best is None:
        raise ValueError("no candidate inside (0, n_total)")
    return best
