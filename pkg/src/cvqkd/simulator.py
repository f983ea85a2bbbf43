"""Gaussian model of the entangled source, channel and homodyne detectors.

The source emits two-mode squeezed states described by a covariance
matrix with symmetric quadrature variances v and cross terms +c for the
X pair and -c for the P pair (all in shot-noise units).  Channel loss
and detector efficiencies act as beamsplitters mixing in vacuum; excess
noise is referred to Bob's mode before the channel.  The effective
covariance after all of that is

    v_a_eff = det_a * v_a + (1 - det_a)
    v_b_eff = eta * det_b * (v_b + excess) + (1 - eta * det_b)
    c_eff   = sqrt(eta * det_b * det_a) * c

Each slot both parties independently pick a quadrature to measure.
Matching choices produce a correlated pair from the conditional
bivariate normal, mismatched choices produce independent marginals.
All randomness comes from seeded deterministic streams, so a run is
reproducible from (seed_a, seed_b).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
from dataclasses import dataclass, asdict

import numpy as np

from .crypto import RandomnessService, _seed_bytes
from .errors import ConfigError

BASIS_X = 0
BASIS_P = 1


@dataclass(frozen=True)
class CovarianceModel:
    """Source covariance plus channel and detector parameters."""

    v_a: float
    v_b: float
    c: float
    eta: float = 1.0
    excess: float = 0.0
    det_eff_a: float = 1.0
    det_eff_b: float = 1.0

    def __post_init__(self):
        if self.v_a < 1.0 or self.v_b < 1.0:
            raise ConfigError("quadrature variances below shot noise")
        if self.c * self.c > self.v_a * self.v_b:
            raise ConfigError("correlation exceeds the Cauchy-Schwarz bound")
        for name in ("eta", "det_eff_a", "det_eff_b"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.excess < 0.0:
            raise ConfigError("excess noise must be non-negative")


@dataclass(frozen=True)
class EffectiveModel:
    """Covariance actually seen by the two detectors."""

    v_a: float
    v_b: float
    c: float

    @property
    def conditional_var_a_given_b(self) -> float:
        return self.v_a - self.c * self.c / self.v_b

    @property
    def difference_var(self) -> float:
        return self.v_a + self.v_b - 2.0 * self.c


def effective_model(model: CovarianceModel) -> EffectiveModel:
    tb = model.eta * model.det_eff_b
    v_a = model.det_eff_a * model.v_a + (1.0 - model.det_eff_a)
    v_b = tb * (model.v_b + model.excess) + (1.0 - tb)
    c = math.sqrt(tb * model.det_eff_a) * model.c
    eff = EffectiveModel(v_a=v_a, v_b=v_b, c=c)
    assert eff.c * eff.c <= eff.v_a * eff.v_b + 1e-12
    return eff


def two_mode_squeezed_model(squeezing_db: float, eta: float = 1.0,
                            excess: float = 0.0, det_eff_a: float = 1.0,
                            det_eff_b: float = 1.0) -> CovarianceModel:
    """Model from a squeezing level: variance of the quiet quadrature in dB."""
    if squeezing_db <= 0:
        raise ConfigError("squeezing level must be positive (in dB)")
    anti = 10.0 ** (squeezing_db / 10.0)
    quiet = 10.0 ** (-squeezing_db / 10.0)
    v = 0.5 * (anti + quiet)   # cosh(2r)
    c = 0.5 * (anti - quiet)   # sinh(2r)
    return CovarianceModel(v_a=v, v_b=v, c=c, eta=eta, excess=excess,
                           det_eff_a=det_eff_a, det_eff_b=det_eff_b)


def default_model() -> CovarianceModel:
    """Operating point used throughout the desk-scale tests."""
    return two_mode_squeezed_model(10.0, eta=1.0, excess=0.01,
                                   det_eff_a=0.98, det_eff_b=0.98)


def loss_db_to_eta(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


@dataclass
class QuadratureRecord:
    """One party's measurement record: basis per slot plus the value."""

    bases: np.ndarray   # uint8, BASIS_X or BASIS_P
    values: np.ndarray  # float64, shot-noise units

    @property
    def count(self) -> int:
        return self.bases.shape[0]


def _state_service(seed_a, seed_b) -> RandomnessService:
    a = _seed_bytes(seed_a)
    b = _seed_bytes(seed_b)
    h = hashlib.sha256()
    h.update(len(a).to_bytes(4, "big"))
    h.update(a)
    h.update(len(b).to_bytes(4, "big"))
    h.update(b)
    return RandomnessService(h.digest())


def draw_samples(model: CovarianceModel, slots: int, seed_a, seed_b):
    """Simulate `slots` rounds of measurement for both parties.

    Basis choices come from each party's own seed; the joint quadrature
    outcome comes from a state stream mixing both seeds, which stands in
    for the shared entangled state.  Returns (record_a, record_b).
    """
    if slots <= 0:
        raise ConfigError("slot count must be positive")
    eff = effective_model(model)
    bases_a = RandomnessService(seed_a).stream("basis").bits(slots)
    bases_b = RandomnessService(seed_b).stream("basis").bits(slots)
    state = _state_service(seed_a, seed_b).stream("state")

    z_a = state.normal(slots)
    z_b = state.normal(slots)
    a_vals = math.sqrt(eff.v_a) * z_a
    same = bases_a == bases_b
    # sign of the cross term: + for X pairs, - for P pairs
    sign = np.where(bases_a == BASIS_P, -1.0, 1.0)
    slope = sign * (eff.c / eff.v_a)
    sigma_cond = math.sqrt(max(eff.v_b - eff.c * eff.c / eff.v_a, 0.0))
    b_vals = np.where(same,
                      slope * a_vals + sigma_cond * z_b,
                      math.sqrt(eff.v_b) * z_b)
    return (QuadratureRecord(bases=bases_a, values=a_vals),
            QuadratureRecord(bases=bases_b, values=b_vals))


def draw_vacuum(slots: int, seed, label: str = "vacuum") -> np.ndarray:
    """Unit-variance vacuum samples for shot-noise calibration."""
    return RandomnessService(seed).stream(label).normal(slots)


def calibrate_shot_noise(samples) -> float:
    """Scale factor from vacuum samples: values / factor have unit variance."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        raise ConfigError("not enough calibration samples")
    factor = float(np.std(arr))
    if factor <= 0.0:
        raise ConfigError("degenerate calibration samples")
    return factor


@dataclass
class SiftResult:
    indices: np.ndarray   # slot positions that survived
    bases: np.ndarray     # the common basis per kept slot
    values_a: np.ndarray
    values_b: np.ndarray
    total_slots: int

    @property
    def kept(self) -> int:
        return self.indices.shape[0]


def sift(record_a: QuadratureRecord, record_b: QuadratureRecord) -> SiftResult:
    """Keep slots where both parties measured the same quadrature."""
    if record_a.count != record_b.count:
        raise ValueError("records cover different slot counts")
    same = record_a.bases == record_b.bases
    idx = np.flatnonzero(same)
    return SiftResult(indices=idx,
                      bases=record_a.bases[idx].copy(),
                      values_a=record_a.values[idx].copy(),
                      values_b=record_b.values[idx].copy(),
                      total_slots=record_a.count)


# ---------------------------------------------------------------------------
# measurement dumps: 9-byte records (basis byte + little-endian float64)
# plus a JSON sidecar carrying the model parameters and seeds.

_RECORD = struct.Struct("<Bd")


def write_dump(path, record: QuadratureRecord, meta: dict | None = None):
    with open(path, "wb") as fh:
        for basis, value in zip(record.bases, record.values):
            fh.write(_RECORD.pack(int(basis), float(value)))
    sidecar = dict(meta or {})
    sidecar["count"] = record.count
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_dump(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    raw = open(path, "rb").read()
    count = meta["count"]
    if len(raw) != count * _RECORD.size:
        raise ConfigError("dump truncated or count mismatch")
    bases = np.empty(count, dtype=np.uint8)
    values = np.empty(count, dtype=np.float64)
    for i in range(count):
        bases[i], values[i] = _RECORD.unpack_from(raw, i * _RECORD.size)
    return QuadratureRecord(bases=bases, values=values), meta


def model_to_dict(model: CovarianceModel) -> dict:
    return asdict(model)


def model_from_dict(data: dict) -> CovarianceModel:
    return CovarianceModel(**data)


class SimulatorSource:
    """Shared sample source for an in-process session pair.

    Both parties ask for their record; generation happens once under a
    lock so the two records come from the same joint draw.
    """

    def __init__(self, model: CovarianceModel, seed_a, seed_b):
        self.model = model
        self.seed_a = seed_a
        self.seed_b = seed_b
        self._lock = threading.Lock()
        self._records = None
        self._slots = None

    def record_for(self, role: str, slots: int) -> QuadratureRecord:
        with self._lock:
            if self._records is None:
                self._records = draw_samples(self.model, slots, self.seed_a, self.seed_b)
                self._slots = slots
            if slots != self._slots:
                raise ConfigError("both parties must request the same slot count")
        return self._records[0] if role == "alice" else self._records[1]


class PrecomputedSource:
    """Source backed by records loaded from dumps."""

    def __init__(self, record_a: QuadratureRecord, record_b: QuadratureRecord):
        if record_a.count != record_b.count:
            raise ConfigError("dump records disagree on slot count")
        self._records = (record_a, record_b)

    def record_for(self, role: str, slots: int) -> QuadratureRecord:
        rec = self._records[0] if role == "alice" else self._records[1]
        if slots != rec.count:
            raise ConfigError(f"source holds {rec.count} slots, session wants {slots}")
        return rec
