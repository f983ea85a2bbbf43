"""The two-party session: sifting, estimation, reconciliation, key output.

Both parties execute the same fixed message schedule (the A side sends
first in every exchange), so the per-direction one-time authentication
keys stay aligned.  Every decision that both sides must agree on is
either computed from identical public inputs or announced by A and
recomputed and checked by B.  Any check that fails raises an abort that
is sent to the peer, so both sides stop within one message round, with
no key released.

Direction of correction: A's symbols are the reference; B corrects his
measurements toward them.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..bitpack import pack_bits
from ..crypto import (RandomnessService, confirm_hash, confirm_point,
                      confirm_width, privacy_amplify, toeplitz_seed_bits)
from ..discretize import BinningSpec, bin_values, symbols_to_bytes
from ..errors import (AuthenticationError, ChannelTooNoisyError, ConfigError,
                      SessionAborted, TransportError)
from ..finitekey import (KeyLengthReport, choose_estimation_set,
                         compute_key_length, estimate_distance,
                         expected_distance_bins, reference_model, stub_model)
from ..ldpc import Codebook
from ..reconcile import (CAT_CONFIRM, CAT_LSB, CAT_PE, CAT_REVEAL,
                         CAT_SYNDROME, LeakageLedger, ReconcileParams,
                         fit_channel, receiver_correct,
                         reconciliation_bit_counts, select_params,
                         sender_encode)
from ..simulator import BASIS_P, SimulatorSource, effective_model, model_to_dict
from . import messages as m
from .channel import SecureChannel, TcpTransport, loopback_pair

ROLE_A = "A"
ROLE_B = "B"


@dataclass
class SessionConfig:
    slots: int
    k: int
    model: object = None                    # CovarianceModel; None = default
    alpha: float = 61.6
    d: int = 12
    headroom: float = 1.15
    d_pe0: Optional[float] = None
    epsilon: float = 2e-10
    epsilon_c: float = 2.0 ** -32
    key_model: str = "stub"                 # "stub" | "reference"
    mu_constant: float = 10.0
    margin: float = 0.95
    allowed_orders: Optional[tuple] = None
    max_iters: int = 60
    seed_a: bytes = b"party-a"
    seed_b: bytes = b"party-b"
    shared_secret: bytes = b"pre-shared-authentication-secret"
    codebook_dir: str = ""
    channel_timeout: float = 120.0

    def __post_init__(self):
        if self.model is None:
            from ..simulator import default_model
            self.model = default_model()
        if self.slots < 8:
            raise ConfigError("too few slots for a meaningful run")
        if self.k < 16:
            raise ConfigError("estimation needs at least 16 samples")
        if self.key_model not in ("stub", "reference"):
            raise ConfigError("key_model must be 'stub' or 'reference'")
        if not self.codebook_dir:
            raise ConfigError("a codebook directory is required")

    def spec(self) -> BinningSpec:
        # the low/high split is chosen at runtime; carry a placeholder
        return BinningSpec(self.alpha, self.d, d1=self.d // 2)

    def threshold(self) -> float:
        if self.d_pe0 is not None:
            return self.d_pe0
        eff = effective_model(self.model)
        return self.headroom * expected_distance_bins(
            math.sqrt(eff.difference_var), self.spec())

    def length_model(self):
        if self.key_model == "reference":
            return reference_model(self.epsilon)
        return stub_model(self.epsilon, self.mu_constant)

    def shared_digest(self) -> bytes:
        import hashlib
        shared = {
            "version": m.PROTOCOL_VERSION,
            "slots": self.slots, "k": self.k,
            "model": model_to_dict(self.model),
            "alpha": self.alpha, "d": self.d,
            "headroom": self.headroom, "d_pe0": self.d_pe0,
            "epsilon": self.epsilon, "epsilon_c": self.epsilon_c,
            "key_model": self.key_model, "mu_constant": self.mu_constant,
            "margin": self.margin,
            "allowed_orders": sorted(self.allowed_orders)
            if self.allowed_orders else None,
            "max_iters": self.max_iters,
        }
        return hashlib.sha256(m.encode_json(shared)).digest()


@dataclass
class SessionResult:
    role: str
    aborted: bool
    reason: Optional[str] = None
    detail: str = ""
    n_sifted: int = 0
    n_key: int = 0
    d_pe: Optional[float] = None
    fit: object = None
    params: Optional[ReconcileParams] = None
    report: Optional[KeyLengthReport] = None
    ledger: dict = field(default_factory=dict)
    ell: Optional[int] = None
    key: Optional[bytes] = None
    transcript: object = None

    @property
    def key_digest(self) -> Optional[str]:
        if self.key is None:
            return None
        import hashlib
        return hashlib.sha256(self.key).hexdigest()


class _Party:
    """One protocol participant; B mirrors A's send/receive order."""

    def __init__(self, role: str, cfg: SessionConfig, channel: SecureChannel,
                 source):
        self.role = role
        self.cfg = cfg
        self.channel = channel
        self.source = source
        self.result = SessionResult(role=role, aborted=True)

    # A sends first everywhere; B receives first
    def _exchange(self, msg_type: int, payload: bytes) -> bytes:
        if self.role == ROLE_A:
            self.channel.send(msg_type, payload)
            _, peer = self.channel.expect(msg_type)
        else:
            _, peer = self.channel.expect(msg_type)
            self.channel.send(msg_type, payload)
        return peer

    def _fail(self, reason: str, detail: str = ""):
        raise SessionAborted(reason, detail)

    def run(self) -> SessionResult:
        try:
            self._protocol()
        except SessionAborted as ab:
            self.result.aborted = True
            self.result.reason = ab.reason
            self.result.detail = ab.detail
            if ab.reason != "peer_abort":
                try:
                    self.channel.send(m.MSG_ABORT, m.encode_abort(
                        f"{ab.reason}: {ab.detail}" if ab.detail else ab.reason))
                except Exception:
                    pass
        except AuthenticationError as exc:
            self.result.aborted = True
            self.result.reason = "auth"
            self.result.detail = str(exc)
            try:
                self.channel.send(m.MSG_ABORT, m.encode_abort("auth"))
            except Exception:
                pass
        except TransportError as exc:
            self.result.aborted = True
            self.result.reason = "transport"
            self.result.detail = str(exc)
        self.result.transcript = self.channel.transcript
        return self.result

    def _protocol(self):
        cfg = self.cfg
        res = self.result
        spec = cfg.spec()
        svc = RandomnessService(cfg.seed_a if self.role == ROLE_A else cfg.seed_b)
        codebook = Codebook(cfg.codebook_dir, orders=cfg.allowed_orders)
        ledger = LeakageLedger()

        # -- negotiate ---------------------------------------------------
        hello = m.encode_negotiate(self.role, cfg.shared_digest(),
                                   codebook.fingerprint())
        peer = self._exchange(m.MSG_NEGOTIATE, hello)
        version, peer_role, digest, peer_fp = m.decode_negotiate(peer)
        if version != m.PROTOCOL_VERSION:
            self._fail("negotiate", f"peer speaks version {version}")
        if peer_role == self.role:
            self._fail("negotiate", "both parties claim the same role")
        if digest != cfg.shared_digest():
            self._fail("negotiate", "configuration digests differ")
        if peer_fp != codebook.fingerprint():
            self._fail("negotiate", "codebook fingerprints differ")

        # -- measure and sift ---------------------------------------------
        record = self.source.record_for(
            "alice" if self.role == ROLE_A else "bob", cfg.slots)
        peer_payload = self._exchange(m.MSG_BASES, m.encode_bases(record.bases))
        peer_bases = m.decode_bases(peer_payload, cfg.slots)
        kept = np.nonzero(record.bases == peer_bases)[0]
        res.n_sifted = int(kept.size)
        if kept.size <= cfg.k + 1:
            self._fail("too_few_sifted",
                       f"{kept.size} kept, {cfg.k} needed for estimation")
        values = record.values[kept]
        if self.role == ROLE_B:
            flip = record.bases[kept] == BASIS_P
            values = np.where(flip, -values, values)
        symbols = bin_values(values, spec)

        # -- parameter estimation ------------------------------------------
        n_sifted = kept.size
        if self.role == ROLE_A:
            pe_idx = choose_estimation_set(n_sifted, cfg.k,
                                           cfg.seed_a + b"/estimation-set")
            self.channel.send(m.MSG_PE_INDICES, m.encode_indices(pe_idx))
        else:
            _, payload = self.channel.expect(m.MSG_PE_INDICES)
            pe_idx = m.decode_indices(payload)
            if (pe_idx.size != cfg.k or pe_idx.min() < 0
                    or pe_idx.max() >= n_sifted
                    or np.any(np.diff(pe_idx) <= 0)):
                self._fail("protocol", "estimation set is not a valid subset")
        mine_pe = symbols[pe_idx]
        peer_pe = m.decode_symbols(
            self._exchange(m.MSG_PE_SYMBOLS, m.encode_symbols(mine_pe)))
        if peer_pe.size != cfg.k:
            self._fail("protocol", "estimation symbol count mismatch")
        pe_a, pe_b = ((mine_pe, peer_pe) if self.role == ROLE_A
                      else (peer_pe, mine_pe))
        ledger.add(CAT_PE, 2 * cfg.d * cfg.k)
        d_pe0 = cfg.threshold()
        est = estimate_distance(pe_a, pe_b, d_pe0)
        res.d_pe = est.d_pe
        if not est.passed:
            self._fail("estimation_distance",
                       f"observed {est.d_pe:.3f} bins  threshold {d_pe0:.3f}")

        # -- channel fit and code selection ---------------------------------
        try:
            fit = fit_channel(pe_a, pe_b, spec)
            params = select_params(fit, spec, pe_a, pe_b, codebook,
                                   margin=cfg.margin,
                                   allowed_orders=cfg.allowed_orders)
        except ChannelTooNoisyError as exc:
            self._fail("channel_too_noisy", str(exc))
        res.fit = fit
        if self.role == ROLE_A:
            self.channel.send(m.MSG_RECON_PARAMS,
                              m.encode_json(params.to_dict()))
        else:
            _, payload = self.channel.expect(m.MSG_RECON_PARAMS)
            announced = ReconcileParams.from_dict(m.decode_json(payload))
            if announced != params:
                self._fail("params", "announced code choice does not match")
        res.params = params

        mask = np.ones(n_sifted, dtype=bool)
        mask[pe_idx] = False
        key_symbols = symbols[mask]
        key_values = values[mask]
        n_key = int(key_symbols.size)
        res.n_key = n_key

        # -- reconciliation --------------------------------------------------
        matrix = codebook.get(params.order, params.rate_pct / 100.0)
        n_full = n_key // params.block_length
        if self.role == ROLE_A:
            sent = sender_encode(key_symbols, params, spec, codebook)
            self.channel.send(m.MSG_LSB_REVEAL,
                              m.encode_lsb(sent.lsb, params.d1))
            for i, synd in enumerate(sent.syndromes):
                self.channel.send(m.MSG_SYNDROME, m.encode_syndrome(i, synd))
            self.channel.send(m.MSG_SYNDROME,
                              m.encode_syndrome(n_full, sent.tail_msb))
            fine_key = key_symbols
        else:
            _, payload = self.channel.expect(m.MSG_LSB_REVEAL)
            lsb = m.decode_lsb(payload)
            if lsb.size != n_key or (lsb.size and int(lsb.max()) >> params.d1):
                self._fail("protocol", "lsb reveal does not fit the key set")
            syndromes = []
            for i in range(n_full):
                _, payload = self.channel.expect(m.MSG_SYNDROME)
                idx, vals = m.decode_syndrome(payload)
                if idx != i or vals.size != matrix.n_checks \
                        or (vals.size and int(vals.max()) >= params.order):
                    self._fail("protocol", f"syndrome block {i} malformed")
                syndromes.append(vals.astype(np.int64))
            _, payload = self.channel.expect(m.MSG_SYNDROME)
            idx, tail_msb = m.decode_syndrome(payload)
            if idx != n_full or tail_msb.size != n_key - n_full * matrix.n \
                    or (tail_msb.size and int(tail_msb.max()) >= params.order):
                self._fail("protocol", "tail reveal malformed")
            got = receiver_correct(key_values, lsb, syndromes, tail_msb,
                                   params, fit, spec, codebook,
                                   max_iters=cfg.max_iters)
            if not got.all_matched:
                bad = sum(not b.syndrome_matched for b in got.blocks)
                self._fail("reconcile", f"{bad} of {n_full} blocks failed")
            fine_key = got.fine
        lsb_bits, synd_bits, reveal_bits = reconciliation_bit_counts(
            n_key, params, matrix.n_checks)
        ledger.add(CAT_LSB, lsb_bits)
        ledger.add(CAT_SYNDROME, synd_bits)
        ledger.add(CAT_REVEAL, reveal_bits)

        # -- confirmation ----------------------------------------------------
        data = symbols_to_bytes(fine_key)
        tag_bits = confirm_width(len(data), cfg.epsilon_c)
        if self.role == ROLE_A:
            point = confirm_point(svc.stream("confirmation"), tag_bits)
            self.channel.send(m.MSG_CONFIRM_SEED,
                              m.encode_confirm_seed(tag_bits, point))
        else:
            _, payload = self.channel.expect(m.MSG_CONFIRM_SEED)
            peer_bits, point = m.decode_confirm_seed(payload)
            if peer_bits != tag_bits:
                self._fail("protocol", "confirmation width mismatch")
        my_tag = confirm_hash(data, point, tag_bits)
        peer_tag_bits, peer_tag = m.decode_confirm_tag(self._exchange(
            m.MSG_CONFIRM_TAG, m.encode_confirm_tag(tag_bits, my_tag)))
        if peer_tag_bits != tag_bits:
            self._fail("protocol", "confirmation width mismatch")
        # equal keys publish identical tags, so one tag length is charged
        ledger.add(CAT_CONFIRM, tag_bits)
        res.ledger = ledger.as_dict()
        if peer_tag != my_tag:
            self._fail("confirm", "confirmation tags differ")

        # -- key length and report cross-check -------------------------------
        sample_std = float(np.std(
            np.abs(pe_a.astype(np.int64) - pe_b.astype(np.int64)), ddof=1))
        report = compute_key_length(
            n_key, cfg.k, spec, cfg.length_model(), d_pe0,
            ledger.key_leakage_bits, sample_std=sample_std,
            range_bound=float(spec.bins - 1))
        res.report = report
        peer_report = self._exchange(m.MSG_KEYLEN_REPORT,
                                     report.canonical_bytes())
        if peer_report != report.canonical_bytes():
            self._fail("keylen", "key length reports differ")
        if report.ell <= 0:
            self._fail("no_key", f"computed length {report.ell:.1f} bits")

        # -- privacy amplification -------------------------------------------
        ell = int(math.floor(report.ell))
        n_bits = cfg.d * n_key
        if ell > n_bits:
            self._fail("model_inconsistent",
                       "computed length exceeds the raw key size")
        widths = np.arange(cfg.d, dtype=np.uint32)
        raw_bits = ((fine_key.astype(np.uint32)[:, None] >> widths) & 1
                    ).astype(np.uint8).ravel()
        seed_len = toeplitz_seed_bits(n_bits, ell)
        if self.role == ROLE_A:
            seed_bits = svc.stream("amplification-seed").bits(seed_len)
            self.channel.send(m.MSG_PA_SEED, m.encode_pa_seed(seed_bits))
        else:
            _, payload = self.channel.expect(m.MSG_PA_SEED)
            seed_bits = m.decode_pa_seed(payload)
            if seed_bits.size != seed_len:
                self._fail("protocol", "amplification seed length mismatch")
        key_bits = privacy_amplify(raw_bits, ell, seed_bits)
        res.key = pack_bits(key_bits)
        res.ell = ell
        res.aborted = False
        res.reason = None


def run_party(role: str, cfg: SessionConfig, channel: SecureChannel,
              source) -> SessionResult:
    return _Party(role, cfg, channel, source).run()


def _tcp_pair(timeout: float):
    import socket as socket_mod
    listener = socket_mod.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    client = socket_mod.create_connection(listener.getsockname(),
                                          timeout=timeout)
    server, _ = listener.accept()
    listener.close()
    return TcpTransport(server, timeout), TcpTransport(client, timeout)


def run_pair(cfg: SessionConfig, *, intercept=None, use_tcp: bool = False,
             source=None):
    """Run both parties to completion and return (result_a, result_b)."""
    if source is None:
        source = SimulatorSource(cfg.model, cfg.seed_a, cfg.seed_b)
    if use_tcp:
        if intercept is not None:
            raise ConfigError("tampering hooks exist only on the loopback")
        trans_a, trans_b = _tcp_pair(cfg.channel_timeout)
    else:
        trans_a, trans_b = loopback_pair(intercept, cfg.channel_timeout)
    chan_a = SecureChannel(trans_a, cfg.shared_secret, ROLE_A)
    chan_b = SecureChannel(trans_b, cfg.shared_secret, ROLE_B)
    results: list = [None, None]
    errors: list = [None, None]

    def work(idx: int, role: str, channel: SecureChannel):
        try:
            results[idx] = run_party(role, cfg, channel, source)
        except BaseException as exc:   # surface real bugs to the caller
            errors[idx] = exc
        finally:
            channel.close()

    thread_a = threading.Thread(target=work, args=(0, ROLE_A, chan_a))
    thread_b = threading.Thread(target=work, args=(1, ROLE_B, chan_b))
    thread_a.start()
    thread_b.start()
    thread_a.join()
    thread_b.join()
    for err in errors:
        if err is not None:
            raise err
    return results[0], results[1]
