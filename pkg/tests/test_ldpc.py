import itertools

import numpy as np
import pytest

from cvqkd.errors import CodebookError, InfeasibleCodeError
from cvqkd.fieldmath import field_new, field_for_order
from cvqkd.ldpc import (Codebook, Decoder, ParityCheckMatrix, build_codebook,
                        check_capacities, code_filename, decode, fwht,
                        load_matrix, matrix_from_text, matrix_to_text,
                        peg_construct, shortest_cycle_through_variables,
                        store_matrix, verify_codebook)

rng = np.random.default_rng(0xC0DE)


# ---------------------------------------------------------------------------
# independent oracles

def oracle_wht(a):
    """Direct O(q^2) transform: W[w] = sum_x (-1)^popcount(w & x) a[x]."""
    q = len(a)
    out = np.zeros(q)
    for w in range(q):
        for x in range(q):
            out[w] += a[x] * (-1) ** bin(w & x).count("1")
    return out


def oracle_xor_convolve(p, r):
    q = len(p)
    out = np.zeros(q)
    for x in range(q):
        for y in range(q):
            out[x ^ y] += p[x] * r[y]
    return out


def oracle_syndrome(matrix, word):
    field = matrix.field
    s = [0] * matrix.n_checks
    for j in range(matrix.n_checks):
        acc = 0
        for col, coeff in matrix.row(j):
            acc = field.add(acc, field.mul(coeff, int(word[col])))
        s[j] = acc
    return np.array(s, dtype=np.uint8)


def all_words(q, n):
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.uint8)


# ---------------------------------------------------------------------------
# Walsh-Hadamard transform

@pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 6])
def test_fwht_matches_direct_transform(m):
    q = 1 << m
    a = rng.random(q)
    assert np.max(np.abs(fwht(a) - oracle_wht(a))) < 1e-9


def test_fwht_involution_and_batched():
    a = rng.random((5, 7, 16))
    back = fwht(fwht(a)) / 16
    assert np.max(np.abs(back - a)) < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 6])
def test_transform_convolution_theorem(m):
    q = 1 << m
    p = rng.random(q)
    p /= p.sum()
    r = rng.random(q)
    r /= r.sum()
    via_transform = fwht(fwht(p) * fwht(r)) / q
    assert np.max(np.abs(via_transform - oracle_xor_convolve(p, r))) < 1e-9


# ---------------------------------------------------------------------------
# matrix structure and syndrome

def test_single_check_syndrome_against_hand_evaluation():
    f8 = field_new(3)
    coeffs = [3, 1, 7, 2, 5, 6]
    H = ParityCheckMatrix.from_rows(f8, 6, [[(i, c) for i, c in enumerate(coeffs)]])
    word = np.array([4, 0, 1, 7, 2, 3], dtype=np.uint8)
    acc = 0
    for c, x in zip(coeffs, word):
        acc ^= f8.mul(c, int(x))
    assert H.syndrome(word).tolist() == [acc]
    assert H.syndrome(np.zeros(6, dtype=np.uint8)).tolist() == [0]


def test_syndrome_matches_oracle_on_random_matrices():
    for m, n, n_checks in [(1, 8, 3), (2, 6, 3), (4, 12, 5), (8, 10, 4)]:
        field = field_new(m)
        rows = []
        for _ in range(n_checks):
            cols = rng.choice(n, size=4 if n >= 4 else n, replace=False)
            rows.append([(int(c), int(rng.integers(1, field.order))) for c in cols])
        H = ParityCheckMatrix.from_rows(field, n, rows)
        for _ in range(20):
            w = rng.integers(0, field.order, size=n).astype(np.uint8)
            assert np.array_equal(H.syndrome(w), oracle_syndrome(H, w))


def _batch_syndrome_keys(H, words):
    syndromes = np.zeros((len(words), H.n_checks), dtype=np.uint8)
    mul = H.field.mul_table
    for e in range(H.n_edges):
        syndromes[:, H.edge_check[e]] ^= mul[H.edge_coeff[e], words[:, H.edge_col[e]]]
    return syndromes @ ((4 ** np.arange(H.n_checks)).astype(np.int64))


def test_syndrome_cosets_exhaustive_gf4():
    # all 4^6 words: two words share a syndrome exactly when their
    # difference lies in the kernel
    f4 = field_new(2)
    H = peg_construct(6, 0.5, f4, b"coset")
    words = all_words(4, 6)
    keys = _batch_syndrome_keys(H, words)
    spot = rng.integers(0, len(words), size=50)
    for i in spot:
        assert keys[i] == np.dot(H.syndrome(words[i]),
                                 4 ** np.arange(H.n_checks))
    kernel = words[keys == 0]
    # every coset of the kernel carries one syndrome
    for k in kernel:
        assert np.array_equal(_batch_syndrome_keys(H, words ^ k), keys)
    # and distinct cosets carry distinct syndromes: counting forces it
    assert len(kernel) * (4 ** H.n_checks) == len(words)
    assert np.unique(keys).size == 4 ** H.n_checks


def test_matrix_validation_errors():
    f4 = field_new(2)
    with pytest.raises(ValueError):
        ParityCheckMatrix.from_rows(f4, 4, [[(0, 1), (0, 2)]])  # dup column
    with pytest.raises(ValueError):
        ParityCheckMatrix.from_rows(f4, 4, [[(0, 0)]])          # zero coeff
    with pytest.raises(ValueError):
        ParityCheckMatrix.from_rows(f4, 4, [[(5, 1)]])          # col range
    with pytest.raises(ValueError):
        ParityCheckMatrix.from_rows(f4, 4, [[(0, 4)]])          # coeff range
    H = peg_construct(8, 0.5, f4, b"x")
    with pytest.raises(ValueError):
        H.syndrome(np.zeros(7, dtype=np.uint8))
    with pytest.raises(ValueError):
        H.syndrome(np.full(8, 4, dtype=np.uint8))
    lopsided = ParityCheckMatrix.from_rows(
        f4, 4, [[(0, 1), (1, 1), (2, 1), (3, 1)],
                [(0, 1), (1, 1)]])
    with pytest.raises(CodebookError):
        lopsided.validate_ldpc()


# ---------------------------------------------------------------------------
# construction

def test_peg_small_example():
    f4 = field_new(2)
    H = peg_construct(4, 0.5, f4, b"toy")
    assert H.n_checks == 2
    assert H.check_degrees().tolist() == [4, 4]
    assert np.all(H.column_weights() == 2)
    assert shortest_cycle_through_variables(H) >= 4


@pytest.mark.parametrize("n,rate,order", [
    (60, 0.5, 4), (100, 0.7, 32), (240, 0.85, 64), (150, 0.52, 256),
])
def test_peg_invariants(n, rate, order):
    field = field_for_order(order)
    H = peg_construct(n, rate, field, b"grid")
    H.validate_ldpc()
    assert H.n == n
    assert H.n_checks == int(round(n * (1 - rate)))
    assert np.array_equal(H.check_degrees(), check_capacities(n, H.n_checks))
    assert np.all(H.edge_coeff >= 1)
    assert np.all(H.edge_coeff < order)
    # no variable may place both edges on one check
    assert shortest_cycle_through_variables(H) >= 4


def test_peg_spreads_cycles():
    # plenty of check sockets: the search should avoid short cycles entirely
    f4 = field_new(2)
    H = peg_construct(60, 0.5, f4, b"longgirth")
    assert shortest_cycle_through_variables(H) >= 6


def test_peg_determinism_and_seed_sensitivity():
    f = field_for_order(64)
    a = matrix_to_text(peg_construct(120, 0.6, f, b"seed-1"))
    b = matrix_to_text(peg_construct(120, 0.6, f, b"seed-1"))
    c = matrix_to_text(peg_construct(120, 0.6, f, b"seed-2"))
    assert a == b
    assert a != c  # coefficients differ even though the graph agrees


def test_peg_coefficients_cover_field():
    f = field_for_order(256)
    H = peg_construct(2000, 0.5, f, b"coeffs")
    counts = np.bincount(H.edge_coeff, minlength=256)
    assert counts[0] == 0
    assert np.all(counts[1:] > 0)  # 4000 draws over 255 values


def test_peg_infeasible():
    f4 = field_new(2)
    with pytest.raises(InfeasibleCodeError):
        peg_construct(10, 1.2, f4, b"x")
    with pytest.raises(InfeasibleCodeError):
        peg_construct(10, 0.0, f4, b"x")
    with pytest.raises(InfeasibleCodeError):
        peg_construct(10, 0.95, f4, b"x")  # rounds to < 2 checks


# ---------------------------------------------------------------------------
# decoding

def _point_priors(word, q):
    priors = np.zeros((len(word), q))
    priors[np.arange(len(word)), word] = 1.0
    return priors


def test_decode_point_mass_returns_word():
    for order, n, rate in [(2, 12, 0.5), (4, 10, 0.5), (64, 40, 0.6)]:
        field = field_for_order(order)
        H = peg_construct(n, rate, field, b"pm")
        word = rng.integers(0, order, size=n).astype(np.uint8)
        res = decode(H, H.syndrome(word), _point_priors(word, order))
        assert res.syndrome_matched and res.converged
        assert res.iterations == 0
        assert np.array_equal(res.estimate, word)


def test_decode_matches_exhaustive_ml_coset():
    # GF(4), n=6: every coset is small enough to enumerate, so maximum
    # likelihood over the coset is computable exactly
    f4 = field_new(2)
    H = peg_construct(6, 0.5, f4, b"ml")
    dec = Decoder(H)
    words = all_words(4, 6)
    keys = np.zeros(len(words), dtype=np.int64)
    for i, w in enumerate(words):
        keys[i] = np.dot(H.syndrome(w), 4 ** np.arange(H.n_checks))
    err = 0.05
    trial_rng = np.random.default_rng(7)
    agree = total = 0
    for _ in range(500):
        x = trial_rng.integers(0, 4, size=6).astype(np.uint8)
        y = x.copy()
        flip = trial_rng.random(6) < err
        y[flip] = (y[flip] + trial_rng.integers(1, 4, size=flip.sum())) % 4
        priors = np.full((6, 4), err / 3)
        priors[np.arange(6), y] = 1 - err
        s = H.syndrome(x)
        key = np.dot(s, 4 ** np.arange(H.n_checks))
        coset = words[keys == key]
        scores = np.prod(priors[np.arange(6)[None, :], coset], axis=1)
        best = np.argsort(scores)[::-1]
        if scores[best[0]] - scores[best[1]] < 1e-12:
            continue  # ML not unique
        total += 1
        res = dec.decode(s, priors)
        if res.syndrome_matched and np.array_equal(res.estimate, coset[best[0]]):
            agree += 1
    assert total > 300
    assert agree / total >= 0.99


def test_decode_corrects_gaussian_like_noise():
    order, n = 8, 600
    field = field_for_order(order)
    H = peg_construct(n, 0.6, field, b"chan")
    x = rng.integers(0, order, size=n).astype(np.uint8)
    centers = x.astype(float) + rng.normal(0, 0.4, size=n)
    grid = np.arange(order)[None, :]
    priors = np.exp(-0.5 * ((grid - centers[:, None]) / 0.4) ** 2)
    priors /= priors.sum(axis=1, keepdims=True)
    res = decode(H, H.syndrome(x), priors)
    assert res.syndrome_matched
    assert np.array_equal(res.estimate, x)
    again = decode(H, H.syndrome(x), priors)
    assert np.array_equal(res.estimate, again.estimate)
    assert res.iterations == again.iterations


def test_decode_reports_failure_without_raising():
    f = field_for_order(16)
    H = peg_construct(80, 0.9, f, b"hard")
    priors = np.full((80, 16), 1 / 16)
    s = H.syndrome(rng.integers(0, 16, size=80).astype(np.uint8))
    res = decode(H, s, priors, max_iters=8)
    assert not res.syndrome_matched
    assert not res.converged
    assert res.iterations == 8
    # the reported flag must agree with an actual syndrome recomputation
    assert not np.array_equal(H.syndrome(res.estimate), s)


def test_decode_message_normalization_each_iteration():
    f = field_for_order(16)
    H = peg_construct(120, 0.8, f, b"norm")
    x = rng.integers(0, 16, size=120).astype(np.uint8)
    centers = x.astype(float) + rng.normal(0, 0.9, size=120)
    grid = np.arange(16)[None, :]
    priors = np.exp(-0.5 * ((grid - centers[:, None]) / 0.9) ** 2)
    priors /= priors.sum(axis=1, keepdims=True)
    seen = []

    def hook(it, c2v, beliefs):
        seen.append(it)
        assert np.max(np.abs(c2v.sum(axis=1) - 1.0)) < 1e-6
        assert np.max(np.abs(beliefs.sum(axis=1) - 1.0)) < 1e-6

    decode(H, H.syndrome(x), priors, max_iters=12, on_iteration=hook)
    assert seen == list(range(1, len(seen) + 1))
    assert len(seen) >= 1


def test_decode_input_validation():
    f4 = field_new(2)
    H = peg_construct(6, 0.5, f4, b"val")
    good = np.full((6, 4), 0.25)
    with pytest.raises(ValueError):
        decode(H, np.zeros(2, dtype=np.uint8), good)
    with pytest.raises(ValueError):
        decode(H, np.zeros(3, dtype=np.uint8), np.full((6, 8), 0.125))
    bad_sum = good.copy()
    bad_sum[0, 0] = 0.5
    with pytest.raises(ValueError):
        decode(H, np.zeros(3, dtype=np.uint8), bad_sum)
    with pytest.raises(ValueError):
        decode(H, np.zeros(3, dtype=np.uint8), good - 0.5)


# ---------------------------------------------------------------------------
# serialization and the directory library

def test_text_round_trip_bit_exact():
    f = field_for_order(128)
    H = peg_construct(50, 0.52, f, b"round")
    text = matrix_to_text(H)
    H2 = matrix_from_text(text)
    assert matrix_to_text(H2) == text
    w = rng.integers(0, 128, size=50).astype(np.uint8)
    assert np.array_equal(H.syndrome(w), H2.syndrome(w))
    assert H2.design_rate == pytest.approx(0.52)
    assert H2.seed_hex == b"round".hex()


def test_text_format_layout():
    f4 = field_new(2)
    H = peg_construct(4, 0.5, f4, b"fmt")
    lines = matrix_to_text(H).splitlines()
    assert lines[0] == "NBLDPC v1"
    assert lines[1] == f"2 4 2 0.5000 7 {b'fmt'.hex()}"
    assert len(lines) == 2 + 2 + 1
    assert lines[-1].startswith("SHA256 ")
    for line in lines[2:-1]:
        deg = int(line.split()[0])
        assert deg == len(line.split()) - 1


def test_load_rejects_corruption(tmp_path):
    f = field_for_order(32)
    H = peg_construct(30, 0.5, f, b"corrupt")
    path = tmp_path / "c.nbldpc"
    store_matrix(path, H)
    assert matrix_to_text(load_matrix(path)) == matrix_to_text(H)

    text = path.read_text()
    flipped = text.replace(":", ";", 1)
    path.write_text(flipped)
    with pytest.raises(CodebookError):
        load_matrix(path)

    truncated = "\n".join(text.splitlines()[:-3])
    path.write_text(truncated)
    with pytest.raises(CodebookError):
        load_matrix(path)

    with pytest.raises(CodebookError):
        load_matrix(tmp_path / "missing.nbldpc")


def test_codebook_directory(tmp_path):
    written, infeasible = build_codebook(tmp_path, orders=(4, 16),
                                         rates=(0.5, 0.6, 0.75), n=60,
                                         seed=b"lib")
    assert len(written) == 6
    assert infeasible == []
    book = Codebook(tmp_path)
    assert book.orders() == [4, 16]
    assert book.rates(16) == [0.5, 0.6, 0.75]
    H = book.get(16, 0.6)
    assert H.field.order == 16
    assert H.n == 60
    assert book.get(16, 0.6) is H  # cached
    assert book.has(4, 0.75)
    assert not book.has(4, 0.9)
    assert book.block_length(4, 0.5) == 60
    with pytest.raises(CodebookError):
        book.get(64, 0.5)

    only16 = Codebook(tmp_path, orders=(16,))
    assert only16.orders() == [16]
    with pytest.raises(CodebookError):
        only16.get(4, 0.5)

    assert Codebook(tmp_path).fingerprint() == book.fingerprint()
    assert only16.fingerprint() != book.fingerprint()


def test_codebook_idempotent_and_deterministic(tmp_path):
    args = dict(orders=(8,), rates=(0.5, 0.7), n=40, seed=b"same")
    build_codebook(tmp_path / "a", **args)
    build_codebook(tmp_path / "b", **args)
    for rate in (0.5, 0.7):
        name = code_filename(8, rate, 40)
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()
    again, _ = build_codebook(tmp_path / "a", **args)
    assert again == []  # existing files skipped


def test_codebook_infeasible_combinations_reported(tmp_path):
    written, infeasible = build_codebook(tmp_path, orders=(4,),
                                         rates=(0.5, 0.99), n=20, seed=b"x")
    assert len(written) == 1
    assert len(infeasible) == 1
    assert infeasible[0][:2] == (4, 0.99)


def test_verify_codebook(tmp_path):
    build_codebook(tmp_path, orders=(4,), rates=(0.5, 0.6), n=30, seed=b"v")
    report = verify_codebook(tmp_path)
    assert len(report) == 2 and all(ok for _, ok, _ in report)
    victim = sorted(tmp_path.glob("*.nbldpc"))[0]
    victim.write_text(victim.read_text().replace("NBLDPC", "NBLDPX"))
    report = verify_codebook(tmp_path)
    assert sum(1 for _, ok, _ in report if not ok) == 1


def test_codebook_missing_directory(tmp_path):
    with pytest.raises(CodebookError):
        Codebook(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(CodebookError):
        Codebook(empty)
