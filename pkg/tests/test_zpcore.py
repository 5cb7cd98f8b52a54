"""The cleartext math layer: frozen examples plus randomized invariants.

Expected values were computed by hand or by the brute-force oracles in
this file, never by the code under test.
"""

import random

import numpy as np
import pytest

from hcpdq.zpcore import (
    InconsistentSystem,
    ModulusTooSmall,
    NotFullySplit,
    PrimeField,
    SingularSystem,
    SparseVector,
    ZeroInverse,
    ZpPoly,
    elementary_symmetric_oracle,
    expand_roots_oracle,
    find_roots,
    newton_coeffs,
    power_sums,
    poly_eval_many,
    reconst_idx,
    solve_vandermonde_sub,
    strip_zero_roots,
    vandermonde_entry,
    vandermonde_matvec,
)

P = 65537


class TestPrimeField:
    def test_pow_examples(self, f65537):
        assert PrimeField(5).pow(4, 4) == 1  # 256 mod 5
        assert f65537.pow(123, 0) == 1
        assert f65537.pow(7, 65536) == 1  # Fermat

    def test_inv_examples(self, f65537):
        assert f65537.inv(1) == 1
        assert f65537.inv(2) == 32769
        assert 2 * 32769 % P == 1
        with pytest.raises(ZeroInverse):
            f65537.inv(0)

    def test_inv_random_sample(self, f65537, rng):
        for _ in range(10_000):
            a = rng.randrange(1, P)
            assert f65537.inv(a) * a % P == 1

    def test_rejects_composite_and_oversize(self):
        with pytest.raises(ValueError):
            PrimeField(65536)
        with pytest.raises(ValueError):
            PrimeField((1 << 64) + 13)


class TestNewton:
    def test_pair_example(self, f65537):
        # power sums of {1, 2}: (3, 5) -> (X-1)(X-2) = X^2 - 3X + 2
        f = newton_coeffs([3, 5], f65537)
        assert f.coeffs == (2, P - 3, 1)

    def test_all_zero_sums(self, f65537):
        for s in (1, 3, 8):
            f = newton_coeffs([0] * s, f65537)
            assert f.coeffs == tuple([0] * s + [1])  # X^s

    def test_triple_example(self, f65537):
        # {2, 3, 5} -> X^3 - 10X^2 + 31X - 30
        w = power_sums([2, 3, 5], 3, f65537)
        assert w == [10, 38, 160]
        f = newton_coeffs(w, f65537)
        assert f.coeffs == ((-30) % P, 31, (-10) % P, 1)

    def test_modulus_too_small(self):
        with pytest.raises(ModulusTooSmall):
            newton_coeffs([1, 2, 3, 4, 5], PrimeField(5))

    @pytest.mark.parametrize("p", [65537, 40961])
    def test_consistency_with_expansion_oracle(self, p, rng):
        # multisets (repeats allowed), sizes up to 12, against the direct
        # product expansion
        field = PrimeField(p)
        for _ in range(300):
            s = rng.randrange(1, 13)
            roots = [rng.randrange(p) for _ in range(s)]
            f = newton_coeffs(power_sums(roots, s, field), field)
            assert f == expand_roots_oracle(roots, field)

    def test_matches_elementary_symmetric_oracle(self, f65537, rng):
        # coefficient of X^(s-k) must be (-1)^k e_k of the multiset
        for _ in range(50):
            s = rng.randrange(1, 7)
            roots = [rng.randrange(P) for _ in range(s)]
            f = newton_coeffs(power_sums(roots, s, f65537), f65537)
            for k in range(s + 1):
                ek = elementary_symmetric_oracle(roots, k, f65537)
                sign = 1 if k % 2 == 0 else -1
                assert f.coeffs[s - k] == sign * ek % P


class TestElementarySymmetricOracle:
    def test_examples(self, f65537):
        assert elementary_symmetric_oracle([1, 2], 2, f65537) == 2
        assert elementary_symmetric_oracle([1, 2], 0, f65537) == 1
        assert elementary_symmetric_oracle([2, 3, 5], 2, f65537) == 31  # 6+10+15


class TestStripZeroRoots:
    def test_one_zero_root(self):
        f = ZpPoly.make([0, 2, -3, 1], P)  # X^3 - 3X^2 + 2X
        assert strip_zero_roots(f).coeffs == (2, P - 3, 1)

    def test_pure_power(self):
        assert strip_zero_roots(ZpPoly.make([0, 0, 0, 0, 1], P)).coeffs == (1,)

    def test_no_zero_root_unchanged(self):
        f = ZpPoly.make([2, -3, 1], P)
        assert strip_zero_roots(f) == f


class TestFindRoots:
    def test_small_example(self, f65537):
        g = ZpPoly.make([2, -3, 1], P)
        assert find_roots(g, f65537, 16384) == (1, 2)

    def test_constant_has_no_roots(self, f65537):
        assert find_roots(ZpPoly.make([1], P), f65537, 16384) == ()

    def test_x_squared_plus_one(self, f65537):
        # 65537 = 1 (mod 4), so X^2 + 1 splits: roots 256 and 65281
        g = ZpPoly.make([1, 0, 1], P)
        assert find_roots(g, f65537, 65536) == (256, 65281)
        with pytest.raises(NotFullySplit):
            find_roots(g, f65537, 16384)  # 65281 is out of range

    def test_irreducible_quadratic_rejected(self, f65537):
        # X^2 - 3: 3 is not a QR mod 65537 iff 3^((p-1)/2) = -1
        assert pow(3, (P - 1) // 2, P) == P - 1
        with pytest.raises(NotFullySplit):
            find_roots(ZpPoly.make([-3, 0, 1], P), f65537, P - 1)

    def test_repeated_root_rejected(self, f65537):
        g = expand_roots_oracle([7, 7], f65537)
        with pytest.raises(NotFullySplit):
            find_roots(g, f65537, 100)

    def test_roots_verify_by_evaluation(self, f65537, rng):
        for _ in range(100):
            deg = rng.randrange(1, 24)
            roots = sorted(rng.sample(range(1, 10_000), deg))
            g = expand_roots_oracle(roots, f65537)
            got = find_roots(g, f65537, 10_000, seed=rng.randrange(1 << 30))
            assert len(got) == deg
            for r in got:
                assert g.evaluate(r, f65537) == 0
            assert got == tuple(roots)

    def test_deterministic_given_seed(self, f65537):
        g = expand_roots_oracle(list(range(2, 40)), f65537)
        ops = []
        for _ in range(2):
            field = PrimeField(P, check=False)
            assert find_roots(g, field, 100, seed=5) == tuple(range(2, 40))
            ops.append(field.ops)
        assert ops[0] == ops[1]

    def test_tiny_field_scan_path(self):
        field = PrimeField(17)
        g = expand_roots_oracle([3, 5, 11], field)
        assert find_roots(g, field, 16) == (3, 5, 11)

    def test_brute_force_agreement(self, f65537, rng):
        # independent trial-evaluation oracle over [1, N]
        N = 2048
        for _ in range(20):
            deg = rng.randrange(1, 12)
            roots = sorted(rng.sample(range(1, N + 1), deg))
            g = expand_roots_oracle(roots, f65537)
            vals = poly_eval_many(list(g.coeffs), np.arange(1, N + 1), f65537)
            brute = tuple(int(i) for i in np.nonzero(np.asarray(vals) == 0)[0] + 1)
            assert find_roots(g, f65537, N) == brute


class TestReconstIdx:
    def test_examples(self, f65537):
        assert reconst_idx([5, 13], f65537, 100) == (2, 3)
        assert reconst_idx([0, 0], f65537, 100) == ()
        w = power_sums([1, 100, 10000], 3, f65537)
        assert reconst_idx(w, f65537, 16384) == (1, 100, 10000)

    def test_round_trip_random(self, f65537, rng):
        # index round trip across sparsities and lengths; N = 2^17 exceeds
        # 65537 and needs the larger NTT prime to keep p > N
        f786433 = PrimeField(786433)
        for _ in range(200):
            N = rng.choice([64, 4096, 1 << 17])
            field = f65537 if N < 65537 else f786433
            s = rng.randrange(1, 33)
            idx = sorted(rng.sample(range(1, N + 1), rng.randrange(0, s + 1)))
            w = power_sums(idx, s, field)
            assert reconst_idx(w, field, N) == tuple(idx)


class TestVandermonde:
    def test_entry_examples(self, f65537):
        assert vandermonde_entry(1, 7, f65537) == 7
        assert vandermonde_entry(2, 3, f65537) == 9
        assert vandermonde_entry(3, 256, f65537) == 256**3 % P

    def test_solve_example(self, f65537):
        sv = solve_vandermonde_sub([31, 83], [2, 3], f65537, length=10)
        assert sv.entries == ((2, 5), (3, 7))

    def test_empty_system(self, f65537):
        sv = solve_vandermonde_sub([0, 0, 0], [], f65537, length=5)
        assert sv.entries == ()
        with pytest.raises(InconsistentSystem):
            solve_vandermonde_sub([0, 1], [], f65537)

    def test_all_ones(self, f65537):
        s = 6
        idx = list(range(1, s + 1))
        sv_in = SparseVector.from_pairs(s, [(i, 1) for i in idx])
        e = vandermonde_matvec(sv_in, s, f65537)
        assert solve_vandermonde_sub(e, idx, f65537, length=s) == sv_in

    def test_round_trip_random(self, f65537, rng):
        for _ in range(300):
            N = rng.choice([100, 5000, 100_000])
            s = rng.randrange(1, 33)
            count = rng.randrange(0, s + 1)
            idx = sorted(rng.sample(range(1, N + 1), count))
            sv = SparseVector.from_pairs(N, [(i, rng.randrange(1, P)) for i in idx])
            e = vandermonde_matvec(sv, s, f65537)
            assert solve_vandermonde_sub(e, idx, f65537, length=N) == sv

    def test_column_independence(self, f65537, rng):
        # any s columns are independent when p > N: solving a consistent
        # system must always succeed and reproduce the coefficients
        for _ in range(200):
            s = rng.randrange(1, 33)
            N = rng.choice([40_000, 65_000])
            idx = sorted(rng.sample(range(1, N + 1), s))
            sv = SparseVector.from_pairs(N, [(i, rng.randrange(1, P)) for i in idx])
            e = vandermonde_matvec(sv, s, f65537)
            assert solve_vandermonde_sub(e, idx, f65537, length=N) == sv

    def test_inconsistent_rejected(self, f65537):
        sv = SparseVector.from_pairs(50, [(4, 9), (21, 1)])
        e = vandermonde_matvec(sv, 4, f65537)
        e[3] = (e[3] + 1) % P  # corrupt a redundant equation
        with pytest.raises(InconsistentSystem):
            solve_vandermonde_sub(e, [4, 21], f65537, length=50)

    def test_duplicate_columns_rejected(self, f65537):
        with pytest.raises(ValueError):
            solve_vandermonde_sub([1, 2], [5, 5], f65537)

    def test_zero_solution_rejected(self, f65537):
        # e consistent with value 0 at a claimed support index
        sv = SparseVector.from_pairs(50, [(7, 3)])
        e = vandermonde_matvec(sv, 3, f65537)
        with pytest.raises(InconsistentSystem):
            solve_vandermonde_sub(e, [7, 9], f65537, length=50)

    def test_large_prime_python_path(self):
        # beyond the int64 fast paths: a 61-bit prime
        p = (1 << 61) - 1
        field = PrimeField(p)
        sv = SparseVector.from_pairs(1000, [(3, 12345678901234567), (900, 42)])
        e = vandermonde_matvec(sv, 4, field)
        assert solve_vandermonde_sub(e, [3, 900], field, length=1000) == sv
        w = power_sums([3, 900], 4, field)
        assert reconst_idx(w, field, 1000) == (3, 900)


class TestSparseVector:
    def test_validation(self):
        with pytest.raises(ValueError):
            SparseVector(5, ((0, 1),))
        with pytest.raises(ValueError):
            SparseVector(5, ((2, 0),))
        with pytest.raises(ValueError):
            SparseVector(5, ((3, 1), (2, 1)))

    def test_dense_round_trip(self, rng):
        dense = [0, 7, 0, 0, 9, 1]
        sv = SparseVector.from_dense(dense)
        assert sv.entries == ((2, 7), (5, 9), (6, 1))
        assert list(sv.to_dense()) == dense
