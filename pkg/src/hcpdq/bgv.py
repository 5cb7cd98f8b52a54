"""Minimal desk-scale BGV backend realizing the backend contract.

Plaintexts live in R_p = Z_p[X]/(X^n + 1) with p = 1 (mod 2n), so R_p
splits into n slots arranged as a 2 x (n/2) matrix: slot (r, c) is the
evaluation at psi^((-1)^r * 3^c), psi a primitive 2n-th root of unity.
The Galois map X -> X^(3^r) rotates both rows left by r and X -> X^(-1)
swaps the rows, which is exactly the slot semantics the simulator mirrors.

Ciphertexts are RLWE pairs over R_Q where Q is a product of NTT-friendly
primes (one prime per level, multiplied together; plain big-integer
arithmetic rather than RNS). Each prime is chosen = 1 (mod 2n) so the
negacyclic NTT exists, and = 1 (mod p) so modulus switching preserves the
plaintext congruence. The decryption invariant is
    c0 + c1*s = m + p*e  (mod Q_level),  |m + p*e| < Q_level / 2,
with exact decryption as long as the (heuristically tracked) noise bound
stays under the threshold; tests verify exactness by equality, the tracker
only exists to fail early with NoiseOverflow.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpz
import numpy as np

from .heiface import (
    BACKEND_BGV,
    BackendMismatch,
    Ciphertext,
    HeParams,
    KeySet,
    LevelExhausted,
    MissingRotationKey,
    OpCounters,
    SlotMatrix,
    read_envelope,
    write_envelope,
)

_OBJ_KIND_CIPHERTEXT = 0x01
_OBJ_KIND_KEYSET = 0x02

_CBD_HALF_WIDTH = 21  # centered binomial: variance 10.5, sigma ~ 3.24
_NP_NTT_LIMIT = 1 << 26


class NoNttPrimes(RuntimeError):
    """No suitable NTT-friendly prime chain exists in the search window."""


class NoiseOverflow(RuntimeError):
    """The tracked noise bound crossed the decryption threshold."""


def find_chain_primes(n: int, p: int, count: int, bits: int = 54) -> list[int]:
    """`count` distinct primes q with q = 1 (mod 2n) and q = 1 (mod p),
    all of the requested bit length, largest first."""
    step = 2 * n * p // int(gmpy2.gcd(2 * n, p))
    top = (1 << bits) - 1
    cand = top - (top - 1) % step
    out: list[int] = []
    floor = 1 << (bits - 1)
    while len(out) < count and cand > floor:
        if gmpy2.is_prime(cand):
            out.append(int(cand))
        cand -= step
    if len(out) < count:
        raise NoNttPrimes(
            f"could not find {count} primes = 1 (mod {step}) of {bits} bits"
        )
    return out


@dataclass(frozen=True)
class ModulusChain:
    """Descending prime list q_L > ... > q_0; the level-l ciphertext modulus
    is the product q_0 * ... * q_l. Switching down one level divides by q_l."""

    primes: tuple[int, ...]
    n: int
    p: int

    def __post_init__(self):
        if len(set(self.primes)) != len(self.primes):
            raise ValueError("chain primes must be distinct")
        if list(self.primes) != sorted(self.primes, reverse=True):
            raise ValueError("chain primes must be descending")
        for q in self.primes:
            if q % (2 * self.n) != 1:
                raise ValueError(f"chain prime {q} is not NTT-friendly for n={self.n}")
            if q % self.p != 1:
                # required so modulus switching preserves values mod p
                raise ValueError(f"chain prime {q} is not = 1 (mod p)")

    @property
    def max_level(self) -> int:
        return len(self.primes) - 1

    def level_prime(self, level: int) -> int:
        """The prime divided out when switching from `level` to `level - 1`."""
        return self.primes[self.max_level - level]

    def modulus(self, level: int) -> int:
        out = 1
        for l in range(level + 1):
            out *= self.level_prime(l)
        return out


def _bitrev(n: int) -> list[int]:
    bits = n.bit_length() - 1
    return [int(format(i, f"0{bits}b")[::-1], 2) for i in range(n)]


def _prim_root_2n(q: int, n: int) -> int:
    """Deterministic primitive 2n-th root of unity mod prime q."""
    for g in range(2, q):
        w = pow(g, (q - 1) // (2 * n), q)
        if pow(w, n, q) == q - 1:
            return w
    raise NoNttPrimes(f"no 2n-th root of unity mod {q}")


def _crt(vals: list[int], mods: list[int]) -> int:
    total = 0
    prod = 1
    for m in mods:
        prod *= m
    for v, m in zip(vals, mods):
        mi = prod // m
        total += v * mi * pow(mi, -1, m)
    return total % prod


class NttContext:
    """Negacyclic NTT over Z_M[X]/(X^n + 1) for one (possibly composite)
    modulus whose prime factors are all = 1 (mod 2n).

    Forward/inverse use merged psi-power tables (Cooley-Tukey forward,
    Gentleman-Sande inverse). `eval_exponents` records which power of psi
    each output slot evaluates at, so slot maps and Galois permutations are
    derived from the transform itself instead of assumed.
    """

    def __init__(self, n: int, modulus: int, psi: int):
        self.n = n
        self.modulus = modulus
        self.use_np = modulus < _NP_NTT_LIMIT
        mk = (lambda x: x % modulus) if self.use_np else (lambda x: mpz(x % modulus))
        self.mod = modulus if self.use_np else mpz(modulus)
        br = _bitrev(n)
        psi_inv = pow(psi, -1, modulus)
        pows = [1] * (2 * n)
        for i in range(1, 2 * n):
            pows[i] = pows[i - 1] * psi % modulus
        self.tbl = [mk(pows[br[i]]) for i in range(n)]
        inv_pows = [1] * n
        for i in range(1, n):
            inv_pows[i] = inv_pows[i - 1] * psi_inv % modulus
        self.inv_tbl = [mk(inv_pows[br[i]]) for i in range(n)]
        self.n_inv = mk(pow(n, -1, modulus))
        if self.use_np:
            self.tbl_np = np.asarray([int(x) for x in self.tbl], dtype=np.int64)
            self.inv_tbl_np = np.asarray([int(x) for x in self.inv_tbl], dtype=np.int64)
        # calibrate: where does each slot evaluate? NTT(X) gives psi^{e_i}.
        exp_of_pow = {pows[e]: e for e in range(2 * n)}
        x_ntt = self.fwd([0, 1] + [0] * (n - 2))
        self.eval_exponents = [exp_of_pow[int(v)] for v in x_ntt]
        self.index_of_exponent = {e: i for i, e in enumerate(self.eval_exponents)}

    # -- transforms ---------------------------------------------------------

    def fwd(self, a):
        if self.use_np:
            return self._fwd_np(np.asarray([int(x) for x in a], dtype=np.int64))
        mod = self.mod
        tbl = self.tbl
        a = [mpz(x) for x in a]
        n = self.n
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                j1 = 2 * i * t
                S = tbl[m + i]
                for j in range(j1, j1 + t):
                    jt = j + t
                    V = a[jt] * S % mod
                    U = a[j]
                    a[j] = (U + V) % mod
                    a[jt] = (U - V) % mod
            m <<= 1
        return a

    def inv(self, a):
        if self.use_np:
            return self._inv_np(np.asarray([int(x) for x in a], dtype=np.int64))
        mod = self.mod
        tbl = self.inv_tbl
        a = [mpz(x) for x in a]
        n = self.n
        t = 1
        m = n
        while m > 1:
            j1 = 0
            h = m >> 1
            for i in range(h):
                S = tbl[h + i]
                for j in range(j1, j1 + t):
                    jt = j + t
                    U = a[j]
                    V = a[jt]
                    a[j] = (U + V) % mod
                    a[jt] = (U - V) * S % mod
                j1 += 2 * t
            t <<= 1
            m = h
        ninv = self.n_inv
        return [x * ninv % mod for x in a]

    def _fwd_np(self, a: np.ndarray) -> list[int]:
        mod = self.modulus
        n = self.n
        t = n
        m = 1
        while m < n:
            t >>= 1
            blocks = a.reshape(m, 2 * t)
            U = blocks[:, :t].copy()
            V = blocks[:, t:] * self.tbl_np[m : 2 * m, None] % mod
            blocks[:, :t] = (U + V) % mod
            blocks[:, t:] = (U - V) % mod
            m <<= 1
        return [int(x) for x in a]

    def _inv_np(self, a: np.ndarray) -> list[int]:
        mod = self.modulus
        n = self.n
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            blocks = a.reshape(h, 2 * t)
            U = blocks[:, :t].copy()
            V = blocks[:, t:].copy()
            blocks[:, :t] = (U + V) % mod
            blocks[:, t:] = (U - V) * self.inv_tbl_np[h : 2 * h, None] % mod
            t <<= 1
            m = h
        return [int(x) * int(self.n_inv) % mod for x in a]

    def galois_permutation(self, t: int) -> list[int]:
        """Index permutation realizing X -> X^t on NTT-domain values."""
        two_n = 2 * self.n
        return [self.index_of_exponent[(e * t) % two_n] for e in self.eval_exponents]


@dataclass
class RingElement:
    """Length-n coefficient vector mod the current modulus, with a flag for
    which domain (coefficient or NTT) the values are in."""

    coeffs: list
    is_ntt: bool


def coeff_automorphism(coeffs, t: int, n: int, modulus) -> list:
    """X -> X^t on a coefficient vector mod X^n + 1 (t odd)."""
    out = [0] * n
    two_n = 2 * n
    for i, c in enumerate(coeffs):
        if c:
            j = (i * t) % two_n
            if j >= n:
                out[j - n] = (-c) % modulus
            else:
                out[j] = c % modulus
    return out


@dataclass
class BgvPayload:
    c0: list  # NTT domain, modulus = chain.modulus(ciphertext level)
    c1: list
    noise_bits: float


class _KskPair:
    """Gadget key-switch key: D pairs (b_j, a_j) with
    b_j + a_j*s = p*e_j + 2^(w*j) * s_from (mod Q_L), stored in NTT form.
    Reductions to lower-level moduli are valid pointwise because every
    level's NTT tables come from the same CRT root, and are cached."""

    def __init__(self, pairs: list[tuple[list, list]]):
        self.pairs = pairs
        self._reduced: dict[int, list[tuple[list, list]]] = {}

    def at_level(self, level: int, modulus, digits: int):
        cached = self._reduced.get(level)
        if cached is None:
            cached = [
                ([x % modulus for x in b], [x % modulus for x in a])
                for b, a in self.pairs
            ]
            self._reduced[level] = cached
        return cached[:digits]


@dataclass
class BgvPublic:
    pk_b: list
    pk_a: list


class BgvBackend:
    """BGV evaluation session. One instance owns one parameter set, its
    modulus chain, NTT contexts, and the op counters."""

    backend_id = BACKEND_BGV
    name = "bgv"

    def __init__(
        self,
        params: HeParams,
        seed: int | None = None,
        chain_bits: int = 54,
        ksw_base_bits: int = 16,
        chain_primes: list[int] | None = None,
    ):
        self.params = params
        self.counters = OpCounters()
        self._rng = random.Random(seed)
        self.w = ksw_base_bits
        n, p = params.n, params.p
        primes = chain_primes or find_chain_primes(n, p, params.max_level + 1, chain_bits)
        self.chain = ModulusChain(tuple(sorted(primes, reverse=True)), n, p)
        roots = [_prim_root_2n(q, n) for q in self.chain.primes]
        psi_full = _crt(roots, list(self.chain.primes))
        self.ctx: list[NttContext] = []
        for level in range(params.max_level + 1):
            modulus = self.chain.modulus(level)
            self.ctx.append(NttContext(n, modulus, psi_full % modulus))
        self.ctx_p = NttContext(n, p, _prim_root_2n(p, n))
        # the evaluation order is structural (same code path for every
        # modulus), which is what lets Galois permutations and key-switch
        # key reductions be shared across levels; fail fast if it is not
        orders = {tuple(ctx.eval_exponents) for ctx in self.ctx}
        orders.add(tuple(self.ctx_p.eval_exponents))
        if len(orders) != 1:
            raise AssertionError("NTT evaluation order differs across moduli")
        self._build_slot_map()
        self._galois_perm_cache: dict[int, list[int]] = {}
        self._plain_cache: dict[tuple[bytes, int], list] = {}
        self._digits = [
            -(-self.chain.modulus(l).bit_length() // self.w)
            for l in range(params.max_level + 1)
        ]

    # -- slot map -----------------------------------------------------------

    def _build_slot_map(self):
        n = self.params.n
        two_n = 2 * n
        half = n // 2
        idx = np.zeros((2, half), dtype=np.int64)
        e = 1
        for c in range(half):
            idx[0, c] = self.ctx_p.index_of_exponent[e]
            idx[1, c] = self.ctx_p.index_of_exponent[two_n - e]
            e = (e * 3) % two_n
        self._slot_index = idx

    def slot_encode(self, m: SlotMatrix) -> list[int]:
        """SlotMatrix -> coefficients of the R_p element with those slots."""
        evals = [0] * self.params.n
        for r in range(2):
            for c, i in enumerate(self._slot_index[r]):
                evals[i] = int(m.rows[r][c]) % self.params.p
        return [int(x) for x in self.ctx_p.inv(evals)]

    def slot_decode(self, coeffs) -> SlotMatrix:
        evals = self.ctx_p.fwd([int(x) % self.params.p for x in coeffs])
        half = self.params.slots
        rows = np.zeros((2, half), dtype=np.int64)
        for r in range(2):
            for c in range(half):
                rows[r, c] = int(evals[self._slot_index[r][c]])
        return SlotMatrix(self.params.p, rows)

    # -- sampling -----------------------------------------------------------

    def _sample_ternary(self) -> list[int]:
        return [self._rng.randrange(3) - 1 for _ in range(self.params.n)]

    def _sample_cbd(self) -> list[int]:
        rng = self._rng
        k = _CBD_HALF_WIDTH
        out = []
        for _ in range(self.params.n):
            a = bin(rng.getrandbits(k)).count("1")
            b = bin(rng.getrandbits(k)).count("1")
            out.append(a - b)
        return out

    def _sample_uniform_ntt(self, level: int) -> list:
        modulus = self.chain.modulus(level)
        mk = mpz if not self.ctx[level].use_np else int
        return [mk(self._rng.randrange(modulus)) for _ in range(self.params.n)]

    # -- helpers ------------------------------------------------------------

    def reset_counters(self) -> None:
        self.counters = OpCounters()

    def _threshold_bits(self, level: int) -> float:
        return self.chain.modulus(level).bit_length() - 1

    def _check_noise(self, bits: float, level: int) -> float:
        if bits >= self._threshold_bits(level):
            raise NoiseOverflow(
                f"noise estimate 2^{bits:.1f} crosses the level-{level} threshold"
            )
        return bits

    def _pointwise(self, x, y, level: int, op):
        mod = self.ctx[level].mod
        if op == "mul":
            return [a * b % mod for a, b in zip(x, y)]
        if op == "add":
            return [(a + b) % mod for a, b in zip(x, y)]
        return [(a - b) % mod for a, b in zip(x, y)]

    def _check_plain(self, m: SlotMatrix) -> None:
        if m.p != self.params.p or m.cols != self.params.slots:
            raise BackendMismatch("plaintext does not match backend parameters")

    def _check_ct(self, c: Ciphertext) -> None:
        if c.backend_id != self.backend_id:
            raise BackendMismatch("ciphertext from a different backend")

    def _check_keys(self, c: Ciphertext, keys: KeySet) -> None:
        self._check_ct(c)
        if keys.backend_id != self.backend_id or keys.key_id != c.key_id:
            raise BackendMismatch("key set does not match ciphertext")

    def _plain_ntt(self, m: SlotMatrix, level: int) -> list:
        key = (m.digest(), level)
        cached = self._plain_cache.get(key)
        if cached is None:
            cached = self.ctx[level].fwd(self.slot_encode(m))
            if len(self._plain_cache) > 1024:
                self._plain_cache.pop(next(iter(self._plain_cache)))
            self._plain_cache[key] = cached
        return cached

    # -- key generation -----------------------------------------------------

    def keygen(self, rotation_amounts, col_swap: bool = True) -> KeySet:
        params = self.params
        n = params.n
        amounts = sorted(set(int(r) for r in rotation_amounts))
        for r in amounts:
            if not (0 <= r < params.slots):
                raise ValueError(f"rotation amount {r} outside [0, n/2)")
        L = params.max_level
        ctx = self.ctx[L]
        s = self._sample_ternary()
        s_ntt = ctx.fwd(s)
        pk_a = self._sample_uniform_ntt(L)
        e = self._sample_cbd()
        pe_ntt = ctx.fwd([params.p * x for x in e])
        pk_b = [
            (pe - a * sv) % ctx.mod for pe, a, sv in zip(pe_ntt, pk_a, s_ntt)
        ]

        def make_ksk(s_from_coeffs: list[int]) -> _KskPair:
            target_ntt = ctx.fwd(s_from_coeffs)
            pairs = []
            for j in range(self._digits[L]):
                a_j = self._sample_uniform_ntt(L)
                e_j = self._sample_cbd()
                pej = ctx.fwd([params.p * x for x in e_j])
                shift = mpz(1) << (self.w * j)
                b_j = [
                    (pe - a * sv + shift * tv) % ctx.mod
                    for pe, a, sv, tv in zip(pej, a_j, s_ntt, target_ntt)
                ]
                pairs.append((b_j, a_j))
            return _KskPair(pairs)

        s_sq = self.ctx[L].inv(self._pointwise(s_ntt, s_ntt, L, "mul"))
        relin = make_ksk([int(x) for x in s_sq])
        two_n = 2 * n
        rot_keys = {}
        for r in amounts:
            if r == 0:
                continue
            t = pow(3, r, two_n)
            rot_keys[r] = (t, make_ksk(coeff_automorphism(s, t, n, self.chain.modulus(L))))
        col_key = None
        if col_swap:
            t = two_n - 1
            col_key = (t, make_ksk(coeff_automorphism(s, t, n, self.chain.modulus(L))))

        return KeySet(
            backend_id=self.backend_id,
            params=params,
            key_id=self._rng.getrandbits(128).to_bytes(16, "little"),
            rotation_keys=rot_keys,
            col_swap_key=col_key,
            relin_key=relin,
            public=BgvPublic(pk_b, pk_a),
            secret=s,
        )

    def _secret_ntt(self, keys: KeySet, level: int) -> list:
        cache = getattr(keys, "_s_ntt_cache", None)
        if cache is None:
            cache = {}
            setattr(keys, "_s_ntt_cache", cache)
        if level not in cache:
            cache[level] = self.ctx[level].fwd(keys.secret)
        return cache[level]

    # -- encryption ---------------------------------------------------------

    def _fresh_noise_bits(self) -> float:
        n, p = self.params.n, self.params.p
        return math.log2(p) + math.log2(_CBD_HALF_WIDTH) + math.log2(2 * n + 2)

    def encrypt(self, m: SlotMatrix, keys: KeySet) -> Ciphertext:
        self._check_plain(m)
        if keys.public is None:
            raise BackendMismatch("key set lacks public key material")
        L = self.params.max_level
        ctx = self.ctx[L]
        p = self.params.p
        m_coeffs = self.slot_encode(m)
        u_ntt = ctx.fwd(self._sample_ternary())
        e0 = self._sample_cbd()
        e1 = self._sample_cbd()
        body0 = ctx.fwd([p * x + y for x, y in zip(e0, m_coeffs)])
        body1 = ctx.fwd([p * x for x in e1])
        c0 = [
            (b * u + t) % ctx.mod for b, u, t in zip(keys.public.pk_b, u_ntt, body0)
        ]
        c1 = [
            (a * u + t) % ctx.mod for a, u, t in zip(keys.public.pk_a, u_ntt, body1)
        ]
        payload = BgvPayload(c0, c1, self._fresh_noise_bits())
        return Ciphertext(self.backend_id, keys.key_id, L, payload)

    def decrypt(self, c: Ciphertext, keys: KeySet) -> SlotMatrix:
        self._check_keys(c, keys)
        if keys.secret is None:
            raise BackendMismatch("decryption requires the secret key")
        level = c.level
        ctx = self.ctx[level]
        modulus = self.chain.modulus(level)
        s_ntt = self._secret_ntt(keys, level)
        phase_ntt = [
            (c0 + c1 * sv) % ctx.mod
            for c0, c1, sv in zip(c.payload.c0, c.payload.c1, s_ntt)
        ]
        phase = ctx.inv(phase_ntt)
        half = modulus >> 1
        p = self.params.p
        centered = [int(x) - modulus if int(x) > half else int(x) for x in phase]
        return self.slot_decode([x % p for x in centered])

    # -- level plumbing -----------------------------------------------------

    def _mod_switch_once(self, payload: BgvPayload, level: int) -> BgvPayload:
        """Switch from `level` to `level - 1`: scale by 1/q_level with the
        mod-p congruence preserved."""
        import math

        q = self.chain.level_prime(level)
        src = self.ctx[level]
        dst = self.ctx[level - 1]
        new_modulus = self.chain.modulus(level - 1)
        p = self.params.p
        half_q = q >> 1
        half_p = p >> 1

        def rescale(vec_ntt):
            out = []
            for x in src.inv(vec_ntt):
                x = int(x)
                r = x % q
                if r > half_q:
                    r -= q
                y = (x - r) // q
                d = (x - y) % p
                if d > half_p:
                    d -= p
                out.append((y + d) % new_modulus)
            return dst.fwd(out)

        floor_bits = math.log2(p) + math.log2(self.params.n)
        bits = max(payload.noise_bits - math.log2(q), floor_bits) + 1
        return BgvPayload(rescale(payload.c0), rescale(payload.c1), bits)

    def _at_level(self, c: Ciphertext, level: int) -> Ciphertext:
        while c.level > level:
            payload = self._mod_switch_once(c.payload, c.level)
            c = Ciphertext(self.backend_id, c.key_id, c.level - 1, payload)
        return c

    def _key_switch(self, poly_ntt: list, ksk: _KskPair, level: int):
        """Gadget key switch of a polynomial under s_from into a (d0, d1)
        pair under s. Returns NTT-domain parts and the added noise bits."""
        ctx = self.ctx[level]
        digits = self._digits[level]
        pairs = ksk.at_level(level, ctx.mod, digits)
        coeffs = [int(x) for x in ctx.inv(poly_ntt)]
        mask = (1 << self.w) - 1
        w = self.w
        out0 = [mpz(0)] * self.params.n
        out1 = [mpz(0)] * self.params.n
        for j in range(digits):
            dig = [x & mask for x in coeffs]
            coeffs = [x >> w for x in coeffs]
            if not any(dig):
                continue
            dig_ntt = ctx.fwd(dig)
            b_j, a_j = pairs[j]
            # reduction deferred to the end: sums stay well under D * Q^2
            out0 = [acc + d * b for acc, d, b in zip(out0, dig_ntt, b_j)]
            out1 = [acc + d * a for acc, d, a in zip(out1, dig_ntt, a_j)]
        mod = ctx.mod
        out0 = [x % mod for x in out0]
        out1 = [x % mod for x in out1]
        noise = (
            math.log2(self.params.p)
            + math.log2(digits)
            + self.w
            + math.log2(self.params.n)
            + math.log2(_CBD_HALF_WIDTH)
        )
        return out0, out1, noise

    # -- homomorphic ops ------------------------------------------------------

    def add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_ct(c1)
        self._check_ct(c2)
        if c1.key_id != c2.key_id:
            raise BackendMismatch("ciphertexts under different key sets")
        lvl = min(c1.level, c2.level)
        c1 = self._at_level(c1, lvl)
        c2 = self._at_level(c2, lvl)
        self.counters.adds += 1
        bits = self._check_noise(max(c1.payload.noise_bits, c2.payload.noise_bits) + 1, lvl)
        return Ciphertext(
            self.backend_id,
            c1.key_id,
            lvl,
            BgvPayload(
                self._pointwise(c1.payload.c0, c2.payload.c0, lvl, "add"),
                self._pointwise(c1.payload.c1, c2.payload.c1, lvl, "add"),
                bits,
            ),
        )

    def add_plain(self, c: Ciphertext, m: SlotMatrix) -> Ciphertext:
        self._check_ct(c)
        self._check_plain(m)
        lvl = c.level
        pt = self._plain_ntt(m, lvl)
        self.counters.adds += 1
        bits = self._check_noise(
            max(c.payload.noise_bits, math.log2(self.params.p)) + 1, lvl
        )
        return Ciphertext(
            self.backend_id,
            c.key_id,
            lvl,
            BgvPayload(
                self._pointwise(c.payload.c0, pt, lvl, "add"), list(c.payload.c1), bits
            ),
        )

    def mul(self, c1: Ciphertext, c2: Ciphertext, keys: KeySet) -> Ciphertext:
        self._check_keys(c1, keys)
        self._check_keys(c2, keys)
        lvl = min(c1.level, c2.level)
        if lvl < 1:
            raise LevelExhausted("ciphertext-ciphertext multiply at level 0")
        c1 = self._at_level(c1, lvl)
        c2 = self._at_level(c2, lvl)
        a, b = c1.payload, c2.payload
        d0 = self._pointwise(a.c0, b.c0, lvl, "mul")
        t01 = self._pointwise(a.c0, b.c1, lvl, "mul")
        t10 = self._pointwise(a.c1, b.c0, lvl, "mul")
        d1 = self._pointwise(t01, t10, lvl, "add")
        d2 = self._pointwise(a.c1, b.c1, lvl, "mul")
        ks0, ks1, ks_noise = self._key_switch(d2, keys.relin_key, lvl)
        c0 = self._pointwise(d0, ks0, lvl, "add")
        c1n = self._pointwise(d1, ks1, lvl, "add")
        bits = max(
            a.noise_bits + b.noise_bits + math.log2(self.params.n), ks_noise
        ) + 1
        self._check_noise(bits, lvl)
        self.counters.ct_mults += 1
        self.counters.keyswitches += 1
        out = BgvPayload(c0, c1n, bits)
        out = self._mod_switch_once(out, lvl)
        return Ciphertext(self.backend_id, keys.key_id, lvl - 1, out)

    def mul_plain(self, c: Ciphertext, m: SlotMatrix) -> Ciphertext:
        self._check_ct(c)
        self._check_plain(m)
        lvl = c.level
        if lvl < 1:
            raise LevelExhausted("plaintext multiply at level 0")
        pt = self._plain_ntt(m, lvl)
        bits = c.payload.noise_bits + math.log2(self.params.p) + math.log2(self.params.n)
        self._check_noise(bits, lvl)
        self.counters.pt_mults += 1
        out = BgvPayload(
            self._pointwise(c.payload.c0, pt, lvl, "mul"),
            self._pointwise(c.payload.c1, pt, lvl, "mul"),
            bits,
        )
        out = self._mod_switch_once(out, lvl)
        return Ciphertext(self.backend_id, c.key_id, lvl - 1, out)

    def _apply_galois(self, c: Ciphertext, t: int, ksk: _KskPair) -> Ciphertext:
        lvl = c.level
        perm = self._galois_perm_cache.get(t)
        if perm is None:
            perm = self.ctx[lvl].galois_permutation(t)
            self._galois_perm_cache[t] = perm
        s0 = [c.payload.c0[i] for i in perm]
        s1 = [c.payload.c1[i] for i in perm]
        ks0, ks1, ks_noise = self._key_switch(s1, ksk, lvl)
        c0 = self._pointwise(s0, ks0, lvl, "add")
        bits = self._check_noise(max(c.payload.noise_bits, ks_noise) + 1, lvl)
        self.counters.keyswitches += 1
        return Ciphertext(self.backend_id, c.key_id, lvl, BgvPayload(c0, ks1, bits))

    def rot_row(self, c: Ciphertext, r: int, keys: KeySet) -> Ciphertext:
        self._check_keys(c, keys)
        r = r % self.params.slots
        if r == 0:
            return Ciphertext(
                self.backend_id,
                c.key_id,
                c.level,
                BgvPayload(list(c.payload.c0), list(c.payload.c1), c.payload.noise_bits),
            )
        entry = keys.rotation_keys.get(r)
        if entry is None:
            raise MissingRotationKey(f"rotation by {r} was not declared at keygen")
        t, ksk = entry
        return self._apply_galois(c, t, ksk)

    def rot_col(self, c: Ciphertext, keys: KeySet) -> Ciphertext:
        self._check_keys(c, keys)
        if keys.col_swap_key is None:
            raise MissingRotationKey("column-swap key was not declared at keygen")
        t, ksk = keys.col_swap_key
        return self._apply_galois(c, t, ksk)

    # -- serialization --------------------------------------------------------

    def _words(self, level: int) -> int:
        return -(-self.chain.modulus(level).bit_length() // 64)

    def serialize_ciphertext(self, c: Ciphertext) -> bytes:
        self._check_ct(c)
        level = c.level
        ctx = self.ctx[level]
        W = self._words(level)
        head = struct.pack(
            "<BBIQB", _OBJ_KIND_CIPHERTEXT, level, self.params.n, self.params.p,
            self.params.max_level,
        )
        parts = [head, c.key_id, struct.pack("<d", c.payload.noise_bits)]
        for comp_ntt in (c.payload.c0, c.payload.c1):
            for x in ctx.inv(comp_ntt):
                parts.append(int(x).to_bytes(8 * W, "little"))
        return write_envelope(self.backend_id, b"".join(parts))

    def deserialize_ciphertext(self, data: bytes) -> Ciphertext:
        backend_id, _, payload = read_envelope(data)
        if backend_id != self.backend_id:
            raise BackendMismatch("blob was produced by a different backend")
        kind, level, n, p, max_level = struct.unpack("<BBIQB", payload[:15])
        if kind != _OBJ_KIND_CIPHERTEXT:
            raise ValueError("blob is not a ciphertext")
        if (n, p, max_level) != (self.params.n, self.params.p, self.params.max_level):
            raise BackendMismatch("ciphertext parameters do not match backend")
        key_id = payload[15:31]
        (noise_bits,) = struct.unpack("<d", payload[31:39])
        W = self._words(level)
        off = 39
        comps = []
        for _ in range(2):
            coeffs = []
            for _ in range(n):
                coeffs.append(int.from_bytes(payload[off : off + 8 * W], "little"))
                off += 8 * W
            comps.append(self.ctx[level].fwd(coeffs))
        return Ciphertext(
            self.backend_id, key_id, level, BgvPayload(comps[0], comps[1], noise_bits)
        )

    def _write_ring(self, vec_ntt, level: int) -> bytes:
        W = self._words(level)
        return b"".join(int(x).to_bytes(8 * W, "little") for x in vec_ntt)

    def _read_ring(self, data: bytes, off: int, level: int) -> tuple[list, int]:
        W = self._words(level)
        n = self.params.n
        out = []
        for _ in range(n):
            out.append(mpz(int.from_bytes(data[off : off + 8 * W], "little")))
            off += 8 * W
        return out, off

    def serialize_keyset(self, keys: KeySet, include_secret: bool = False) -> bytes:
        L = self.params.max_level
        head = struct.pack(
            "<BIQB", _OBJ_KIND_KEYSET, self.params.n, self.params.p, self.params.max_level
        )
        parts = [head, struct.pack("<B", len(self.chain.primes))]
        for q in self.chain.primes:
            parts.append(struct.pack("<Q", q))
        parts.append(keys.key_id)
        secret = keys.secret if include_secret else None
        parts.append(struct.pack("<B", 1 if secret is not None else 0))
        if secret is not None:
            parts.append(bytes((x + 1) for x in secret))
        parts.append(self._write_ring(keys.public.pk_b, L))
        parts.append(self._write_ring(keys.public.pk_a, L))

        def dump_ksk(ksk: _KskPair) -> bytes:
            chunks = [struct.pack("<B", len(ksk.pairs))]
            for b, a in ksk.pairs:
                chunks.append(self._write_ring(b, L))
                chunks.append(self._write_ring(a, L))
            return b"".join(chunks)

        parts.append(dump_ksk(keys.relin_key))
        parts.append(struct.pack("<B", 1 if keys.col_swap_key is not None else 0))
        if keys.col_swap_key is not None:
            t, ksk = keys.col_swap_key
            parts.append(struct.pack("<I", t))
            parts.append(dump_ksk(ksk))
        parts.append(struct.pack("<I", len(keys.rotation_keys)))
        for r in sorted(keys.rotation_keys):
            t, ksk = keys.rotation_keys[r]
            parts.append(struct.pack("<II", r, t))
            parts.append(dump_ksk(ksk))
        return write_envelope(self.backend_id, b"".join(parts))

    def deserialize_keyset(self, data: bytes) -> KeySet:
        backend_id, _, payload = read_envelope(data)
        if backend_id != self.backend_id:
            raise BackendMismatch("blob was produced by a different backend")
        kind, n, p, max_level = struct.unpack("<BIQB", payload[:14])
        if kind != _OBJ_KIND_KEYSET:
            raise ValueError("blob is not a key set")
        if (n, p, max_level) != (self.params.n, self.params.p, self.params.max_level):
            raise BackendMismatch("key set parameters do not match backend")
        off = 14
        (nprimes,) = struct.unpack("<B", payload[off : off + 1])
        off += 1
        primes = []
        for _ in range(nprimes):
            primes.append(struct.unpack("<Q", payload[off : off + 8])[0])
            off += 8
        if tuple(primes) != self.chain.primes:
            raise BackendMismatch("key set was generated under a different chain")
        key_id = payload[off : off + 16]
        off += 16
        (has_secret,) = struct.unpack("<B", payload[off : off + 1])
        off += 1
        secret = None
        if has_secret:
            secret = [b - 1 for b in payload[off : off + n]]
            off += n
        L = self.params.max_level
        pk_b, off = self._read_ring(payload, off, L)
        pk_a, off = self._read_ring(payload, off, L)

        def load_ksk(off: int) -> tuple[_KskPair, int]:
            (cnt,) = struct.unpack("<B", payload[off : off + 1])
            off += 1
            pairs = []
            for _ in range(cnt):
                b, off = self._read_ring(payload, off, L)
                a, off = self._read_ring(payload, off, L)
                pairs.append((b, a))
            return _KskPair(pairs), off

        relin, off = load_ksk(off)
        (has_col,) = struct.unpack("<B", payload[off : off + 1])
        off += 1
        col_key = None
        if has_col:
            (t,) = struct.unpack("<I", payload[off : off + 4])
            off += 4
            ksk, off = load_ksk(off)
            col_key = (t, ksk)
        (nrot,) = struct.unpack("<I", payload[off : off + 4])
        off += 4
        rot_keys = {}
        for _ in range(nrot):
            r, t = struct.unpack("<II", payload[off : off + 8])
            off += 8
            ksk, off = load_ksk(off)
            rot_keys[r] = (t, ksk)
        return KeySet(
            backend_id=self.backend_id,
            params=self.params,
            key_id=key_id,
            rotation_keys=rot_keys,
            col_swap_key=col_key,
            relin_key=relin,
            public=BgvPublic(pk_b, pk_a),
            secret=secret,
        )
