"""Exact arithmetic over Z_p and Z_p[X]: the cleartext decompression math.

Everything in this module is pure and deterministic: power-sum to
coefficient recovery via Newton's identity, root finding over Z_p
(Cantor-Zassenhaus specialized to inputs that split into distinct linear
factors), and solving the Vandermonde column subsystem by Gaussian
elimination. All arithmetic is exact for primes up to 63 bits; small
primes take vectorized int64 fast paths, large primes fall back to plain
Python integers.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2
import numpy as np


class ZeroInverse(ZeroDivisionError):
    """Inverse of 0 mod p requested."""


class ModulusTooSmall(ValueError):
    """The prime modulus is too small for the requested operation."""


class NotFullySplit(ValueError):
    """The root polynomial does not split into distinct linear factors with
    roots inside the expected index range. Decompression is fail-loud: this
    signals sparsity overflow or a corrupted payload, never a silent result.
    """


class SingularSystem(ValueError):
    """Gaussian elimination found rank < number of unknowns."""


class InconsistentSystem(ValueError):
    """The right-hand side is not in the column span, or the solution
    contradicts the claimed support."""


# int64 safety margins for the numpy fast paths:
#   convolution sums:  len * p^2 < 2^63  (len <= 2^11 in all compression uses)
#   row operations:    p^2 + p < 2^63
_NP_POLY_LIMIT = 1 << 26
_NP_GAUSS_LIMIT = 1 << 31
_TINY_FIELD_SCAN = 64


class PrimeField:
    """Arithmetic context for Z_p with an element-operation counter.

    `ops` tallies Z_p multiplications/additions/inversion work performed
    through this context; vectorized kernels add their element counts.
    The counter backs the decompression cost assertions, so updates are
    deterministic functions of the inputs.
    """

    __slots__ = ("p", "ops", "_np_poly", "_np_gauss")

    def __init__(self, p: int, check: bool = True):
        p = int(p)
        if check and not gmpy2.is_prime(p):
            raise ValueError(f"modulus {p} is not prime")
        if p.bit_length() > 63:
            raise ValueError("primes beyond 63 bits are out of scope")
        self.p = p
        self.ops = 0
        self._np_poly = p < _NP_POLY_LIMIT
        self._np_gauss = p < _NP_GAUSS_LIMIT

    def tick(self, k: int = 1) -> None:
        self.ops += k

    def add(self, a: int, b: int) -> int:
        self.ops += 1
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        self.ops += 1
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        self.ops += 1
        return (a * b) % self.p

    def pow(self, base: int, exp: int) -> int:
        """base^exp mod p by square-and-multiply (counted as such)."""
        if exp < 0:
            raise ValueError("negative exponent")
        if exp > 1:
            self.ops += exp.bit_length() - 1 + bin(exp).count("1") - 1
        return pow(base % self.p, exp, self.p)

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise ZeroInverse("0 has no inverse mod p")
        return self.pow(a, self.p - 2)


@dataclass(frozen=True)
class ZpPoly:
    """Polynomial over Z_p, coefficients ascending, trailing zeros trimmed.

    The zero polynomial is the empty coefficient tuple.
    """

    coeffs: tuple[int, ...]

    @staticmethod
    def make(coeffs: Iterable[int], p: int) -> "ZpPoly":
        c = [int(x) % p for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        return ZpPoly(tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def evaluate(self, x: int, field: PrimeField) -> int:
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * x + c) % field.p
        field.tick(2 * len(self.coeffs))
        return acc


@dataclass(frozen=True)
class SparseVector:
    """Length-N vector over Z_p stored as sorted (index, value) pairs.

    Indices are 1-based, strictly increasing, values nonzero.
    """

    length: int
    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        last = 0
        for i, v in self.entries:
            if not (1 <= i <= self.length):
                raise ValueError(f"index {i} outside [1, {self.length}]")
            if i <= last:
                raise ValueError("indices must be strictly increasing")
            if v == 0:
                raise ValueError("stored values must be nonzero")
            last = i

    @staticmethod
    def from_pairs(length: int, pairs: Iterable[tuple[int, int]]) -> "SparseVector":
        return SparseVector(length, tuple(sorted((int(i), int(v)) for i, v in pairs)))

    @staticmethod
    def from_dense(values: Sequence[int]) -> "SparseVector":
        entries = tuple((i + 1, int(v)) for i, v in enumerate(values) if v != 0)
        return SparseVector(len(values), entries)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.int64)
        for i, v in self.entries:
            out[i - 1] = v
        return out

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    @property
    def nnz(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# polynomial kernels (lists of reduced ints; numpy fast path for small p)
# ---------------------------------------------------------------------------


def _poly_trim(c: list[int]) -> list[int]:
    while c and c[-1] == 0:
        c.pop()
    return c


def poly_mul(a: Sequence[int], b: Sequence[int], field: PrimeField) -> list[int]:
    if not a or not b:
        return []
    field.tick(2 * len(a) * len(b))
    if field._np_poly:
        out = np.convolve(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        return _poly_trim([int(x) for x in out % field.p])
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] = (out[i + j] + ai * bj) % field.p
    return _poly_trim(out)


def poly_sub(a: Sequence[int], b: Sequence[int], field: PrimeField) -> list[int]:
    n = max(len(a), len(b))
    field.tick(n)
    out = [0] * n
    for i in range(n):
        out[i] = ((a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)) % field.p
    return _poly_trim(out)


def poly_mod(a: Sequence[int], m: Sequence[int], field: PrimeField) -> list[int]:
    """Remainder of a modulo m (m nonzero)."""
    if not m:
        raise ZeroDivisionError("polynomial modulus is zero")
    p = field.p
    lead_inv = field.inv(m[-1])
    dm = len(m) - 1
    if field._np_poly:
        r = np.asarray(a, dtype=np.int64) % p
        mv = np.asarray(m, dtype=np.int64)
        for pos in range(len(r) - 1, dm - 1, -1):
            c = int(r[pos])
            if c:
                q = c * lead_inv % p
                r[pos - dm : pos + 1] = (r[pos - dm : pos + 1] - q * mv) % p
                field.tick(2 * (dm + 1))
        return _poly_trim([int(x) for x in r[:dm]])
    r = [x % p for x in a]
    for pos in range(len(r) - 1, dm - 1, -1):
        c = r[pos]
        if c:
            q = c * lead_inv % p
            for j in range(dm + 1):
                r[pos - dm + j] = (r[pos - dm + j] - q * m[j]) % p
            field.tick(2 * (dm + 1))
    return _poly_trim(r[:dm])


def poly_monic(a: Sequence[int], field: PrimeField) -> list[int]:
    if not a:
        return []
    if a[-1] == 1:
        return list(a)
    inv = field.inv(a[-1])
    field.tick(len(a))
    return [x * inv % field.p for x in a]


def poly_gcd_monic(a: Sequence[int], b: Sequence[int], field: PrimeField) -> list[int]:
    a, b = list(a), list(b)
    while b:
        a, b = b, poly_mod(a, b, field)
    return poly_monic(a, field)


def poly_pow_mod(base: Sequence[int], exp: int, m: Sequence[int], field: PrimeField) -> list[int]:
    """base^exp modulo the polynomial m, by square-and-multiply."""
    result = [1]
    acc = poly_mod(base, m, field)
    e = exp
    while e:
        if e & 1:
            result = poly_mod(poly_mul(result, acc, field), m, field)
        e >>= 1
        if e:
            acc = poly_mod(poly_mul(acc, acc, field), m, field)
    return result


def poly_eval_many(coeffs: Sequence[int], points: np.ndarray, field: PrimeField) -> np.ndarray:
    """Horner evaluation of one polynomial at many points (int64-safe)."""
    p = field.p
    if not field._np_gauss:
        return np.array(
            [ZpPoly(tuple(coeffs)).evaluate(int(x), field) for x in points], dtype=object
        )
    acc = np.zeros(len(points), dtype=np.int64)
    pts = points.astype(np.int64) % p
    for c in reversed(coeffs):
        acc = (acc * pts + c) % p
    field.tick(2 * len(coeffs) * len(points))
    return acc


# ---------------------------------------------------------------------------
# power-sum recovery
# ---------------------------------------------------------------------------


def newton_coeffs(w: Sequence[int], field: PrimeField) -> ZpPoly:
    """Monic degree-s polynomial whose roots (with multiplicity, 0-padded)
    have power sums w = (w_1, ..., w_s).

    Uses the recursion k*e_k = sum_{i=1..k} (-1)^(i-1) e_{k-i} w_i, then
    assembles f(X) = sum_k (-1)^k e_k X^(s-k).
    """
    s = len(w)
    if s < 1:
        raise ValueError("need at least one power sum")
    p = field.p
    if p <= s:
        raise ModulusTooSmall(f"p={p} <= s={s}: k^-1 does not exist for all k <= s")
    w = [int(x) % p for x in w]
    a = [0] * (s + 1)
    a[0] = 1
    for k in range(1, s + 1):
        acc = 0
        for i in range(1, k + 1):
            t = a[k - i] * w[i - 1] % p
            acc = (acc + t) if i % 2 == 1 else (acc - t)
        field.tick(2 * k)
        a[k] = acc % p * field.inv(k) % p
        field.tick(1)
    coeffs = [0] * (s + 1)
    for k in range(s + 1):
        coeffs[s - k] = a[k] % p if k % 2 == 0 else (-a[k]) % p
    return ZpPoly(tuple(coeffs))


def strip_zero_roots(f: ZpPoly) -> ZpPoly:
    """Divide out every X factor; result has nonzero constant term (or is
    the constant 1 when f was a pure power of X)."""
    c = list(f.coeffs)
    while len(c) > 1 and c[0] == 0:
        c.pop(0)
    return ZpPoly(tuple(c))


def _cz_split_linear(h: list[int], field: PrimeField, rng: random.Random) -> list[int]:
    """Roots of monic h, which is promised to be a product of distinct
    linear factors. Recursive random splitting with gcd(h, (X+a)^((p-1)/2) - 1).
    """
    p = field.p
    roots: list[int] = []
    stack = [h]
    while stack:
        cur = stack.pop()
        deg = len(cur) - 1
        if deg == 0:
            continue
        if deg == 1:
            roots.append((-cur[0]) % p)
            continue
        half = (p - 1) // 2
        for _ in range(200):
            shift = rng.randrange(p)
            t = poly_pow_mod([shift, 1], half, cur, field)
            t = poly_sub(t, [1], field)
            d = poly_gcd_monic(t, cur, field)
            if 0 < len(d) - 1 < deg:
                stack.append(d)
                stack.append(poly_monic(poly_mod_exact_div(cur, d, field), field))
                break
        else:  # pragma: no cover - probability ~2^-200
            raise NotFullySplit("random splitting failed to converge")
    return roots


def poly_mod_exact_div(a: Sequence[int], b: Sequence[int], field: PrimeField) -> list[int]:
    """Quotient a/b when b divides a exactly."""
    p = field.p
    lead_inv = field.inv(b[-1])
    db = len(b) - 1
    r = [x % p for x in a]
    q = [0] * (len(a) - db)
    for pos in range(len(r) - 1, db - 1, -1):
        c = r[pos]
        if c:
            qc = c * lead_inv % p
            q[pos - db] = qc
            for j in range(db + 1):
                r[pos - db + j] = (r[pos - db + j] - qc * b[j]) % p
            field.tick(2 * (db + 1))
    if any(r):
        raise ValueError("division was not exact")
    return _poly_trim(q)


def find_roots(g: ZpPoly, field: PrimeField, range_hint: int, seed: int = 0) -> tuple[int, ...]:
    """All roots of monic g, required to lie in [1, range_hint].

    Production path is Cantor-Zassenhaus: gcd with X^p - X isolates the
    part that splits into distinct linear factors over Z_p; if that is not
    all of g, or any root falls outside the range, the input did not come
    from an honest index set and NotFullySplit is raised.
    """
    if g.is_zero:
        raise ValueError("zero polynomial")
    deg = g.degree
    if deg == 0:
        return ()
    p = field.p
    gl = poly_monic(list(g.coeffs), field)
    if p <= _TINY_FIELD_SCAN:
        # CZ's quadratic-residue splitter degenerates for very small p;
        # scanning the whole field is exact and cheaper there.
        pts = np.arange(1, p, dtype=np.int64)
        vals = poly_eval_many(gl, pts, field)
        roots = [int(x) for x in pts[np.asarray(vals) == 0]]
    else:
        xp = poly_pow_mod([0, 1], p, gl, field)
        split_part = poly_gcd_monic(poly_sub(xp, [0, 1], field), gl, field)
        if len(split_part) - 1 != deg:
            raise NotFullySplit(
                f"degree {deg} polynomial has only a degree {len(split_part) - 1} "
                "split-linear part"
            )
        roots = _cz_split_linear(split_part, field, random.Random(seed))
    if len(roots) != deg:
        raise NotFullySplit(f"found {len(roots)} distinct roots, expected {deg}")
    bad = [r for r in roots if not (1 <= r <= range_hint)]
    if bad:
        raise NotFullySplit(f"roots {sorted(bad)} outside [1, {range_hint}]")
    return tuple(sorted(roots))


def reconst_idx(w: Sequence[int], field: PrimeField, length: int, seed: int = 0) -> tuple[int, ...]:
    """Index set of the s-sparse index vector whose power sums are w."""
    f = newton_coeffs(w, field)
    g = strip_zero_roots(f)
    return find_roots(g, field, length, seed=seed)


# ---------------------------------------------------------------------------
# Vandermonde system
# ---------------------------------------------------------------------------


def vandermonde_entry(j: int, i: int, field: PrimeField) -> int:
    """Entry (row j, column i) of the power-sum matrix: i^j mod p."""
    if j < 1 or i < 1:
        raise ValueError("rows and columns are 1-based")
    return field.pow(i, j)


def solve_vandermonde_sub(
    e: Sequence[int],
    indices: Sequence[int],
    field: PrimeField,
    length: int | None = None,
) -> SparseVector:
    """Solve the column-restricted system C_hat x = e for x.

    C_hat stacks columns {i^j : j=1..s} of the power-sum matrix for the
    given indices. Returns the solution as a SparseVector supported on
    those indices. Raises SingularSystem when the columns are dependent
    and InconsistentSystem when e is not in their span (or the solution
    contradicts the claimed support).
    """
    p = field.p
    s = len(e)
    idx = [int(i) for i in indices]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("indices must be strictly increasing")
    ell = len(idx)
    n_out = length if length is not None else (max(idx) if idx else 0)
    if ell > s:
        raise ValueError(f"more unknowns ({ell}) than equations ({s})")
    e = [int(x) % p for x in e]
    if ell == 0:
        if any(e):
            raise InconsistentSystem("nonzero right-hand side with empty support")
        return SparseVector(n_out, ())

    if field._np_gauss:
        aug = np.zeros((s, ell + 1), dtype=np.int64)
        col = np.asarray(idx, dtype=np.int64) % p
        row = col.copy()
        for j in range(s):
            aug[j, :ell] = row
            row = row * col % p
        field.tick(s * ell)
        aug[:, ell] = np.asarray(e, dtype=np.int64)
        x = _gauss_np(aug, ell, field)
    else:
        aug = [[field.pow(i, j + 1) for i in idx] + [e[j]] for j in range(s)]
        x = _gauss_py(aug, ell, field)

    entries = []
    for i, v in zip(idx, x):
        if v == 0:
            raise InconsistentSystem(f"claimed support index {i} solved to zero")
        entries.append((i, int(v)))
    return SparseVector(n_out, tuple(entries))


def _gauss_np(aug: np.ndarray, ell: int, field: PrimeField) -> list[int]:
    p = field.p
    rows = aug.shape[0]
    width = aug.shape[1]
    for c in range(ell):
        piv = None
        for r in range(c, rows):
            if aug[r, c] % p:
                piv = r
                break
        if piv is None:
            raise SingularSystem(f"rank deficiency at column {c}")
        if piv != c:
            aug[[c, piv]] = aug[[piv, c]]
        inv = field.inv(int(aug[c, c]))
        aug[c] = aug[c] * inv % p
        field.tick(width)
        mask = np.ones(rows, dtype=bool)
        mask[c] = False
        factors = aug[mask, c].copy()
        aug[mask] = (aug[mask] - factors[:, None] * aug[c][None, :]) % p
        field.tick(2 * (rows - 1) * width)
    if rows > ell and np.any(aug[ell:, ell] % p):
        raise InconsistentSystem("redundant equations disagree with the solution")
    return [int(aug[c, ell]) for c in range(ell)]


def _gauss_py(aug: list[list[int]], ell: int, field: PrimeField) -> list[int]:
    p = field.p
    rows = len(aug)
    width = len(aug[0])
    for c in range(ell):
        piv = next((r for r in range(c, rows) if aug[r][c] % p), None)
        if piv is None:
            raise SingularSystem(f"rank deficiency at column {c}")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = field.inv(aug[c][c])
        aug[c] = [v * inv % p for v in aug[c]]
        field.tick(width)
        for r in range(rows):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [(a - f * b) % p for a, b in zip(aug[r], aug[c])]
                field.tick(2 * width)
    if any(aug[r][ell] % p for r in range(ell, rows)):
        raise InconsistentSystem("redundant equations disagree with the solution")
    return [aug[c][ell] for c in range(ell)]


# ---------------------------------------------------------------------------
# brute-force oracles (kept independent of the production paths above)
# ---------------------------------------------------------------------------


def elementary_symmetric_oracle(values: Sequence[int], k: int, field: PrimeField) -> int:
    """e_k of a multiset by summing all k-subset products. Test oracle."""
    if k < 0 or k > len(values):
        raise ValueError("need 0 <= k <= n")
    if k == 0:
        return 1
    total = 0
    for combo in itertools.combinations(values, k):
        prod = 1
        for x in combo:
            prod = prod * x % field.p
        total = (total + prod) % field.p
    return total


def power_sums(values: Sequence[int], s: int, field: PrimeField) -> list[int]:
    """(p_1, ..., p_s) of a multiset: p_j = sum x^j."""
    return [sum(field.pow(x, j) for x in values) % field.p for j in range(1, s + 1)]


def vandermonde_matvec(vec: SparseVector, s: int, field: PrimeField) -> list[int]:
    """Naive C . d for an s-row power-sum matrix: the compression oracle."""
    out = [0] * s
    for i, v in vec.entries:
        powv = 1
        for j in range(s):
            powv = powv * i % field.p
            out[j] = (out[j] + powv * v) % field.p
    return out


def expand_roots_oracle(roots: Sequence[int], field: PrimeField) -> ZpPoly:
    """Product of (X - r) over the multiset, by direct expansion. Test oracle."""
    coeffs = [1]
    for r in roots:
        coeffs = poly_mul(coeffs, [(-r) % field.p, 1], field)
    return ZpPoly(tuple(coeffs))
