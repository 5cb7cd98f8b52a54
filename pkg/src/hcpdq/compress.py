"""Homomorphic compression of sparse vectors.

A length-N s-sparse vector d is compressed to the 2s values (w, e) where
w = C.v holds the power sums of the support (v the 0/1 index vector of d)
and e = C.d holds the value-weighted power sums; C is the s x N matrix of
powers C[j][i] = i^j. Decompression recovers the support from w via
Newton's identity plus root finding, then solves the column-restricted
Vandermonde system for the values.

The encrypted evaluation is a baby-step/giant-step matrix-vector product
over generalized diagonals, evaluated on both slot rows at once: the packed
input carries v in row 0 and d in row 1, the diagonal plaintexts carry the
matrix in both rows, and one pass produces w and e together in a single
output ciphertext. Wide matrices (N > n/2) are split into width-n/2 blocks
whose partial products are summed before a single final rotate-and-sum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .heiface import Ciphertext, HeParams, KeySet, SlotMatrix
from .zpcore import (
    PrimeField,
    SparseVector,
    reconst_idx,
    solve_vandermonde_sub,
)

LAYOUT_VERSION = 1

_NP_TABLE_LIMIT = 1 << 31


@dataclass(frozen=True)
class CompressionParams:
    """Vector length, sparsity bound, and the HE parameters used."""

    N: int
    s: int
    he: HeParams

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.s < 1:
            raise ValueError("s must be positive")
        if self.he.p <= self.N:
            raise ValueError(f"p={self.he.p} must exceed N={self.N}")
        if 2 * self.s > self.he.n:
            raise ValueError(
                f"2s={2 * self.s} must fit the {self.he.n} slots of one ciphertext"
            )

    @property
    def block_width(self) -> int:
        return self.he.slots

    @property
    def num_blocks(self) -> int:
        return -(-self.N // self.block_width)

    @property
    def num_ciphertexts(self) -> int:
        return -(-self.num_blocks // 2)

    @property
    def s_pad(self) -> int:
        return 1 << (self.s - 1).bit_length()


def bsgs_shape(s: int) -> tuple[int, int]:
    """(baby, giant) counts: baby ~ sqrt(2s) rounded to the nearest power of
    two dividing the padded width (ties toward fewer baby steps, since baby
    rotations repeat per block while giant rotations run once)."""
    s_pad = 1 << (s - 1).bit_length()
    log_target = ((2 * s_pad).bit_length() - 1) / 2  # log2(sqrt(2 * s_pad))
    baby = 1 << int(log_target)
    baby = min(max(baby, 1), s_pad)
    return baby, s_pad // baby


def plan_rotation_amounts(s: int, n: int) -> tuple[list[int], bool]:
    """Row-rotation amounts (and the col-swap requirement) the compression
    circuit needs, so keygen can declare exactly these."""
    m = n // 2
    s_pad = 1 << (s - 1).bit_length()
    baby, giant = bsgs_shape(s)
    amounts = set(range(1, baby))
    amounts.update((g * baby) % m for g in range(1, giant))
    step = s_pad
    while step < m:
        amounts.add(step)
        step <<= 1
    amounts.discard(0)
    return sorted(amounts), True


class VandermondeTable:
    """The s x N matrix C[j][i] = i^j (optionally column-scaled by a
    cleartext database), materialized lazily in width-n/2 blocks."""

    def __init__(self, params: CompressionParams, db_values: Sequence[int] | None = None):
        self.params = params
        p = params.he.p
        self._scale = None
        if db_values is not None:
            if len(db_values) != params.N:
                raise ValueError("database length must equal N")
            self._scale = np.asarray(
                [int(v) % p for v in db_values],
                dtype=np.int64 if p < _NP_TABLE_LIMIT else object,
            )
        self._blocks: dict[int, np.ndarray] = {}

    def block(self, k: int) -> np.ndarray:
        """Rows 1..s of the powers of columns [k*m+1, (k+1)*m], zeros past N."""
        if k in self._blocks:
            return self._blocks[k]
        prm = self.params
        p = prm.he.p
        m = prm.block_width
        dtype = np.int64 if p < _NP_TABLE_LIMIT else object
        cols = np.arange(k * m + 1, (k + 1) * m + 1, dtype=np.int64)
        valid = cols <= prm.N
        base = np.where(valid, cols % p, 0).astype(dtype)
        table = np.zeros((prm.s, m), dtype=dtype)
        row = base.copy()
        for j in range(prm.s):
            table[j] = row
            row = row * base % p
        if self._scale is not None:
            scale = np.zeros(m, dtype=dtype)
            scale[valid] = self._scale[k * m : k * m + int(valid.sum())]
            table = table * scale[None, :] % p
        self._blocks[k] = table
        return table

    def dense(self) -> np.ndarray:
        """Full s x N matrix; intended for small parameters and tests."""
        prm = self.params
        blocks = [self.block(k) for k in range(prm.num_blocks)]
        return np.concatenate(blocks, axis=1)[:, : prm.N]


def build_vandermonde(params: CompressionParams) -> VandermondeTable:
    return VandermondeTable(params)


def precompute_masked_matrix(db_values: Sequence[int], params: CompressionParams) -> VandermondeTable:
    """D = C . diag(DB): lets comp run [C; D].v on the index vector alone,
    skipping the masking multiplication entirely."""
    return VandermondeTable(params, db_values=db_values)


@dataclass
class BsgsPlan:
    """Precomputed diagonals and rotation schedule for one matrix shape.

    mode "packed": one input per block, row 0 and row 1 carry the two
    vectors ([v, d] layout); the top/bottom tables supply each row's matrix.
    mode "rows": inputs in the standard vector layout, each ciphertext
    evaluating two consecutive blocks (one per row) against the same
    matrix; the row-partial results are merged with one column swap.
    """

    params: CompressionParams
    mode: str
    baby: int
    giant: int
    fold_amounts: tuple[int, ...]
    diagonals: list[list[SlotMatrix | None]]  # [input][g * baby + b]
    output_mask: SlotMatrix
    rotation_amounts: tuple[int, ...]
    needs_col_swap: bool

    @property
    def num_inputs(self) -> int:
        return len(self.diagonals)


def _diag_vector(table: np.ndarray, g: int, b: int, baby: int, s_pad: int, m: int):
    """Generalized diagonal of the padded block matrix, pre-rotated for the
    giant step: entry[pos] = M[(pos - g*baby) % s_pad][(pos + b) % m]."""
    pos = np.arange(m)
    rows = (pos - g * baby) % s_pad
    cols = (pos + b) % m
    live = rows < table.shape[0]
    out = np.zeros(m, dtype=table.dtype)
    out[live] = table[rows[live], cols[live]]
    return out


def build_plan(
    params: CompressionParams,
    mode: str = "packed",
    masked: VandermondeTable | None = None,
) -> BsgsPlan:
    if mode not in ("packed", "rows"):
        raise ValueError(f"unknown plan mode {mode!r}")
    he = params.he
    p = he.p
    m = params.block_width
    s_pad = params.s_pad
    baby, giant = bsgs_shape(params.s)
    table_c = VandermondeTable(params)
    table_d = masked if masked is not None else table_c

    def lane_tables(t: int) -> tuple[np.ndarray | None, np.ndarray | None]:
        if mode == "packed":
            return table_c.block(t), table_d.block(t)
        top = table_c.block(2 * t) if 2 * t < params.num_blocks else None
        bot = table_c.block(2 * t + 1) if 2 * t + 1 < params.num_blocks else None
        return top, bot

    num_inputs = params.num_blocks if mode == "packed" else params.num_ciphertexts
    diagonals: list[list[SlotMatrix | None]] = []
    for t in range(num_inputs):
        top, bot = lane_tables(t)
        per_input: list[SlotMatrix | None] = []
        for g in range(giant):
            for b in range(baby):
                zero = np.zeros(m, dtype=np.int64)
                r0 = _diag_vector(top, g, b, baby, s_pad, m) if top is not None else zero
                r1 = _diag_vector(bot, g, b, baby, s_pad, m) if bot is not None else zero
                if not np.any(r0) and not np.any(r1):
                    per_input.append(None)
                else:
                    per_input.append(SlotMatrix.from_rows(r0, r1, p))
        diagonals.append(per_input)

    fold = []
    step = s_pad
    while step < m:
        fold.append(step)
        step <<= 1

    mask_row0 = [1] * params.s + [0] * (m - params.s)
    mask_row1 = mask_row0 if mode == "packed" else [0] * m
    amounts, col_swap = plan_rotation_amounts(params.s, he.n)
    return BsgsPlan(
        params=params,
        mode=mode,
        baby=baby,
        giant=giant,
        fold_amounts=tuple(fold),
        diagonals=diagonals,
        output_mask=SlotMatrix.from_rows(mask_row0, mask_row1, p),
        rotation_amounts=tuple(amounts),
        needs_col_swap=col_swap,
    )


_PLAN_CACHE: dict[tuple, BsgsPlan] = {}
_PLAN_CACHE_MAX = 8


def _plan(params: CompressionParams, mode: str, masked: VandermondeTable | None = None) -> BsgsPlan:
    key = (params, mode, masked)
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        plan = build_plan(params, mode, masked)
        if len(_PLAN_CACHE) >= _PLAN_CACHE_MAX:
            _PLAN_CACHE.pop(next(iter(_PLAN_CACHE)))
        _PLAN_CACHE[key] = plan
    return plan


def bsgs_matvec(
    plan: BsgsPlan, inputs: Sequence[Ciphertext], backend, keys: KeySet
) -> Ciphertext:
    """Evaluate the planned matrix-vector product.

    Baby-step rotations run per input block; giant-step rotations and the
    rotate-and-sum folding run once on the block-summed accumulators, then
    the designated output slots are isolated with one plaintext mask.
    """
    if len(inputs) != plan.num_inputs:
        raise ValueError(f"plan expects {plan.num_inputs} input ciphertexts")
    baby, giant = plan.baby, plan.giant
    acc: list[Ciphertext | None] = [None] * giant
    for t, ct in enumerate(inputs):
        rotated = [ct]
        for b in range(1, baby):
            rotated.append(backend.rot_row(ct, b, keys))
        diags = plan.diagonals[t]
        for g in range(giant):
            for b in range(baby):
                d = diags[g * baby + b]
                if d is None:
                    continue
                prod = backend.mul_plain(rotated[b], d)
                acc[g] = prod if acc[g] is None else backend.add(acc[g], prod)
    res = acc[0]
    for g in range(1, giant):
        if acc[g] is None:
            continue
        part = backend.rot_row(acc[g], (g * baby) % plan.params.block_width, keys)
        res = part if res is None else backend.add(res, part)
    if res is None:
        raise ValueError("matrix plan had no nonzero diagonals")
    for amount in plan.fold_amounts:
        res = backend.add(res, backend.rot_row(res, amount, keys))
    if plan.mode == "rows":
        res = backend.add(res, backend.rot_col(res, keys))
    return backend.mul_plain(res, plan.output_mask)


# ---------------------------------------------------------------------------
# vector encoding and packing
# ---------------------------------------------------------------------------


def encode_vector(values: Sequence[int], params: CompressionParams) -> list[SlotMatrix]:
    """Standard layout: consecutive length-n chunks, each chunk split
    half/half over the two rows; zero padding past N."""
    he = params.he
    vals = list(values)
    if len(vals) != params.N:
        raise ValueError(f"expected a length-{params.N} vector")
    out = []
    for t in range(params.num_ciphertexts):
        chunk = vals[t * he.n : (t + 1) * he.n]
        out.append(SlotMatrix.from_vector(chunk, he.n, he.p))
    return out


def encrypt_vector(
    values: Sequence[int], params: CompressionParams, backend, keys: KeySet
) -> list[Ciphertext]:
    return [backend.encrypt(m, keys) for m in encode_vector(values, params)]


def pack_pair(
    cv: Sequence[Ciphertext],
    cd: Sequence[Ciphertext],
    params: CompressionParams,
    backend,
    keys: KeySet,
) -> list[Ciphertext]:
    """Merge standard-layout ciphertexts of v and d into per-block [v, d]
    two-row ciphertexts: u = (v o mask) + Rot_col(d o mask)."""
    he = params.he
    if len(cv) != params.num_ciphertexts or len(cd) != params.num_ciphertexts:
        raise ValueError("expected standard-layout ciphertext lists")
    m = params.block_width
    top = SlotMatrix.from_rows([1] * m, [0] * m, he.p)
    bot = SlotMatrix.from_rows([0] * m, [1] * m, he.p)
    out = []
    for j in range(params.num_blocks):
        src = j // 2
        if j % 2 == 0:
            u = backend.add(
                backend.mul_plain(cv[src], top),
                backend.rot_col(backend.mul_plain(cd[src], top), keys),
            )
        else:
            u = backend.add(
                backend.rot_col(backend.mul_plain(cv[src], bot), keys),
                backend.mul_plain(cd[src], bot),
            )
        out.append(u)
    return out


# ---------------------------------------------------------------------------
# compression scheme
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompressedAnswer:
    """The 2s-slot compressed payload.

    Packed layout (the default, one ciphertext): w in row 0 slots 0..s-1,
    e in row 1 slots 0..s-1, every other slot zero. With packing disabled
    two ciphertexts are returned, each carrying its vector in row 0.
    """

    cts: tuple[Ciphertext, ...]
    s: int
    packed: bool

    def payload_slots(self, backend, keys: KeySet) -> tuple[list[int], list[int]]:
        """Decrypt and split into (w, e)."""
        if self.packed:
            m = backend.decrypt(self.cts[0], keys)
            return (
                [int(x) for x in m.rows[0][: self.s]],
                [int(x) for x in m.rows[1][: self.s]],
            )
        mw = backend.decrypt(self.cts[0], keys)
        me = backend.decrypt(self.cts[1], keys)
        return (
            [int(x) for x in mw.rows[0][: self.s]],
            [int(x) for x in me.rows[0][: self.s]],
        )

    def serialize(self, backend) -> bytes:
        head = struct.pack(
            "<HIBBBIIB",
            LAYOUT_VERSION,
            self.s,
            1 if self.packed else 0,
            0,  # w row
            1 if self.packed else 0,  # e row
            0,  # w slot offset
            0,  # e slot offset
            len(self.cts),
        )
        blobs = [backend.serialize_ciphertext(c) for c in self.cts]
        return head + b"".join(struct.pack("<I", len(b)) + b for b in blobs)

    @staticmethod
    def deserialize(data: bytes, backend) -> "CompressedAnswer":
        version, s, packed, _, _, _, _, count = struct.unpack("<HIBBBIIB", data[:18])
        if version != LAYOUT_VERSION:
            raise ValueError(f"unsupported payload layout version {version}")
        off = 18
        cts = []
        for _ in range(count):
            (ln,) = struct.unpack("<I", data[off : off + 4])
            off += 4
            cts.append(backend.deserialize_ciphertext(data[off : off + ln]))
            off += ln
        return CompressedAnswer(tuple(cts), s, bool(packed))


def power_fermat(
    cts: Sequence[Ciphertext], params: CompressionParams, backend, keys: KeySet
) -> list[Ciphertext]:
    """Slotwise x -> x^(p-1): 1 on nonzero slots, 0 elsewhere (Fermat).

    Consumes one multiplicative level per squaring/multiply; for p = 65537
    that is 16 squarings.
    """
    e = params.he.p - 1
    bits = bin(e)[2:]
    out = []
    for c in cts:
        r = c
        for bit in bits[1:]:
            r = backend.mul(r, r, keys)
            if bit == "1":
                r = backend.mul(r, c, keys)
        out.append(r)
    return out


def fermat_depth(p: int) -> int:
    """Multiplicative depth of the slotwise (p-1)-th power circuit."""
    e = p - 1
    return e.bit_length() - 1 + bin(e).count("1") - 1


def comp_idx(
    cv: Sequence[Ciphertext], params: CompressionParams, backend, keys: KeySet
) -> Ciphertext:
    """Compress an index vector: w = C.v, in row 0 slots 0..s-1."""
    plan = _plan(params, "rows")
    return bsgs_matvec(plan, cv, backend, keys)


def decomp_idx(
    cw: Ciphertext,
    params: CompressionParams,
    backend,
    keys: KeySet,
    field: PrimeField | None = None,
    seed: int = 0,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Recover the index set from a compressed index vector, plus the
    expanded 0/1 vector (the redundant formatting step)."""
    field = field or PrimeField(params.he.p, check=False)
    m = backend.decrypt(cw, keys)
    w = [int(x) for x in m.rows[0][: params.s]]
    idx = reconst_idx(w, field, params.N, seed=seed)
    dense = np.zeros(params.N, dtype=np.int64)
    for i in idx:
        dense[i - 1] = 1
    return idx, dense


def comp(
    cd: Sequence[Ciphertext],
    params: CompressionParams,
    backend,
    keys: KeySet,
    index_hint: Sequence[Ciphertext] | None = None,
    pack: bool = True,
    masked: VandermondeTable | None = None,
) -> CompressedAnswer:
    """Compress ciphertexts of an s-sparse vector d into (w, e).

    Without an index hint the index vector is computed with the Fermat
    power circuit; protocols that already evaluated a match predicate pass
    its output as the hint and skip that depth entirely. When `masked` is
    given, cd is interpreted as the index vector and the bottom lane
    evaluates the pre-scaled matrix D = C.diag(DB) instead of C.
    """
    if masked is not None:
        cv = list(cd)
    elif index_hint is not None:
        cv = list(index_hint)
    else:
        cv = power_fermat(cd, params, backend, keys)
    if pack:
        u = pack_pair(cv, cd, params, backend, keys)
        payload = bsgs_matvec(_plan(params, "packed", masked), u, backend, keys)
        return CompressedAnswer((payload,), params.s, True)
    plan = _plan(params, "rows")
    cw = bsgs_matvec(plan, cv, backend, keys)
    ce = bsgs_matvec(plan, cd, backend, keys)
    return CompressedAnswer((cw, ce), params.s, False)


def comp_masked(
    cv: Sequence[Ciphertext],
    masked: VandermondeTable,
    params: CompressionParams,
    backend,
    keys: KeySet,
) -> CompressedAnswer:
    """Compress via the cleartext-database optimization: one [C; D].v pass
    on the index vector, no masking step."""
    return comp(cv, params, backend, keys, masked=masked)


def decomp(
    ans: CompressedAnswer,
    params: CompressionParams,
    backend,
    keys: KeySet,
    field: PrimeField | None = None,
    seed: int = 0,
) -> SparseVector:
    """Decrypt, recover the support from w, solve for the values from e."""
    field = field or PrimeField(params.he.p, check=False)
    w, e = ans.payload_slots(backend, keys)
    idx = reconst_idx(w, field, params.N, seed=seed)
    return solve_vandermonde_sub(e, idx, field, length=params.N)
