"""Private database query: Query / Answer / Recover over a key-value store.

The server pipeline is match -> mask -> compress. Match evaluates the
exact-equality predicate slotwise against the encrypted condition using
the Fermat power circuit (1 - (x - k_i)^(p-1)), mask multiplies in the
cleartext values, and compression reuses the match output as the index
hint, so the expensive power circuit never runs twice.

Zero values are rejected at ingestion: a matching record with value 0
would be indistinguishable from a non-match after masking, so callers map
their value alphabet into [1, p-1] up front.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .compress import (
    CompressedAnswer,
    CompressionParams,
    comp,
    decomp,
    encode_vector,
    fermat_depth,
    plan_rotation_amounts,
)
from .heiface import Ciphertext, KeySet, SlotMatrix
from .zpcore import NotFullySplit, PrimeField, SparseVector


class QueryOverflow(RuntimeError):
    """More records matched than the agreed sparsity bound s."""

    def __init__(self, s: int):
        super().__init__(f"query matched more than s={s} records")
        self.s = s


PREDICATE_EXACT_MATCH = 0x01
POST_FN_IDENTITY = 0x01

DB_MAGIC = b"HCDB"
DB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Database:
    """N cleartext (key, value) records over Z_p.

    Keys may repeat (multiple matches are fine up to s); values must be
    nonzero.
    """

    keys: tuple[int, ...]
    values: tuple[int, ...]
    p: int

    def __post_init__(self):
        if len(self.keys) != len(self.values):
            raise ValueError("keys and values must have equal length")
        if len(self.keys) > self.p - 1:
            raise ValueError(f"N={len(self.keys)} exceeds p-1={self.p - 1}")
        for k in self.keys:
            if not (0 <= k < self.p):
                raise ValueError(f"key {k} outside Z_p")
        for v in self.values:
            if not (1 <= v < self.p):
                raise ValueError(
                    f"value {v} outside [1, p-1]; zero values are not ingestible"
                )

    def __len__(self) -> int:
        return len(self.keys)

    def matches(self, x: int) -> set[tuple[int, int]]:
        """Cleartext evaluation of the query: the reference semantics."""
        return {
            (i + 1, v) for i, (k, v) in enumerate(zip(self.keys, self.values)) if k == x
        }

    # -- file formats --------------------------------------------------------

    @staticmethod
    def from_jsonl(path: str, p: int) -> "Database":
        keys, values = [], []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                keys.append(int(rec["key"]))
                values.append(int(rec["value"]))
        return Database(tuple(keys), tuple(values), p)

    def to_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in zip(self.keys, self.values):
                fh.write(json.dumps({"key": k, "value": v}) + "\n")

    @staticmethod
    def from_binary(path: str, p: int) -> "Database":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != DB_MAGIC:
            raise ValueError("not an HCDB file")
        version, n = struct.unpack("<HI", data[4:10])
        if version != DB_FORMAT_VERSION:
            raise ValueError(f"unsupported HCDB version {version}")
        body = np.frombuffer(data[10 : 10 + 16 * n], dtype="<u8")
        keys = tuple(int(x) for x in body[:n])
        values = tuple(int(x) for x in body[n:])
        return Database(keys, values, p)

    def to_binary(self, path: str) -> None:
        n = len(self.keys)
        arr = np.array(list(self.keys) + list(self.values), dtype="<u8")
        with open(path, "wb") as fh:
            fh.write(DB_MAGIC + struct.pack("<HI", DB_FORMAT_VERSION, n))
            fh.write(arr.tobytes())


@dataclass(frozen=True)
class PdqQuery:
    """Wire query: predicate and post-processing ids plus the encrypted
    condition, replicated across every slot."""

    predicate_id: int
    post_fn_id: int
    condition: Ciphertext

    def serialize(self, backend) -> bytes:
        blob = backend.serialize_ciphertext(self.condition)
        return struct.pack("<BBI", self.predicate_id, self.post_fn_id, len(blob)) + blob

    @staticmethod
    def deserialize(data: bytes, backend) -> "PdqQuery":
        pred, post, ln = struct.unpack("<BBI", data[:6])
        return PdqQuery(pred, post, backend.deserialize_ciphertext(data[6 : 6 + ln]))


@dataclass
class ClientState:
    """Client-side state: full key set plus the query echo."""

    params: CompressionParams
    keys: KeySet
    predicate_id: int = PREDICATE_EXACT_MATCH
    post_fn_id: int = POST_FN_IDENTITY


@dataclass(frozen=True)
class PdqResult:
    """The recovered matches: (1-based index, value) pairs."""

    matches: frozenset[tuple[int, int]]

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.matches))

    def to_json(self) -> str:
        return json.dumps(
            {"matches": [[i, v] for i, v in self.pairs]},
            sort_keys=True,
            separators=(",", ":"),
        )


def match_depth(p: int) -> int:
    """Multiplicative depth of the exact-match circuit: the Fermat power
    plus the final negation."""
    return fermat_depth(p) + 1


def protocol_max_level(p: int) -> int:
    """Depth budget for a full answer: match, mask, then the hint-path
    compression (pack, diagonal multiply, output mask)."""
    return match_depth(p) + 1 + 3


def setup_client(params: CompressionParams, backend, col_swap: bool = True) -> ClientState:
    """Generate a key set declaring exactly the rotations compression needs."""
    amounts, needs_swap = plan_rotation_amounts(params.s, params.he.n)
    keys = backend.keygen(amounts, col_swap=needs_swap and col_swap)
    return ClientState(params=params, keys=keys)


def query(x: int, client: ClientState, backend) -> PdqQuery:
    """Encrypt the condition, replicated into every slot."""
    p = client.params.he.p
    if not (0 <= x < p):
        raise ValueError(f"condition {x} outside Z_p")
    m = SlotMatrix.constant(x, client.params.he.n, p)
    return PdqQuery(
        predicate_id=client.predicate_id,
        post_fn_id=client.post_fn_id,
        condition=backend.encrypt(m, client.keys),
    )


def _db_block_matrices(values: Sequence[int], params: CompressionParams) -> list[SlotMatrix]:
    return encode_vector(list(values), params)


def match_exact(
    q: PdqQuery, db: Database, params: CompressionParams, backend, keys: KeySet
) -> list[Ciphertext]:
    """Slot i of the result is 1 iff key_i equals the hidden condition:
    v_i = 1 - (x - k_i)^(p-1), evaluated blockwise with plaintext keys."""
    if q.predicate_id != PREDICATE_EXACT_MATCH:
        raise ValueError(f"unknown predicate id {q.predicate_id}")
    he = params.he
    p = he.p
    neg_keys = _db_block_matrices([(-k) % p for k in db.keys], params)
    minus_one = SlotMatrix.constant(p - 1, he.n, p)
    one = SlotMatrix.constant(1, he.n, p)
    e = p - 1
    bits = bin(e)[2:]
    out = []
    for nk in neg_keys:
        diff = backend.add_plain(q.condition, nk)
        pw = diff
        for bit in bits[1:]:
            pw = backend.mul(pw, pw, keys)
            if bit == "1":
                pw = backend.mul(pw, diff, keys)
        v = backend.add_plain(backend.mul_plain(pw, minus_one), one)
        out.append(v)
    return out


def mask(
    cv: Sequence[Ciphertext], db: Database, params: CompressionParams, backend, keys: KeySet
) -> list[Ciphertext]:
    """d_i = v_i * value_i (plaintext multiplication; values are cleartext)."""
    vals = _db_block_matrices(list(db.values), params)
    return [backend.mul_plain(c, m) for c, m in zip(cv, vals)]


def answer(
    q: PdqQuery, db: Database, params: CompressionParams, backend, server_keys: KeySet
) -> CompressedAnswer:
    """The full server pipeline, reusing the match output as the index hint."""
    if len(db) != params.N:
        raise ValueError(f"database has {len(db)} records, params expect {params.N}")
    if q.post_fn_id != POST_FN_IDENTITY:
        raise ValueError(f"unknown post-processing id {q.post_fn_id}")
    cv = match_exact(q, db, params, backend, server_keys)
    cd = mask(cv, db, params, backend, server_keys)
    return comp(cd, params, backend, server_keys, index_hint=cv)


def recover(
    ans: CompressedAnswer,
    st: ClientState,
    backend,
    field: PrimeField | None = None,
    seed: int = 0,
) -> PdqResult:
    """Decompress and reshape into (index, value) pairs; sparsity overflow
    surfaces as QueryOverflow rather than a wrong result."""
    try:
        sv: SparseVector = decomp(ans, st.params, backend, st.keys, field=field, seed=seed)
    except NotFullySplit as exc:
        raise QueryOverflow(st.params.s) from exc
    return PdqResult(frozenset(sv.entries))
