"""Backend contract shared by the slot simulator and the BGV backend.

The plaintext unit is a 2 x (n/2) matrix over Z_p. Both backends expose the
same primitive set: slotwise add/mul (ciphertext and plaintext operands),
row rotation, row swap, and exact multiplicative-level bookkeeping. The
simulator holds slot matrices in the clear but enforces the full key and
level discipline, so evaluation code is backend-agnostic.

Serialization envelope for ciphertexts and key sets: magic "HCV1", one
backend-id byte, a little-endian u16 format version, then a backend-defined
payload. Integers are little-endian throughout.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable

import gmpy2
import numpy as np


class BackendMismatch(ValueError):
    """Ciphertexts/keys from different backends or key sets were mixed."""


class LevelExhausted(RuntimeError):
    """An operation required a multiplicative level that is not available."""


class MissingRotationKey(KeyError):
    """Rotation by an amount that was not declared at keygen."""


MAGIC = b"HCV1"
FORMAT_VERSION = 1
BACKEND_SIMULATOR = 0x01
BACKEND_BGV = 0x02

_OBJ_KIND_CIPHERTEXT = 0x01
_OBJ_KIND_KEYSET = 0x02

# int64 slot arithmetic is exact while p^2 < 2^63; larger p switches the
# slot matrices to Python-int (object dtype) arrays.
_NP_SLOT_LIMIT = 1 << 31


@dataclass(frozen=True)
class HeParams:
    """Ring dimension, plaintext modulus and depth budget."""

    n: int
    p: int
    max_level: int

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError(f"n={self.n} must be a power of two >= 4")
        if not gmpy2.is_prime(self.p):
            raise ValueError(f"p={self.p} must be prime")
        if self.p % (2 * self.n) != 1:
            raise ValueError(f"p={self.p} must satisfy p = 1 (mod 2n = {2 * self.n})")
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")

    @property
    def slots(self) -> int:
        return self.n // 2


class SlotMatrix:
    """2 x (n/2) matrix over Z_p: the plaintext in slot representation."""

    __slots__ = ("p", "rows")

    def __init__(self, p: int, rows: np.ndarray):
        if rows.shape[0] != 2:
            raise ValueError("slot matrix has exactly two rows")
        self.p = p
        self.rows = rows

    # -- constructors ------------------------------------------------------

    @staticmethod
    def _dtype(p: int):
        return np.int64 if p < _NP_SLOT_LIMIT else object

    @classmethod
    def zeros(cls, n: int, p: int) -> "SlotMatrix":
        return cls(p, np.zeros((2, n // 2), dtype=cls._dtype(p)))

    @classmethod
    def constant(cls, value: int, n: int, p: int) -> "SlotMatrix":
        m = cls.zeros(n, p)
        m.rows[:, :] = value % p
        return m

    @classmethod
    def from_rows(cls, row0, row1, p: int) -> "SlotMatrix":
        arr = np.array([list(row0), list(row1)], dtype=cls._dtype(p)) % p
        return cls(p, arr)

    @classmethod
    def from_vector(cls, values, n: int, p: int) -> "SlotMatrix":
        """Length-n vector layout: first n/2 entries in row 0, rest in row 1."""
        half = n // 2
        vals = list(values)
        if len(vals) > n:
            raise ValueError(f"vector of length {len(vals)} does not fit n={n}")
        vals = vals + [0] * (n - len(vals))
        return cls.from_rows(vals[:half], vals[half:], p)

    @classmethod
    def random(cls, n: int, p: int, rng: random.Random) -> "SlotMatrix":
        return cls.from_rows(
            [rng.randrange(p) for _ in range(n // 2)],
            [rng.randrange(p) for _ in range(n // 2)],
            p,
        )

    # -- value semantics ---------------------------------------------------

    @property
    def cols(self) -> int:
        return self.rows.shape[1]

    def copy(self) -> "SlotMatrix":
        return SlotMatrix(self.p, self.rows.copy())

    def to_vector(self) -> list[int]:
        return [int(x) for x in self.rows[0]] + [int(x) for x in self.rows[1]]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SlotMatrix)
            and self.p == other.p
            and self.rows.shape == other.rows.shape
            and bool(np.all(self.rows == other.rows))
        )

    def __repr__(self) -> str:
        return f"SlotMatrix(p={self.p}, rows={self.rows.tolist()})"

    def digest(self) -> bytes:
        """Stable content key, used for plaintext-encoding caches."""
        import hashlib

        h = hashlib.sha1()
        h.update(struct.pack("<QI", self.p, self.cols))
        if self.rows.dtype == object:
            h.update(repr(self.rows.tolist()).encode())
        else:
            h.update(np.ascontiguousarray(self.rows).tobytes())
        return h.digest()

    # -- cleartext slot semantics (what both backends must realize) --------

    def add(self, other: "SlotMatrix") -> "SlotMatrix":
        return SlotMatrix(self.p, (self.rows + other.rows) % self.p)

    def mul(self, other: "SlotMatrix") -> "SlotMatrix":
        return SlotMatrix(self.p, (self.rows * other.rows) % self.p)

    def rot_row(self, r: int) -> "SlotMatrix":
        # [v_1, ..., v_m] -> [v_{1+r}, ..., v_m, v_1, ..., v_r]
        return SlotMatrix(self.p, np.roll(self.rows, -r, axis=1))

    def rot_col(self) -> "SlotMatrix":
        return SlotMatrix(self.p, self.rows[::-1].copy())


@dataclass
class OpCounters:
    """Monotone per-session evaluation counters."""

    keyswitches: int = 0
    ct_mults: int = 0
    pt_mults: int = 0
    adds: int = 0

    def snapshot(self) -> "OpCounters":
        return OpCounters(self.keyswitches, self.ct_mults, self.pt_mults, self.adds)

    def delta(self, earlier: "OpCounters") -> "OpCounters":
        return OpCounters(
            self.keyswitches - earlier.keyswitches,
            self.ct_mults - earlier.ct_mults,
            self.pt_mults - earlier.pt_mults,
            self.adds - earlier.adds,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "keyswitches": self.keyswitches,
            "ct_mults": self.ct_mults,
            "pt_mults": self.pt_mults,
            "adds": self.adds,
        }


@dataclass(frozen=True)
class Ciphertext:
    """Backend-tagged ciphertext with remaining multiplicative level."""

    backend_id: int
    key_id: bytes
    level: int
    payload: object

    def with_payload(self, payload: object, level: int | None = None) -> "Ciphertext":
        return replace(self, payload=payload, level=self.level if level is None else level)


@dataclass
class KeySet:
    """Key material for one backend instance.

    rotation_keys maps declared row-rotation amounts to backend key
    material (the simulator stores None placeholders but enforces the
    declared set). The secret is absent in public-only copies.
    """

    backend_id: int
    params: HeParams
    key_id: bytes
    rotation_keys: dict[int, object]
    col_swap_key: object | None
    relin_key: object | None
    public: object | None
    secret: object | None

    def public_only(self) -> "KeySet":
        return KeySet(
            backend_id=self.backend_id,
            params=self.params,
            key_id=self.key_id,
            rotation_keys=self.rotation_keys,
            col_swap_key=self.col_swap_key,
            relin_key=self.relin_key,
            public=self.public,
            secret=None,
        )

    @property
    def rotation_amounts(self) -> frozenset[int]:
        return frozenset(self.rotation_keys)


def op_counters(backend) -> dict[str, int]:
    """Counter snapshot for an evaluation session (a backend instance)."""
    return backend.counters.as_dict()


def write_envelope(backend_id: int, payload: bytes) -> bytes:
    return MAGIC + struct.pack("<BH", backend_id, FORMAT_VERSION) + payload


def peek_blob_params(data: bytes) -> tuple[int, int, HeParams]:
    """(backend_id, object kind, HeParams) from any HCV1 blob, so a backend
    with matching parameters can be constructed before full parsing. Both
    backends lay out (kind, n, p, max_level) identically."""
    backend_id, _, payload = read_envelope(data)
    kind = payload[0]
    if kind == _OBJ_KIND_CIPHERTEXT:
        _, _, n, p, max_level = struct.unpack("<BBIQB", payload[:15])
    else:
        _, n, p, max_level = struct.unpack("<BIQB", payload[:14])
    return backend_id, kind, HeParams(n, p, max_level)


def read_envelope(data: bytes) -> tuple[int, int, bytes]:
    if len(data) < 7 or data[:4] != MAGIC:
        raise ValueError("not an HCV1 blob")
    backend_id, version = struct.unpack("<BH", data[4:7])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    return backend_id, version, data[7:]


class SimulatorBackend:
    """Exact cleartext mirror of the BGV slot semantics with full key and
    level discipline. One instance is one evaluation session (counters)."""

    backend_id = BACKEND_SIMULATOR
    name = "sim"

    def __init__(self, params: HeParams, seed: int | None = None):
        self.params = params
        self.counters = OpCounters()
        self._rng = random.Random(seed)

    def reset_counters(self) -> None:
        self.counters = OpCounters()

    # -- keys ---------------------------------------------------------------

    def keygen(self, rotation_amounts: Iterable[int], col_swap: bool = True) -> KeySet:
        amounts = sorted(set(int(r) for r in rotation_amounts))
        half = self.params.slots
        for r in amounts:
            if not (0 <= r < half):
                raise ValueError(f"rotation amount {r} outside [0, n/2)")
        return KeySet(
            backend_id=self.backend_id,
            params=self.params,
            key_id=self._rng.getrandbits(128).to_bytes(16, "little"),
            rotation_keys={r: None for r in amounts},
            col_swap_key=object() if col_swap else None,
            relin_key=object(),
            public=None,
            secret=self._rng.getrandbits(128).to_bytes(16, "little"),
        )

    # -- helpers ------------------------------------------------------------

    def _check_plain(self, m: SlotMatrix) -> None:
        if m.p != self.params.p or m.cols != self.params.slots:
            raise BackendMismatch("plaintext does not match backend parameters")

    def _check_ct(self, c: Ciphertext) -> None:
        if c.backend_id != self.backend_id:
            raise BackendMismatch("ciphertext from a different backend")

    def _check_pair(self, a: Ciphertext, b: Ciphertext) -> None:
        self._check_ct(a)
        self._check_ct(b)
        if a.key_id != b.key_id:
            raise BackendMismatch("ciphertexts under different key sets")

    def _check_keys(self, c: Ciphertext, keys: KeySet) -> None:
        self._check_ct(c)
        if keys.backend_id != self.backend_id or keys.key_id != c.key_id:
            raise BackendMismatch("key set does not match ciphertext")

    # -- core ops -------------------------------------------------------------

    def encrypt(self, m: SlotMatrix, keys: KeySet) -> Ciphertext:
        self._check_plain(m)
        return Ciphertext(self.backend_id, keys.key_id, self.params.max_level, m.copy())

    def decrypt(self, c: Ciphertext, keys: KeySet) -> SlotMatrix:
        self._check_keys(c, keys)
        if keys.secret is None:
            raise BackendMismatch("decryption requires the secret key")
        return c.payload.copy()

    def add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_pair(c1, c2)
        self.counters.adds += 1
        return Ciphertext(
            self.backend_id, c1.key_id, min(c1.level, c2.level), c1.payload.add(c2.payload)
        )

    def add_plain(self, c: Ciphertext, m: SlotMatrix) -> Ciphertext:
        self._check_ct(c)
        self._check_plain(m)
        self.counters.adds += 1
        return c.with_payload(c.payload.add(m))

    def mul(self, c1: Ciphertext, c2: Ciphertext, keys: KeySet) -> Ciphertext:
        self._check_pair(c1, c2)
        self._check_keys(c1, keys)
        lvl = min(c1.level, c2.level)
        if lvl < 1:
            raise LevelExhausted("ciphertext-ciphertext multiply at level 0")
        self.counters.ct_mults += 1
        self.counters.keyswitches += 1  # relinearization
        return Ciphertext(self.backend_id, c1.key_id, lvl - 1, c1.payload.mul(c2.payload))

    def mul_plain(self, c: Ciphertext, m: SlotMatrix) -> Ciphertext:
        self._check_ct(c)
        self._check_plain(m)
        if c.level < 1:
            raise LevelExhausted("plaintext multiply at level 0")
        self.counters.pt_mults += 1
        return Ciphertext(self.backend_id, c.key_id, c.level - 1, c.payload.mul(m))

    def rot_row(self, c: Ciphertext, r: int, keys: KeySet) -> Ciphertext:
        self._check_keys(c, keys)
        r = r % self.params.slots
        if r == 0:
            return c.with_payload(c.payload.copy())
        if r not in keys.rotation_keys:
            raise MissingRotationKey(f"rotation by {r} was not declared at keygen")
        self.counters.keyswitches += 1
        return c.with_payload(c.payload.rot_row(r))

    def rot_col(self, c: Ciphertext, keys: KeySet) -> Ciphertext:
        self._check_keys(c, keys)
        if keys.col_swap_key is None:
            raise MissingRotationKey("column-swap key was not declared at keygen")
        self.counters.keyswitches += 1
        return c.with_payload(c.payload.rot_col())

    # -- serialization --------------------------------------------------------

    def serialize_ciphertext(self, c: Ciphertext) -> bytes:
        self._check_ct(c)
        m: SlotMatrix = c.payload
        head = struct.pack(
            "<BBIQB", _OBJ_KIND_CIPHERTEXT, c.level, self.params.n, self.params.p,
            self.params.max_level,
        )
        body = b"".join(int(x).to_bytes(8, "little") for x in m.to_vector())
        return write_envelope(self.backend_id, head + c.key_id + body)

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
        raw = payload[31:]
        vals = [int.from_bytes(raw[8 * i : 8 * i + 8], "little") for i in range(n)]
        return Ciphertext(
            self.backend_id, key_id, level, SlotMatrix.from_vector(vals, n, p)
        )

    def serialize_keyset(self, keys: KeySet, include_secret: bool = False) -> bytes:
        amounts = sorted(keys.rotation_keys)
        head = struct.pack(
            "<BIQB", _OBJ_KIND_KEYSET, self.params.n, self.params.p, self.params.max_level
        )
        body = keys.key_id
        secret = keys.secret if include_secret else None
        body += struct.pack("<B", 1 if secret is not None else 0)
        if secret is not None:
            body += secret
        body += struct.pack("<BI", 1 if keys.col_swap_key is not None else 0, len(amounts))
        body += b"".join(struct.pack("<I", a) for a in amounts)
        return write_envelope(self.backend_id, head + body)

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
        key_id = payload[off : off + 16]
        off += 16
        (has_secret,) = struct.unpack("<B", payload[off : off + 1])
        off += 1
        secret = None
        if has_secret:
            secret = payload[off : off + 16]
            off += 16
        col_swap, count = struct.unpack("<BI", payload[off : off + 5])
        off += 5
        amounts = struct.unpack(f"<{count}I", payload[off : off + 4 * count])
        return KeySet(
            backend_id=self.backend_id,
            params=self.params,
            key_id=key_id,
            rotation_keys={a: None for a in amounts},
            col_swap_key=object() if col_swap else None,
            relin_key=object(),
            public=None,
            secret=secret,
        )
