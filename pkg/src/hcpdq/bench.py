"""Benchmark harness: op-count and size measurements over the two grids
(varying sparsity at fixed N, varying N at fixed sparsity), with the
scaling verdicts that replace wall-clock comparisons.

Wall times are measured by default but are inherently nondeterministic;
with timing disabled those columns are written as 0 and the CSV is
byte-stable for a fixed seed and grid.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .compress import (
    CompressionParams,
    comp,
    decomp,
    encrypt_vector,
    plan_rotation_amounts,
)
from .heiface import HeParams
from .net import make_backend
from .zpcore import PrimeField, SparseVector

CSV_VERSION_LINE = "# hcpdq-bench-csv v1"
CSV_HEADER = (
    "N,s,backend,comp_keyswitches,comp_pt_mults,comp_wall_ms,"
    "decomp_zp_ops,decomp_wall_ms,payload_bytes"
)

VARY_S_DEFAULT = (8, 16, 32, 64, 128)
VARY_N_DEFAULT = (1 << 13, 1 << 14, 1 << 15, 1 << 16, 1 << 17)

# p for the vary-N grid: must stay above N = 2^17 (the p > N invariant) and
# be 1 mod 2n for n = 2^13; 3 * 2^18 + 1 is the classic choice.
VARY_N_PRIME = 786433
DEFAULT_N = 16384
DEFAULT_S = 16
DEFAULT_RING = 1 << 13
DEFAULT_PRIME = 65537


@dataclass
class BenchRow:
    N: int
    s: int
    backend: str
    comp_keyswitches: int
    comp_pt_mults: int
    comp_wall_ms: float
    decomp_zp_ops: int
    decomp_wall_ms: float
    payload_bytes: int

    def csv(self) -> str:
        return (
            f"{self.N},{self.s},{self.backend},{self.comp_keyswitches},"
            f"{self.comp_pt_mults},{self.comp_wall_ms:.3f},{self.decomp_zp_ops},"
            f"{self.decomp_wall_ms:.3f},{self.payload_bytes}"
        )


def plant_sparse(rng: random.Random, max_index: int, s: int, p: int) -> SparseVector:
    support = sorted(rng.sample(range(1, max_index + 1), s))
    return SparseVector.from_pairs(
        max_index, [(i, rng.randrange(1, p)) for i in support]
    )


def run_point(
    params: CompressionParams,
    backend_name: str,
    planted: SparseVector,
    seed: int,
    timing: bool = True,
) -> BenchRow:
    """Compress and decompress one planted vector, recording counters,
    payload size, and decompression Z_p work. The round trip is verified."""
    backend = make_backend(backend_name, params.he, seed=seed)
    amounts, col_swap = plan_rotation_amounts(params.s, params.he.n)
    keys = backend.keygen(amounts, col_swap=col_swap)
    dense = [0] * params.N
    for i, v in planted.entries:
        dense[i - 1] = v
    cts = encrypt_vector(dense, params, backend, keys)
    hint = encrypt_vector([1 if x else 0 for x in dense], params, backend, keys)

    before = backend.counters.snapshot()
    t0 = time.perf_counter()
    ans = comp(cts, params, backend, keys, index_hint=hint)
    t1 = time.perf_counter()
    delta = backend.counters.delta(before)

    payload_bytes = len(ans.serialize(backend))

    field = PrimeField(params.he.p, check=False)
    t2 = time.perf_counter()
    out = decomp(ans, params, backend, keys, field=field, seed=seed)
    t3 = time.perf_counter()
    if out.entries != tuple((i, v) for i, v in planted.entries):
        raise AssertionError("bench round trip failed")

    return BenchRow(
        N=params.N,
        s=params.s,
        backend=backend_name,
        comp_keyswitches=delta.keyswitches,
        comp_pt_mults=delta.pt_mults,
        comp_wall_ms=(t1 - t0) * 1000 if timing else 0.0,
        decomp_zp_ops=field.ops,
        decomp_wall_ms=(t3 - t2) * 1000 if timing else 0.0,
        payload_bytes=payload_bytes,
    )


def vary_sparsity(
    s_values=VARY_S_DEFAULT,
    N: int = DEFAULT_N,
    backend: str = "sim",
    n: int = DEFAULT_RING,
    p: int = DEFAULT_PRIME,
    max_level: int = 3,
    seed: int = 0,
    timing: bool = True,
) -> tuple[list[BenchRow], dict[str, bool]]:
    rng = random.Random(seed)
    rows = []
    for s in s_values:
        params = CompressionParams(N=N, s=s, he=HeParams(n, p, max_level))
        rows.append(run_point(params, backend, plant_sparse(rng, N, s, p), seed, timing))
    ks = [r.comp_keyswitches for r in rows]
    verdicts = {
        "keyswitch_monotone": all(a <= b for a, b in zip(ks, ks[1:])),
        "keyswitch_sublinear": len(ks) < 2 or ks[-1] <= 6 * ks[0],
    }
    return rows, verdicts


def vary_length(
    N_values=VARY_N_DEFAULT,
    s: int = DEFAULT_S,
    backend: str = "sim",
    n: int = DEFAULT_RING,
    p: int = VARY_N_PRIME,
    max_level: int = 3,
    seed: int = 0,
    timing: bool = True,
) -> tuple[list[BenchRow], dict[str, bool]]:
    rng = random.Random(seed)
    # same payload planted at every N (indices within the smallest N), so
    # the decompression work is comparable bit for bit across the grid
    base = plant_sparse(rng, min(N_values), s, p)
    rows = []
    for N in N_values:
        params = CompressionParams(N=N, s=s, he=HeParams(n, p, max_level))
        planted = SparseVector(N, base.entries)
        rows.append(run_point(params, backend, planted, seed, timing))
    ops = [r.decomp_zp_ops for r in rows]
    sizes = [r.payload_bytes for r in rows]
    verdicts = {
        "decomp_ops_constant": len(set(ops)) == 1,
        "payload_size_constant": len(set(sizes)) == 1,
    }
    return rows, verdicts


def write_csv(rows: list[BenchRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv() + "\n")
