"""Command-line entry points: keygen, compress/decompress, the TCP server
and client, and the benchmark grids.

HCPDQ_SEED in the environment makes key generation, encryption and the
benchmark data deterministic. Exit codes: 0 success, 1 I/O or runtime
failure, 2 usage, 3 decompression failure (sparsity overflow or corrupted
payload).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import gmpy2

from . import bench as bench_mod
from .compress import (
    CompressedAnswer,
    CompressionParams,
    comp,
    decomp,
    encrypt_vector,
    plan_rotation_amounts,
)
from .heiface import HeParams, op_counters, peek_blob_params
from .net import PdqClient, ServerConfig, make_backend, serve_pdq
from .pdq import Database, QueryOverflow, setup_client
from .zpcore import (
    InconsistentSystem,
    NotFullySplit,
    PrimeField,
    SingularSystem,
    SparseVector,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DECOMPRESS = 3


def _env_seed() -> int | None:
    raw = os.environ.get("HCPDQ_SEED")
    return int(raw) if raw else None


def _check_he_params(n: int, p: int, levels: int) -> HeParams:
    if n < 4 or n & (n - 1):
        raise SystemExit(f"invalid --n {n}: must be a power of two >= 4")
    if not gmpy2.is_prime(p):
        raise SystemExit(f"invalid --p {p}: not prime")
    if p % (2 * n) != 1:
        raise SystemExit(f"invalid --p {p}: p = 1 (mod 2n = {2 * n}) required")
    if levels < 1:
        raise SystemExit(f"invalid --levels {levels}: must be >= 1")
    return HeParams(n, p, levels)


def vector_to_json(sv: SparseVector) -> str:
    return (
        json.dumps(
            {"length": sv.length, "entries": [[i, v] for i, v in sv.entries]},
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
    )


def vector_from_json(text: str) -> SparseVector:
    obj = json.loads(text)
    return SparseVector.from_pairs(int(obj["length"]), obj["entries"])


def _load_backend_and_keys(path: str, backend_name: str, seed: int | None):
    with open(path, "rb") as fh:
        blob = fh.read()
    backend_id, _, he = peek_blob_params(blob)
    backend = make_backend(backend_name, he, seed=seed)
    if backend.backend_id != backend_id:
        raise SystemExit(f"key file was generated by a different backend")
    return backend, backend.deserialize_keyset(blob), he


def _load_database(path: str, p: int) -> Database:
    if path.endswith(".hcdb") or path.endswith(".bin"):
        return Database.from_binary(path, p)
    return Database.from_jsonl(path, p)


def cmd_keygen(args) -> int:
    he = _check_he_params(args.n, args.p, args.levels)
    if 2 * args.s > args.n:
        raise SystemExit(f"invalid --s {args.s}: 2s must fit the {args.n} slots")
    backend = make_backend(args.backend, he, seed=_env_seed())
    amounts, col_swap = plan_rotation_amounts(args.s, args.n)
    keys = backend.keygen(amounts, col_swap=col_swap)
    with open(args.out + ".sec", "wb") as fh:
        fh.write(backend.serialize_keyset(keys, include_secret=True))
    with open(args.out + ".pub", "wb") as fh:
        fh.write(backend.serialize_keyset(keys.public_only(), include_secret=False))
    print(f"wrote {args.out}.sec and {args.out}.pub ({len(amounts)} rotation keys)")
    return EXIT_OK


def cmd_compress(args) -> int:
    backend, keys, he = _load_backend_and_keys(args.keys, args.backend, _env_seed())
    with open(args.input, "r", encoding="utf-8") as fh:
        sv = vector_from_json(fh.read())
    params = CompressionParams(N=sv.length, s=args.s, he=he)
    dense = [0] * params.N
    for i, v in sv.entries:
        dense[i - 1] = v
    cts = encrypt_vector(dense, params, backend, keys)
    hint = encrypt_vector([1 if x else 0 for x in dense], params, backend, keys)
    ans = comp(cts, params, backend, keys, index_hint=hint)
    blob = ans.serialize(backend)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    counts = op_counters(backend)
    print(
        f"compressed {sv.length} -> {2 * args.s} slots in {len(ans.cts)} ciphertext(s), "
        f"{len(blob)} bytes"
    )
    print(
        f"ops: keyswitches={counts['keyswitches']} pt_mults={counts['pt_mults']} "
        f"ct_mults={counts['ct_mults']} adds={counts['adds']}"
    )
    return EXIT_OK


def cmd_decompress(args) -> int:
    backend, keys, he = _load_backend_and_keys(args.keys, args.backend, _env_seed())
    with open(args.input, "rb") as fh:
        ans = CompressedAnswer.deserialize(fh.read(), backend)
    length = args.length if args.length else he.p - 1
    params = CompressionParams(N=length, s=ans.s, he=he)
    field = PrimeField(he.p, check=False)
    try:
        sv = decomp(ans, params, backend, keys, field=field)
    except (NotFullySplit, SingularSystem, InconsistentSystem) as exc:
        print(f"decompression failed: {exc}", file=sys.stderr)
        return EXIT_DECOMPRESS
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(vector_to_json(sv))
    print(f"recovered {sv.nnz} nonzero entries; zp_ops={field.ops}")
    return EXIT_OK


def cmd_serve(args) -> int:
    _check_he_params(args.n, args.p, args.levels)
    db = _load_database(args.db, args.p)
    config = ServerConfig(db=db, s=args.s, backend=args.backend, record_path=args.record)
    server = serve_pdq(args.host, args.port, config)
    host, port = server.server_address[:2]
    print(f"serving {len(db)} records on {host}:{port} (backend={args.backend})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_query(args) -> int:
    he = _check_he_params(args.n, args.p, args.levels)
    params = CompressionParams(N=args.length, s=args.s, he=he)
    backend = make_backend(args.backend, he, seed=_env_seed())
    state = setup_client(params, backend)
    host, _, port = args.addr.rpartition(":")
    with PdqClient((host, int(port)), params, backend, state) as client:
        try:
            result = client.query_x(args.x)
        except QueryOverflow as exc:
            print(f"query failed: {exc}", file=sys.stderr)
            return EXIT_DECOMPRESS
        print(result.to_json())
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    timing = not args.no_timing
    if args.vary == "s":
        values = [int(x) for x in args.values.split(",")] if args.values else None
        rows, verdicts = bench_mod.vary_sparsity(
            s_values=values or bench_mod.VARY_S_DEFAULT,
            N=args.fixed or bench_mod.DEFAULT_N,
            backend=args.backend,
            seed=seed,
            timing=timing,
        )
    else:
        values = [int(x) for x in args.values.split(",")] if args.values else None
        rows, verdicts = bench_mod.vary_length(
            N_values=values or bench_mod.VARY_N_DEFAULT,
            s=args.fixed or bench_mod.DEFAULT_S,
            backend=args.backend,
            seed=seed,
            timing=timing,
        )
    bench_mod.write_csv(rows, args.out)
    for row in rows:
        print(row.csv())
    ok = True
    for name, passed in verdicts.items():
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    print(f"wrote {args.out}")
    return EXIT_OK if ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hcpdq", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("keygen", help="generate key files")
    kg.add_argument("--n", type=int, default=1 << 13)
    kg.add_argument("--p", type=int, default=65537)
    kg.add_argument("--levels", type=int, default=3)
    kg.add_argument("--s", type=int, default=16, help="sparsity the rotation plan targets")
    kg.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    kg.add_argument("--out", required=True, help="output path prefix")
    kg.set_defaults(func=cmd_keygen)

    cp = sub.add_parser("compress", help="compress a sparse vector file")
    cp.add_argument("--input", required=True, help="sparse vector JSON")
    cp.add_argument("--s", type=int, required=True)
    cp.add_argument("--keys", required=True, help="key file (.pub suffices)")
    cp.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_compress)

    dc = sub.add_parser("decompress", help="decompress a payload file")
    dc.add_argument("--input", required=True)
    dc.add_argument("--keys", required=True, help="secret key file (.sec)")
    dc.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    dc.add_argument("--length", type=int, default=0, help="original vector length")
    dc.add_argument("--out", required=True)
    dc.set_defaults(func=cmd_decompress)

    sv = sub.add_parser("serve", help="run the query server")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, required=True)
    sv.add_argument("--db", required=True, help="database file (.jsonl or .hcdb)")
    sv.add_argument("--n", type=int, default=1 << 13)
    sv.add_argument("--p", type=int, default=65537)
    sv.add_argument("--levels", type=int, default=22)
    sv.add_argument("--s", type=int, default=16)
    sv.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    sv.add_argument("--record", default=None, help="dump raw frames to this file")
    sv.set_defaults(func=cmd_serve)

    qr = sub.add_parser("query", help="query a running server")
    qr.add_argument("--addr", required=True, help="host:port")
    qr.add_argument("--x", type=int, required=True, help="condition (key to match)")
    qr.add_argument("--length", type=int, required=True, help="database size N")
    qr.add_argument("--n", type=int, default=1 << 13)
    qr.add_argument("--p", type=int, default=65537)
    qr.add_argument("--levels", type=int, default=22)
    qr.add_argument("--s", type=int, default=16)
    qr.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    qr.set_defaults(func=cmd_query)

    bn = sub.add_parser("bench", help="run a benchmark grid, write CSV")
    bn.add_argument("--vary", choices=["s", "N"], required=True)
    bn.add_argument("--fixed", type=int, default=0, help="the non-varying dimension")
    bn.add_argument("--values", default=None, help="comma-separated grid override")
    bn.add_argument("--backend", choices=["sim", "bgv"], default="sim")
    bn.add_argument("--out", required=True)
    bn.add_argument("--seed", type=int, default=None)
    bn.add_argument("--no-timing", action="store_true", help="write 0 wall times (stable CSV)")
    bn.set_defaults(func=cmd_bench)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
