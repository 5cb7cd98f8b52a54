"""Homomorphic compression of encrypted sparse vectors, and a private
database query protocol built on it, with an exact slot-simulator backend
and a minimal BGV backend."""

from .compress import (
    CompressedAnswer,
    CompressionParams,
    bsgs_matvec,
    build_plan,
    build_vandermonde,
    comp,
    comp_idx,
    comp_masked,
    decomp,
    decomp_idx,
    encode_vector,
    encrypt_vector,
    pack_pair,
    plan_rotation_amounts,
    power_fermat,
    precompute_masked_matrix,
)
from .heiface import (
    BackendMismatch,
    Ciphertext,
    HeParams,
    KeySet,
    LevelExhausted,
    MissingRotationKey,
    OpCounters,
    SimulatorBackend,
    SlotMatrix,
    op_counters,
)
from .pdq import (
    ClientState,
    Database,
    PdqQuery,
    PdqResult,
    QueryOverflow,
    answer,
    match_exact,
    mask,
    query,
    recover,
    setup_client,
)
from .zpcore import (
    InconsistentSystem,
    ModulusTooSmall,
    NotFullySplit,
    PrimeField,
    SingularSystem,
    SparseVector,
    ZeroInverse,
    ZpPoly,
    elementary_symmetric_oracle,
    find_roots,
    newton_coeffs,
    reconst_idx,
    solve_vandermonde_sub,
    strip_zero_roots,
    vandermonde_entry,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
