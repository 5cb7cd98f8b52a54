"""Backend contract on the simulator: slot semantics (against hand-frozen
matrices), key discipline, level bookkeeping, counters, serialization."""

import pytest

from hcpdq.heiface import (
    BackendMismatch,
    HeParams,
    LevelExhausted,
    MissingRotationKey,
    SimulatorBackend,
    SlotMatrix,
    op_counters,
    peek_blob_params,
)


class TestHeParams:
    def test_valid(self):
        HeParams(n=8, p=17, max_level=2)
        HeParams(n=1 << 13, p=65537, max_level=3)

    def test_n_not_power_of_two(self):
        with pytest.raises(ValueError):
            HeParams(n=6, p=13, max_level=1)

    def test_p_not_prime(self):
        with pytest.raises(ValueError):
            HeParams(n=8, p=15, max_level=1)

    def test_congruence(self):
        with pytest.raises(ValueError):
            HeParams(n=8, p=13, max_level=1)  # 13 != 1 (mod 16)
        # 40960 = 5 * 2^13: good for n = 2^12, one power short of n = 2^13
        HeParams(n=1 << 12, p=40961, max_level=1)
        with pytest.raises(ValueError):
            HeParams(n=1 << 13, p=40961, max_level=1)

    def test_level_budget(self):
        with pytest.raises(ValueError):
            HeParams(n=8, p=17, max_level=0)


class TestSlotMatrix:
    def test_vector_layout(self):
        m = SlotMatrix.from_vector([1, 2, 3, 4, 5, 6, 7, 8], 8, 17)
        assert m.rows.tolist() == [[1, 2, 3, 4], [5, 6, 7, 8]]

    def test_padding(self):
        m = SlotMatrix.from_vector([9, 9], 8, 17)
        assert m.rows.tolist() == [[9, 9, 0, 0], [0, 0, 0, 0]]

    def test_rot_row_definition(self):
        # [v_1..v_4] -> [v_2, v_3, v_4, v_1] on each row independently
        m = SlotMatrix.from_rows([1, 2, 3, 4], [5, 6, 7, 8], 17)
        assert m.rot_row(1).rows.tolist() == [[2, 3, 4, 1], [6, 7, 8, 5]]

    def test_rot_col_definition(self):
        m = SlotMatrix.from_rows([1, 2], [3, 4], 17)
        assert m.rot_col().rows.tolist() == [[3, 4], [1, 2]]


@pytest.fixture()
def sim():
    return SimulatorBackend(HeParams(n=8, p=17, max_level=3), seed=7)


@pytest.fixture()
def keys(sim):
    return sim.keygen({1, 2}, col_swap=True)


class TestKeyDiscipline:
    def test_keygen_example(self, sim, keys):
        assert keys.rotation_amounts == frozenset({1, 2})

    def test_rejects_out_of_range_amounts(self, sim):
        with pytest.raises(ValueError):
            sim.keygen({5})  # n/2 = 4

    def test_undeclared_rotation(self, sim, keys):
        c = sim.encrypt(SlotMatrix.constant(1, 8, 17), keys)
        with pytest.raises(MissingRotationKey):
            sim.rot_row(c, 3, keys)

    def test_missing_col_swap(self, sim):
        k = sim.keygen({1}, col_swap=False)
        c = sim.encrypt(SlotMatrix.constant(1, 8, 17), k)
        with pytest.raises(MissingRotationKey):
            sim.rot_col(c, k)

    def test_cross_key_mixing(self, sim, keys):
        other = sim.keygen({1}, col_swap=True)
        c1 = sim.encrypt(SlotMatrix.constant(1, 8, 17), keys)
        c2 = sim.encrypt(SlotMatrix.constant(2, 8, 17), other)
        with pytest.raises(BackendMismatch):
            sim.add(c1, c2)
        with pytest.raises(BackendMismatch):
            sim.decrypt(c1, other)

    def test_public_only_cannot_decrypt(self, sim, keys):
        c = sim.encrypt(SlotMatrix.constant(3, 8, 17), keys)
        with pytest.raises(BackendMismatch):
            sim.decrypt(c, keys.public_only())


class TestOps:
    def test_encrypt_decrypt(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        assert sim.decrypt(sim.encrypt(m, keys), keys) == m

    def test_fresh_level(self, sim, keys):
        c = sim.encrypt(SlotMatrix.zeros(8, 17), keys)
        assert c.level == 3

    def test_add_identity(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        z = sim.encrypt(SlotMatrix.zeros(8, 17), keys)
        assert sim.decrypt(sim.add(sim.encrypt(m, keys), z), keys) == m

    def test_add_random(self, sim, keys, rng):
        m1, m2 = SlotMatrix.random(8, 17, rng), SlotMatrix.random(8, 17, rng)
        got = sim.decrypt(sim.add(sim.encrypt(m1, keys), sim.encrypt(m2, keys)), keys)
        want = [(a + b) % 17 for a, b in zip(m1.to_vector(), m2.to_vector())]
        assert got.to_vector() == want

    def test_add_level_is_min(self, sim, keys, rng):
        ones = SlotMatrix.constant(1, 8, 17)
        c1 = sim.encrypt(ones, keys)  # level 3
        c2 = sim.mul_plain(sim.encrypt(ones, keys), ones)  # level 2
        assert sim.add(c1, c2).level == 2

    def test_mul_identity_and_level(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        ones = sim.encrypt(SlotMatrix.constant(1, 8, 17), keys)
        c = sim.mul(sim.encrypt(m, keys), ones, keys)
        assert sim.decrypt(c, keys) == m
        assert c.level == 2

    def test_mul_random_slotwise(self, sim, keys, rng):
        m1, m2 = SlotMatrix.random(8, 17, rng), SlotMatrix.random(8, 17, rng)
        got = sim.decrypt(
            sim.mul(sim.encrypt(m1, keys), sim.encrypt(m2, keys), keys), keys
        )
        want = [a * b % 17 for a, b in zip(m1.to_vector(), m2.to_vector())]
        assert got.to_vector() == want

    def test_level_exhaustion(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        c = sim.encrypt(m, keys)
        ones = SlotMatrix.constant(1, 8, 17)
        for _ in range(3):
            c = sim.mul_plain(c, ones)
        assert c.level == 0
        with pytest.raises(LevelExhausted):
            sim.mul_plain(c, ones)
        with pytest.raises(LevelExhausted):
            sim.mul(c, c, keys)

    def test_rot_row_identity_cases(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        c = sim.encrypt(m, keys)
        assert sim.decrypt(sim.rot_row(c, 0, keys), keys) == m
        assert sim.decrypt(sim.rot_row(c, 4, keys), keys) == m  # full cycle

    def test_rot_composition(self, sim, keys, rng):
        # rotating by 1 then 2 equals rotating by 3 (mod n/2)
        m = SlotMatrix.random(8, 17, rng)
        c = sim.encrypt(m, keys)
        once = sim.rot_row(sim.rot_row(c, 1, keys), 2, keys)
        assert sim.decrypt(once, keys) == m.rot_row(3)

    def test_rot_col_involution(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        c = sim.encrypt(m, keys)
        assert sim.decrypt(sim.rot_col(sim.rot_col(c, keys), keys), keys) == m


class TestCounters:
    def test_fresh_session_zero(self):
        sim = SimulatorBackend(HeParams(n=8, p=17, max_level=2))
        assert op_counters(sim) == {
            "keyswitches": 0,
            "ct_mults": 0,
            "pt_mults": 0,
            "adds": 0,
        }

    def test_counting_contract(self, sim, keys, rng):
        sim.reset_counters()
        m = SlotMatrix.random(8, 17, rng)
        c = sim.encrypt(m, keys)
        sim.rot_row(c, 1, keys)
        assert op_counters(sim)["keyswitches"] == 1
        sim.rot_col(c, keys)
        assert op_counters(sim)["keyswitches"] == 2
        sim.mul(c, c, keys)
        counts = op_counters(sim)
        assert counts["keyswitches"] == 3  # relinearization counts
        assert counts["ct_mults"] == 1
        sim.mul_plain(c, m)
        sim.add(c, c)
        sim.add_plain(c, m)
        counts = op_counters(sim)
        assert counts["pt_mults"] == 1
        assert counts["adds"] == 2


class TestSerialization:
    def test_ciphertext_round_trip(self, sim, keys, rng):
        m = SlotMatrix.random(8, 17, rng)
        c = sim.mul_plain(sim.encrypt(m, keys), SlotMatrix.constant(2, 8, 17))
        blob = sim.serialize_ciphertext(c)
        assert blob[:4] == b"HCV1"
        back = sim.deserialize_ciphertext(blob)
        assert back.level == c.level
        assert sim.decrypt(back, keys) == sim.decrypt(c, keys)

    def test_keyset_round_trip(self, sim, keys):
        blob = sim.serialize_keyset(keys, include_secret=True)
        back = sim.deserialize_keyset(blob)
        assert back.key_id == keys.key_id
        assert back.rotation_amounts == keys.rotation_amounts
        assert back.secret == keys.secret
        pub = sim.deserialize_keyset(sim.serialize_keyset(keys, include_secret=False))
        assert pub.secret is None

    def test_peek(self, sim, keys):
        blob = sim.serialize_keyset(keys)
        backend_id, kind, he = peek_blob_params(blob)
        assert backend_id == sim.backend_id
        assert (he.n, he.p, he.max_level) == (8, 17, 3)

    def test_wrong_backend_rejected(self, sim, keys):
        blob = bytearray(sim.serialize_ciphertext(sim.encrypt(SlotMatrix.zeros(8, 17), keys)))
        blob[4] = 0x02  # claim BGV
        with pytest.raises(BackendMismatch):
            sim.deserialize_ciphertext(bytes(blob))
