"""Ordering module tests: hyperplane, embedding invariants, loss values,
hit/con rates, and order labels."""
import numpy as np
import pytest

from hypercut.diffcore import Tensor
from hypercut.ordering import (Hyperplane, OrderEncoder, OrderTrainConfig,
                               con_rate, hit_rate, hypercut_loss, order_label,
                               order_labels, project_embeddings_2d,
                               sample_hyperplane, save_order_model,
                               load_order_model, separation_product,
                               symmetric_pair_indices, train_order_encoder)

DIM = 16


@pytest.fixture(scope="module")
def encoder():
    return OrderEncoder(16, 16, 1, dim=DIM, seed=0)


@pytest.fixture(scope="module")
def hplane():
    return sample_hyperplane(DIM, seed=1)


def rand_pair(seed=0, shape=(16, 16, 1)):
    rng = np.random.default_rng(seed)
    return (rng.random(shape).astype(np.float32),
            rng.random(shape).astype(np.float32))


def test_hyperplane_unit_norm_enforced():
    with pytest.raises(ValueError):
        Hyperplane(normal=np.array([1.0, 1.0], dtype=np.float32), seed=0)
    h = sample_hyperplane(32, seed=3)
    np.testing.assert_allclose(np.linalg.norm(h.normal), 1.0, atol=1e-6)


def test_hyperplane_immutable():
    h = sample_hyperplane(8, seed=0)
    with pytest.raises(ValueError):
        h.normal[0] = 5.0


def test_sample_hyperplane_deterministic():
    np.testing.assert_array_equal(sample_hyperplane(8, seed=4).normal,
                                  sample_hyperplane(8, seed=4).normal)


def test_embedding_unit_norm_and_shape(encoder):
    a, b = rand_pair(0)
    e = encoder.embed_pair(a, b)
    assert e.shape == (DIM,)
    np.testing.assert_allclose(np.linalg.norm(e), 1.0, atol=1e-5)


def test_embedding_argument_order_matters(encoder):
    a, b = rand_pair(1)
    e_ab = encoder.embed_pair(a, b)
    e_ba = encoder.embed_pair(b, a)
    assert not np.allclose(e_ab, e_ba)


def test_identical_pair_is_swap_invariant(encoder, hplane):
    a, _ = rand_pair(2)
    np.testing.assert_array_equal(encoder.embed_pair(a, a),
                                  encoder.embed_pair(a, a))
    assert separation_product(encoder, hplane, a, a) >= 0.0


def test_projection_bounded(encoder, hplane):
    for seed in range(5):
        a, b = rand_pair(seed)
        proj = float(encoder.embed_pair(a, b) @ hplane.normal)
        assert -1.0 <= proj <= 1.0


def test_antisymmetry_under_hit(encoder, hplane):
    """Whenever the product is negative the two sides must differ in sign."""
    for seed in range(8):
        a, b = rand_pair(seed)
        fwd = float(encoder.embed_pair(a, b) @ hplane.normal)
        bwd = float(encoder.embed_pair(b, a) @ hplane.normal)
        if fwd * bwd < 0:
            assert np.sign(fwd) == -np.sign(bwd)


def test_symmetric_pair_indices():
    assert symmetric_pair_indices(7) == [(0, 6), (1, 5), (2, 4)]
    assert symmetric_pair_indices(6) == [(0, 5), (1, 4), (2, 3)]
    assert symmetric_pair_indices(2) == [(0, 1)]


def test_softplus_loss_reference_values():
    """softplus(-1) and softplus(+1) against the analytic values."""
    np.testing.assert_allclose(float(Tensor(np.array(-1.0)).softplus().data),
                               0.313262, atol=1e-6)
    np.testing.assert_allclose(float(Tensor(np.array(1.0)).softplus().data),
                               1.313262, atol=1e-6)


def test_hypercut_loss_scalar_and_floor(encoder, hplane):
    rng = np.random.default_rng(3)
    a = rng.random((6, 16, 16, 1)).astype(np.float32)
    b = rng.random((6, 16, 16, 1)).astype(np.float32)
    loss = hypercut_loss(encoder, hplane, a, b)
    assert loss.data.size == 1
    assert float(loss.data) >= np.log1p(np.exp(-1)) - 1e-6  # softplus(-1) floor


def test_hypercut_loss_empty_batch(encoder, hplane):
    empty = np.empty((0, 16, 16, 1), dtype=np.float32)
    with pytest.raises(ValueError):
        hypercut_loss(encoder, hplane, empty, empty)


def test_hit_rate_known_fixture(encoder, hplane):
    """Static sequences can never be hits; moving random pairs usually are
    not guaranteed, so only the static half is pinned."""
    static = np.repeat(np.random.default_rng(0)
                       .random((4, 1, 16, 16, 1)).astype(np.float32), 7, axis=1)
    assert hit_rate(encoder, hplane, static) == 0.0


def test_con_rate_enumeration():
    """Hand-built side patterns: (+,+,-) agrees on 1 of 3 pairs at X=2 and
    never at X=3; con is computed from the forward projections alone."""
    seqs = np.zeros((1, 7, 16, 16, 1), dtype=np.float32)

    class SidesStub:
        def __init__(self, sides):
            self.sides = np.asarray(sides, dtype=np.float32)
            self.calls = 0

        def embed_pairs(self, a, b):
            out = np.zeros((a.shape[0], 4), dtype=np.float32)
            out[:, 0] = self.sides  # one projection per pair, forward pass only
            return Tensor(out)

    h = Hyperplane(normal=np.array([1, 0, 0, 0], dtype=np.float32), seed=0)
    stub = SidesStub([0.5, 0.5, -0.5])
    assert con_rate(stub, h, seqs, 2) == pytest.approx(1 / 3)
    stub2 = SidesStub([0.5, 0.5, -0.5])
    assert con_rate(stub2, h, seqs, 3) == 0.0
    stub3 = SidesStub([-0.2, -0.4, -0.9])
    assert con_rate(stub3, h, seqs, 3) == 1.0


def test_con_rate_needs_enough_pairs(encoder, hplane):
    seqs = np.zeros((1, 3, 16, 16, 1), dtype=np.float32)  # one pair only
    with pytest.raises(ValueError):
        con_rate(encoder, hplane, seqs, 2)


def test_order_label_majority_and_tiebreak():
    class SidesStub:
        def __init__(self, proj):
            self.proj = np.asarray(proj, dtype=np.float32)

        def embed_pairs(self, a, b):
            out = np.zeros((a.shape[0], 4), dtype=np.float32)
            out[:, 0] = self.proj
            return Tensor(out)

    h = Hyperplane(normal=np.array([1, 0, 0, 0], dtype=np.float32), seed=0)
    frames = np.zeros((7, 16, 16, 1), dtype=np.float32)
    # majority negative -> label 0
    lbl = order_label(SidesStub([-0.5, -0.1, 0.3]), h, frames)
    assert lbl.value == 0 and lbl.margin == pytest.approx(0.5)
    # majority positive -> label 1
    assert order_label(SidesStub([0.5, 0.1, -0.3]), h, frames).value == 1
    # even split resolved by the largest |projection| (2-pair sequence)
    frames5 = np.zeros((5, 16, 16, 1), dtype=np.float32)
    assert order_label(SidesStub([-0.9, 0.2]), h, frames5).value == 0
    assert order_label(SidesStub([0.9, -0.2]), h, frames5).value == 1


def test_order_label_unorientable():
    class ZeroStub:
        def embed_pairs(self, a, b):
            return Tensor(np.zeros((a.shape[0], 4), dtype=np.float32))

    h = Hyperplane(normal=np.array([1, 0, 0, 0], dtype=np.float32), seed=0)
    frames = np.zeros((7, 16, 16, 1), dtype=np.float32)
    with pytest.raises(ValueError):
        order_label(ZeroStub(), h, frames)


def test_order_labels_vectorized_matches_scalar(encoder, hplane):
    rng = np.random.default_rng(5)
    seqs = rng.random((6, 7, 16, 16, 1)).astype(np.float32)
    batch = order_labels(encoder, hplane, seqs)
    singles = [order_label(encoder, hplane, s).value for s in seqs]
    np.testing.assert_array_equal(batch, singles)


def test_reversed_sequence_flips_label_when_all_hit(encoder, hplane):
    for seed in range(6):
        seqs = np.random.default_rng(seed).random((1, 7, 16, 16, 1)).astype(np.float32)
        if hit_rate(encoder, hplane, seqs) == 1.0:
            fwd = order_label(encoder, hplane, seqs[0])
            bwd = order_label(encoder, hplane, seqs[0, ::-1])
            assert fwd.value != bwd.value


def test_project_embeddings_2d_shape_and_sides(encoder, hplane):
    rng = np.random.default_rng(7)
    seqs = rng.random((4, 7, 16, 16, 1)).astype(np.float32)
    points, sides = project_embeddings_2d(encoder, hplane, seqs)
    assert points.shape == (24, 2)  # 4 seqs x 3 pairs x forward+reversed
    assert set(np.unique(sides)) <= {-1, 1}
    with pytest.raises(ValueError):
        project_embeddings_2d(encoder, hplane, seqs[:1])


def test_train_order_encoder_deterministic_and_logged():
    rng = np.random.default_rng(0)
    # tiny moving-bar dataset: bright column sweeping right
    seqs = np.zeros((8, 7, 16, 16, 1), dtype=np.float32)
    for i in range(8):
        for k in range(7):
            seqs[i, k, :, 2 + k + (i % 2), 0] = 1.0
    cfg = OrderTrainConfig(epochs=2, batch_size=8, lr=1e-3, dim=8, seed=0)
    r1 = train_order_encoder(seqs, cfg)
    r2 = train_order_encoder(seqs, cfg)
    for k, v in r1.encoder.state().items():
        np.testing.assert_array_equal(v, r2.encoder.state()[k])
    assert len(r1.log) >= 2
    assert "loss=" in r1.log[0] and "hit=" in r1.log[0]
    first = float(r1.log[0].split("loss=")[1].split()[0])
    last = float(r1.log[-1].split("loss=")[1].split()[0])
    assert last < first


def test_train_reports_degenerate_static_data():
    static = np.repeat(np.random.default_rng(1)
                       .random((6, 1, 16, 16, 1)).astype(np.float32), 7, axis=1)
    cfg = OrderTrainConfig(epochs=1, batch_size=8, lr=1e-3, dim=8, seed=0)
    res = train_order_encoder(static, cfg)
    assert res.degenerate
    assert "degenerate" in res.log[-1]


def test_train_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train_order_encoder(np.empty((0, 7, 16, 16, 1), dtype=np.float32),
                            OrderTrainConfig(epochs=1))


def test_save_load_roundtrip(tmp_path, encoder, hplane):
    save_order_model(tmp_path / "m", encoder, hplane)
    enc2, h2 = load_order_model(tmp_path / "m")
    a, b = rand_pair(9)
    np.testing.assert_array_equal(encoder.embed_pair(a, b),
                                  enc2.embed_pair(a, b))
    np.testing.assert_array_equal(hplane.normal, h2.normal)
    assert h2.seed == hplane.seed


def test_hyperplane_sidecar_magic(tmp_path, encoder, hplane):
    save_order_model(tmp_path / "m", encoder, hplane)
    sidecar = tmp_path / "m" / "hyperplane.bin"
    raw = bytearray(sidecar.read_bytes())
    raw[:5] = b"WRONG"
    sidecar.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_order_model(tmp_path / "m")
