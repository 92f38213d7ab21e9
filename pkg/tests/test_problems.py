import numpy as np
import pytest
from hypothesis import given, strategies as st

from biutamp.exceptions import DomainError
from biutamp.problems import (Correlated, IidGaussian, IllConditioned, LowRank, NonZeroMean, add_noise,
                              family_from_dict, gen_cs_mu, gen_dl, gen_matrix, load_instance, save_instance)


def test_cs_mu_shapes_and_pinning():
    inst = gen_cs_mu(11, 256, 150, 10, 40, Correlated(0.3), seed=0)
    assert len(inst.blocks) == 11 and inst.blocks[0].shape == (150, 256)
    assert inst.b[0] == 1.0
    assert np.count_nonzero(inst.c) == 10
    assert inst.y.shape == (150,)


def test_realized_snr_exact():
    inst = gen_cs_mu(3, 40, 30, 5, 25.0, IidGaussian(), seed=4)
    signal = inst.A_b @ inst.c
    noise = inst.y - signal
    snr = 10 * np.log10(np.sum(signal**2) / np.sum(noise**2))
    assert abs(snr - 25.0) < 1e-9
    assert np.isclose(1 / inst.beta, np.sum(noise**2) / noise.size)


def test_infinite_snr_is_noiseless():
    y, beta = add_noise(np.ones(5), np.inf, np.random.default_rng(0))
    np.testing.assert_array_equal(y, np.ones(5))
    assert np.isinf(beta)


def test_dl_column_sparsity():
    inst = gen_dl(20, 30, 4, 6, 5, 40, Correlated(0.1), seed=1)
    assert inst.C.shape == (30, 6)
    assert all(np.count_nonzero(inst.C[:, l]) == 5 for l in range(6))
    assert inst.Y.shape == (20, 6)


def test_zero_sparsity_allowed():
    inst = gen_dl(5, 6, 2, 3, 0, np.inf, seed=0)
    assert not inst.C.any() and not inst.Y.any()


def test_family_properties():
    rng = np.random.default_rng(0)
    A = gen_matrix(LowRank(5), 40, 60, rng)
    assert np.linalg.matrix_rank(A) == 5
    s = np.linalg.svd(gen_matrix(IllConditioned(1e6), 30, 50, rng), compute_uv=False)
    assert np.isclose(s[0] / s[-1], 1e6, rtol=1e-6)
    B = gen_matrix(NonZeroMean(10.0), 200, 200, rng)
    assert abs(B.mean() - 10.0) < 0.05


def test_nonzero_mean_first_block_variance():
    inst = gen_cs_mu(3, 200, 150, 5, 40, NonZeroMean(0.0), seed=2)
    assert 18 < np.var(inst.blocks[0]) < 22
    assert 0.9 < np.var(inst.blocks[1]) < 1.1


def test_rejects_bad_parameters():
    with pytest.raises(DomainError):
        Correlated(1.5)
    with pytest.raises(DomainError):
        IllConditioned(0.5)
    with pytest.raises(DomainError):
        gen_cs_mu(2, 10, 5, 11, 40, seed=0)
    with pytest.raises(DomainError):
        gen_matrix(LowRank(20), 5, 10, seed=0)
    with pytest.raises(DomainError):
        family_from_dict({"family": "nope"})


def test_seed_reproducible():
    a = gen_cs_mu(3, 20, 10, 2, 30, Correlated(0.3), seed=9)
    b = gen_cs_mu(3, 20, 10, 2, 30, Correlated(0.3), seed=9)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.blocks[2], b.blocks[2])


def test_save_load_round_trip(tmp_path):
    for inst in (gen_cs_mu(3, 20, 10, 2, 30, Correlated(0.3), seed=9),
                 gen_dl(6, 8, 3, 2, 2, 30, NonZeroMean(1.0), seed=3)):
        path = tmp_path / "inst.npz"
        save_instance(path, inst)
        back = load_instance(path)
        assert type(back) is type(inst)
        assert back.family == inst.family and back.beta == inst.beta
        np.testing.assert_array_equal(np.asarray(back.blocks), np.asarray(inst.blocks))
        np.testing.assert_array_equal(back.b, inst.b)


@given(st.integers(1, 5), st.integers(2, 30), st.integers(2, 20), st.data())
def test_cs_mu_support_size(K, N, M, data):
    S = data.draw(st.integers(0, N))
    inst = gen_cs_mu(K, N, M, S, 30, IidGaussian(), seed=data.draw(st.integers(0, 2**31)))
    assert np.count_nonzero(inst.c) == S
    assert inst.b[0] == 1.0 and inst.b.shape == (K,)
