import numpy as np
import pytest
import torch

from hypercast.embeddings import SpatialEmbedding, TimeEmbedding, combine_time
from hypercast.reference import ref_combine_time


@pytest.fixture
def table():
    torch.manual_seed(0)
    return TimeEmbedding(slots_per_day=288, dim=6)


class TestTimeLookup:
    def test_row_selection(self, table):
        e_d, e_w = table([0], [3])
        assert torch.equal(e_d[0], table.tod_table[0])
        assert torch.equal(e_w[0], table.dow_table[3])

    def test_repeated_index(self, table):
        e_d, _ = table([3, 3], [0, 0])
        assert torch.equal(e_d[0], e_d[1])

    def test_out_of_range(self, table):
        with pytest.raises(IndexError):
            table([288], [0])
        with pytest.raises(IndexError):
            table([0], [7])
        with pytest.raises(IndexError):
            table([-1], [0])

    def test_one_hot_equivalence(self, table):
        for i in (0, 17, 287):
            one_hot = torch.zeros(288)
            one_hot[i] = 1.0
            e_d, _ = table([i], [0])
            assert torch.equal(e_d[0], one_hot @ table.tod_table)

    def test_batched_shape(self, table):
        tod = np.zeros((4, 12), dtype=np.int64)
        dow = np.ones((4, 12), dtype=np.int64)
        e_d, e_w = table(tod, dow)
        assert e_d.shape == (4, 12, 6)
        assert e_w.shape == (4, 12, 6)


class TestCombine:
    def test_multiplicative_identity(self):
        e_d = torch.randn(5, 4)
        assert torch.equal(combine_time(e_d, torch.ones(5, 4)), e_d)

    def test_annihilator(self):
        e_d = torch.randn(5, 4)
        assert torch.equal(combine_time(torch.zeros(5, 4), e_d), torch.zeros(5, 4))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        e_d = rng.standard_normal((6, 8))
        e_w = rng.standard_normal((6, 8))
        out = combine_time(torch.as_tensor(e_d), torch.as_tensor(e_w)).numpy()
        np.testing.assert_allclose(out, ref_combine_time(e_d, e_w), atol=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            combine_time(torch.ones(3, 4), torch.ones(3, 5))


class TestSpatial:
    def test_seeded_init_deterministic(self):
        torch.manual_seed(42)
        a = SpatialEmbedding(10, 4)
        torch.manual_seed(42)
        b = SpatialEmbedding(10, 4)
        assert torch.equal(a.table, b.table)

    def test_all_rows_shape(self):
        emb = SpatialEmbedding(9, 5)
        assert emb().shape == (9, 5)
        assert emb([2, 4]).shape == (2, 5)

    def test_id_out_of_range(self):
        emb = SpatialEmbedding(4, 3)
        with pytest.raises(IndexError):
            emb([4])

    def test_gradient_touches_only_used_rows(self):
        emb = SpatialEmbedding(6, 3)
        loss = emb([0]).sum()
        loss.backward()
        grad = emb.table.grad
        assert grad[0].abs().sum() > 0
        assert torch.equal(grad[1:], torch.zeros(5, 3))

    def test_time_gradient_sparsity(self):
        table = TimeEmbedding(slots_per_day=12, dim=4)
        e_d, e_w = table([2, 5], [1, 1])
        (e_d.sum() + e_w.sum()).backward()
        tod_grad = table.tod_table.grad
        used = {2, 5}
        for i in range(12):
            if i in used:
                assert tod_grad[i].abs().sum() > 0
            else:
                assert torch.equal(tod_grad[i], torch.zeros(4))
        dow_grad = table.dow_table.grad
        assert dow_grad[1].abs().sum() > 0
        assert torch.equal(dow_grad[0], torch.zeros(4))
