import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radaug import vol3d
from radaug.vol3d import (Box, CropPlan, Dims3, DimMismatch, MLPWeights, NonDivisible, TokenGrid,
                          TokenPackerWeights, anyres_plan, anyres_token_budget, concat_streams, gelu,
                          mlp_project, spatial_pool, spp_project, token_count, tokenpacker3d_project)

PATCH = (4, 16, 16)


def random_grid(grid=(8, 16, 16), dim=8, seed=0):
    n = int(np.prod(grid))
    return TokenGrid(grid, np.random.default_rng(seed).normal(size=(n, dim)))


class TestTokens:
    def test_base(self):
        assert token_count((32, 256, 256), PATCH) == 2048

    def test_in_plane_quadrupling(self):
        assert token_count((32, 512, 512), PATCH) == 8192 == 4 * token_count((32, 256, 256), PATCH)

    def test_non_divisible(self):
        with pytest.raises(NonDivisible) as err:
            token_count((33, 256, 256), PATCH)
        assert err.value.axis == "depth"
        assert err.value.nearest == (32, 36)

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.sampled_from([0, 1, 2]))
    def test_doubling_an_axis_doubles(self, a, b, c, axis):
        vol = [4 * a, 16 * b, 16 * c]
        before = token_count(vol, PATCH)
        vol[axis] *= 2
        assert token_count(vol, PATCH) == 2 * before


def covers_exactly_once(plan):
    counts = np.zeros(plan.volume, dtype=int)
    for box in plan.crops:
        sl = tuple(slice(o, o + e) for o, e in zip(box.offset, box.extent))
        counts[sl] += 1
    return bool(np.all(counts == 1))


class TestAnyRes:
    def test_paper_configuration(self):
        plan = anyres_plan((64, 512, 512), (32, 256, 256), (32, 256, 256))
        assert len(plan.crops) == 8
        assert plan.global_view == (32, 256, 256)
        assert plan.crops[0].offset == (0, 0, 0) and plan.crops[1].offset == (0, 0, 256)
        assert plan.crops[-1].offset == (32, 256, 256)

    def test_identity_tiling(self):
        assert len(anyres_plan((32, 256, 256), (32, 256, 256), (32, 256, 256)).crops) == 1

    def test_rectangular(self):
        plan = anyres_plan((64, 512, 256), (32, 256, 256), (32, 256, 256))
        assert len(plan.crops) == 4

    def test_partition_by_voxel_membership(self):
        plan = anyres_plan((4, 8, 8), (2, 4, 4), (2, 4, 4))
        for z, y, x in itertools.product(range(4), range(8), range(8)):
            assert sum(b.contains(z, y, x) for b in plan.crops) == 1
        assert covers_exactly_once(plan)

    def test_rectangular_partition(self):
        assert covers_exactly_once(anyres_plan((8, 16, 8), (4, 8, 8), (4, 8, 8)))

    def test_non_divisible(self):
        with pytest.raises(NonDivisible):
            anyres_plan((64, 500, 512), (32, 256, 256), (32, 256, 256))

    def test_invariants_enforced(self):
        ext = Dims3(2, 2, 2)
        with pytest.raises(ValueError):
            CropPlan(Dims3(2, 2, 2), (), ext)
        with pytest.raises(ValueError):
            CropPlan(Dims3(2, 2, 4), (Box(Dims3(0, 0, 0), ext), Box(Dims3(0, 0, 0), ext)), ext)

    def test_budget(self):
        plan = anyres_plan((64, 512, 512), (32, 256, 256), (32, 256, 256))
        assert anyres_token_budget(plan, PATCH, 256) == sum(256 for _ in list(plan.crops) + [plan.global_view])
        assert anyres_token_budget(plan, PATCH, 256) == 2304

    def test_budget_single_crop(self):
        plan = anyres_plan((32, 256, 256), (32, 256, 256), (32, 256, 256))
        assert anyres_token_budget(plan, PATCH, 77) == 154


class TestMLP:
    def test_counts(self):
        out = mlp_project(random_grid(), 16, seed=0)
        assert out.count == 2048 and out.dim == 16 and out.grid == (8, 16, 16)

    def test_deterministic(self):
        a = mlp_project(random_grid(), 16, seed=5)
        b = mlp_project(random_grid(), 16, seed=5)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, mlp_project(random_grid(), 16, seed=6).data)

    def test_zero_input_zero_bias(self):
        w = MLPWeights.seeded(4, 3, seed=1)
        w = MLPWeights(w.w1, np.zeros(3), w.w2, w.b2)
        out = mlp_project(TokenGrid((1, 1, 2), np.zeros((2, 4))), 3, seed=1, weights=w)
        expected = gelu(np.zeros(3)) @ w.w2 + w.b2
        np.testing.assert_array_equal(out.data, np.vstack([expected, expected]))
        np.testing.assert_array_equal(out.data[0], w.b2)

    def test_weight_bounds(self):
        w = MLPWeights.seeded(64, 32, seed=0)
        assert np.abs(w.w1).max() <= 1 / 8 and np.abs(w.w2).max() <= 1 / np.sqrt(32)


def block_mean_oracle(lattice, pool):
    d, h, w, c = lattice.shape
    pd, ph, pw = pool
    out = np.zeros((d // pd, h // ph, w // pw, c))
    for i, j, k in itertools.product(range(d // pd), range(h // ph), range(w // pw)):
        cells = [lattice[i * pd + a, j * ph + b, k * pw + e]
                 for a in range(pd) for b in range(ph) for e in range(pw)]
        out[i, j, k] = sum(cells) / len(cells)
    return out


class TestSPP:
    def test_counts_and_block_oracle(self):
        g = random_grid(dim=3)
        pooled = spatial_pool(g, (2, 2, 2))
        assert pooled.grid == (4, 8, 8) and pooled.count == 256
        np.testing.assert_allclose(pooled.lattice(), block_mean_oracle(g.lattice(), (2, 2, 2)), atol=1e-12)
        assert spp_project(g, (2, 2, 2), 16, seed=0).count == 2048 // 8

    def test_identity_pool(self):
        g = random_grid(dim=4)
        np.testing.assert_array_equal(spp_project(g, (1, 1, 1), 6, seed=2).data, mlp_project(g, 6, seed=2).data)

    def test_constant_field(self):
        g = TokenGrid((4, 4, 4), np.full((64, 2), 3.25))
        np.testing.assert_array_equal(spatial_pool(g, (2, 2, 2)).data, np.full((8, 2), 3.25))

    def test_linearity(self):
        x, y = random_grid((4, 4, 6), 3, 1), random_grid((4, 4, 6), 3, 2)
        lhs = spatial_pool(TokenGrid(x.grid, x.data + y.data), (2, 2, 3)).data
        rhs = spatial_pool(x, (2, 2, 3)).data + spatial_pool(y, (2, 2, 3)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9, rtol=0)

    def test_non_divisible(self):
        with pytest.raises(NonDivisible):
            spatial_pool(random_grid((8, 16, 16)), (3, 2, 2))


class TestTokenPacker:
    def test_count(self):
        out = tokenpacker3d_project(random_grid(), (2, 2, 2), 16, seed=0)
        assert out.count == 256 and out.grid == (4, 8, 8) and out.dim == 16

    def test_identity_single_key(self):
        g = random_grid((2, 4, 4), 5)
        w = TokenPackerWeights.identity(5, 7, seed=0)
        _, trace = tokenpacker3d_project(g, (1, 1, 1), 7, seed=0, weights=w, return_trace=True)
        np.testing.assert_array_equal(trace.queries, g.data)
        np.testing.assert_array_equal(trace.attention, np.ones((32, 1)))
        np.testing.assert_allclose(trace.attended, g.data, atol=1e-15)

    def test_softmax_rows(self):
        _, trace = tokenpacker3d_project(random_grid(), (2, 2, 2), 16, seed=3, return_trace=True)
        assert trace.attention.shape == (256, 8)
        np.testing.assert_allclose(trace.attention.sum(axis=1), 1.0, atol=1e-6)

    def test_factor_two_interpolation_is_block_mean(self):
        g = random_grid((4, 8, 8), 3)
        _, trace = tokenpacker3d_project(g, (2, 2, 2), 3, seed=0, return_trace=True)
        np.testing.assert_allclose(trace.queries.reshape(2, 4, 4, 3),
                                   block_mean_oracle(g.lattice(), (2, 2, 2)), atol=1e-12)

    def test_deterministic(self):
        a = tokenpacker3d_project(random_grid(), (2, 2, 2), 16, seed=9)
        b = tokenpacker3d_project(random_grid(), (2, 2, 2), 16, seed=9)
        assert np.array_equal(a.data, b.data) and np.all(np.isfinite(a.data))


class TestConcat:
    def test_additive_and_ordered(self):
        a, b = random_grid(seed=1), random_grid(seed=2)
        out = concat_streams(a, b)
        assert out.count == 4096 and out.grid == (4096,)
        assert np.array_equal(out.data[0], a.data[0]) and np.array_equal(out.data[2048], b.data[0])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            concat_streams(random_grid(dim=3), random_grid(dim=4))

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            TokenGrid((0,), np.zeros((0, 4)))


def test_geometry_report_paper_config():
    rep = vol3d.geometry_report((64, 512, 512), PATCH, "spp", crop=(32, 256, 256))
    assert rep["anyres"]["n_crops"] == 8
    assert rep["vit_tokens_per_view"] == 2048
    assert rep["projector_tokens_per_view"] == 256
    assert rep["sequence_length"] == 9 * 256
    assert vol3d.geometry_report((32, 256, 256), PATCH, with_mask=True)["sequence_length"] == 4096
