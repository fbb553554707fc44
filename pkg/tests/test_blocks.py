"""Tests for the attention and MLP sublayers and their compositions."""

import numpy as np
import pytest

from odeformer.blocks import (
    AttentionParams,
    MlpParams,
    apply_block,
    attention,
    init_block_params,
    mlp,
    norm_count,
    parallel_block,
    scale_branch_outputs,
    sequential_block,
    stochastic_depth_gate,
    survival_probability,
    zero_branch_outputs,
)
from odeformer.config import BlockConfig
from odeformer.errors import ConfigError, ContractError
from odeformer.tensor import Tensor, layer_norm


def _attn(wv, wo, d=2, heads=1):
    z = lambda *s: Tensor(np.zeros(s))  # noqa: E731
    return AttentionParams(
        wq=Tensor(np.ones((d, d))), bq=z(d), wk=Tensor(np.ones((d, d))), bk=z(d),
        wv=Tensor(wv), bv=z(d), wo=Tensor(wo), bo=z(d), heads=heads,
    )


class TestAttention:
    def test_zero_output_projection(self, make_block):
        p, _, x = make_block()
        p.attn.wo.data[...] = 0.0
        assert np.array_equal(attention(x, p.attn).data, np.zeros(x.shape))

    def test_single_token(self):
        """softmax over one logit is 1, so the output is x Wv Wo."""
        p = _attn(wv=[[1.0, 2.0], [3.0, 4.0]], wo=[[1.0, 0.0], [1.0, 1.0]])
        out = attention(Tensor([[1.0, 2.0]]), p)
        assert out.data.tolist() == [[17.0, 10.0]]

    def test_permutation_equivariant(self, make_block):
        p, _, x = make_block(length=5)
        perm = np.array([3, 0, 4, 1, 2])
        a = attention(Tensor(x.data[perm]), p.attn).data
        b = attention(x, p.attn).data[perm]
        assert np.max(np.abs(a - b)) < 1e-12

    def test_heads_must_divide_dim(self):
        p = _attn(wv=np.eye(4), wo=np.eye(4), d=4, heads=3)
        with pytest.raises(ConfigError):
            attention(Tensor(np.ones((2, 4))), p)

    def test_causal_ignores_the_future(self, make_block):
        p, _, x = make_block(length=4)
        changed = x.data.copy()
        changed[3] += 1.0
        a = attention(x, p.attn, causal=True).data
        b = attention(Tensor(changed), p.attn, causal=True).data
        assert np.array_equal(a[:3], b[:3])
        assert not np.array_equal(a[3], b[3])

    def test_batched_matches_single(self, make_block):
        p, _, x = make_block()
        batched = attention(Tensor(np.stack([x.data, x.data[::-1]])), p.attn).data
        assert np.allclose(batched[0], attention(x, p.attn).data, atol=1e-14)


class TestMlp:
    def test_zero_output(self, make_block):
        p, _, x = make_block()
        p.mlp.w2.data[...] = 0.0
        assert np.array_equal(mlp(x, p.mlp).data, np.zeros(x.shape))

    def test_scalar(self):
        one, zero = Tensor([[1.0]]), Tensor([0.0])
        out = mlp(Tensor([[1.0]]), MlpParams(w1=one, b1=zero, w2=one, b2=zero))
        assert out.data[0, 0] == pytest.approx(0.841345, abs=1e-6)

    def test_position_independent(self, make_block):
        p, _, x = make_block(length=4)
        full = mlp(x, p.mlp).data
        rows = np.concatenate([mlp(Tensor(x.data[i : i + 1]), p.mlp).data for i in range(4)])
        assert np.allclose(full, rows, atol=1e-14)


class TestSequentialBlock:
    def test_zero_weights_are_identity(self, make_block):
        p, cfg, x = make_block(variant="sequential", norm_variant="none")
        zero_branch_outputs(p)
        assert np.array_equal(sequential_block(x, p, cfg).data, x.data)

    def test_two_stage_composition(self, make_block):
        p, cfg, x = make_block(variant="sequential", norm_variant="none")
        x1 = x + attention(x, p.attn)
        expected = x1 + mlp(x1, p.mlp)
        assert np.array_equal(sequential_block(x, p, cfg).data, expected.data)

    def test_difference_from_parallel(self, make_block):
        p, cfg, x = make_block(variant="sequential", norm_variant="none")
        seq = sequential_block(x, p, cfg).data
        par = parallel_block(x, p, cfg.model_copy(update={"variant": "parallel"})).data
        g = attention(x, p.attn)
        expected = mlp(x + g, p.mlp).data - mlp(x, p.mlp).data
        assert np.allclose(seq - par, expected, atol=1e-12)

    def test_pre_norm(self, make_block):
        p, cfg, x = make_block(variant="sequential", norm_variant="A")
        n0, n1 = p.norms
        x1 = x + attention(layer_norm(x, n0.gamma, n0.beta), p.attn)
        expected = x1 + mlp(layer_norm(x1, n1.gamma, n1.beta), p.mlp)
        assert np.array_equal(sequential_block(x, p, cfg).data, expected.data)

    def test_wrong_variant(self, make_block):
        p, cfg, x = make_block(variant="parallel")
        with pytest.raises(ContractError):
            sequential_block(x, p, cfg)


class TestParallelBlock:
    def test_zero_weights_are_identity(self, make_block):
        p, cfg, x = make_block(norm_variant="none")
        zero_branch_outputs(p)
        assert np.array_equal(parallel_block(x, p, cfg).data, x.data)

    def test_branch_sum(self, make_block):
        p, cfg, x = make_block(norm_variant="none")
        f, g = mlp(x, p.mlp), attention(x, p.attn)
        out = parallel_block(x, p, cfg).data
        assert np.array_equal(out, (x + (f + g)).data)
        assert np.array_equal(out, (x + (g + f)).data)

    def test_mlp_branch_ablation(self, make_block):
        p, cfg, x = make_block(norm_variant="none")
        p.mlp.w2.data[...] = 0.0
        p.mlp.b2.data[...] = 0.0
        expected = (x + attention(x, p.attn)).data
        assert np.allclose(parallel_block(x, p, cfg).data, expected, atol=1e-15)

    def test_shared_pre_norm(self, make_block):
        p, cfg, x = make_block(norm_variant="A")
        y = layer_norm(x, p.norms[0].gamma, p.norms[0].beta)
        expected = x + (mlp(y, p.mlp) + attention(y, p.attn))
        assert np.array_equal(parallel_block(x, p, cfg).data, expected.data)

    def test_per_branch_norms(self, make_block):
        p, cfg, x = make_block(norm_variant="B")
        n0, n1 = p.norms
        expected = x + (mlp(layer_norm(x, n0.gamma, n0.beta), p.mlp) + attention(layer_norm(x, n1.gamma, n1.beta), p.attn))
        assert np.array_equal(parallel_block(x, p, cfg).data, expected.data)

    def test_post_norm(self, make_block):
        p, cfg, x = make_block(norm_variant="C")
        inner = x + (mlp(x, p.mlp) + attention(x, p.attn))
        expected = layer_norm(inner, p.norms[0].gamma, p.norms[0].beta)
        assert np.array_equal(parallel_block(x, p, cfg).data, expected.data)

    @pytest.mark.parametrize("variant", ["parallel", "sequential"])
    @pytest.mark.parametrize("norm_variant", ["A", "B", "none"])
    def test_residual_identity(self, make_block, variant, norm_variant):
        p, cfg, x = make_block(variant=variant, norm_variant=norm_variant, seed=3)
        zero_branch_outputs(p)
        assert np.array_equal(apply_block(x, p, cfg).data, x.data)

    def test_residual_identity_post_norm(self, make_block):
        p, cfg, x = make_block(norm_variant="C")
        zero_branch_outputs(p)
        expected = layer_norm(x, p.norms[0].gamma, p.norms[0].beta)
        assert np.array_equal(parallel_block(x, p, cfg).data, expected.data)

    def test_permutation_equivariant(self, make_block):
        p, cfg, x = make_block(length=5, norm_variant="A")
        perm = np.array([4, 2, 0, 1, 3])
        a = parallel_block(Tensor(x.data[perm]), p, cfg).data
        b = parallel_block(x, p, cfg).data[perm]
        assert np.max(np.abs(a - b)) < 1e-12

    def test_missing_norms(self, make_block):
        p, _, x = make_block(norm_variant="none")
        with pytest.raises(ConfigError):
            parallel_block(x, p, BlockConfig(norm_variant="B"))


class TestFirstOrderAgreement:
    """Sequential and parallel blocks discretize the same field to first order."""

    def _gap(self, eps):
        rng = np.random.default_rng(7)
        p = init_block_params(4, 2, 8, 0, rng, std=0.5)
        x = Tensor(rng.uniform(-1.0, 1.0, size=(3, 4)))
        scale_branch_outputs(p, eps)
        seq = sequential_block(x, p, BlockConfig(variant="sequential", norm_variant="none")).data
        par = parallel_block(x, p, BlockConfig(variant="parallel", norm_variant="none")).data
        return np.linalg.norm(seq - par)

    def test_gap_is_second_order(self):
        gaps = [self._gap(eps) for eps in (1e-2, 5e-3, 2.5e-3)]
        for big, small in zip(gaps, gaps[1:]):
            assert 3.2 <= big / small <= 4.8


class TestApplyBlock:
    def test_eval_mode_ignores_rates(self, make_block):
        p, _, x = make_block()
        plain = apply_block(x, p, BlockConfig()).data
        noisy = BlockConfig(dropout_p=0.5, stoch_depth_p=0.5, training=False)
        assert np.array_equal(apply_block(x, p, noisy, 5, 6, np.random.default_rng(0)).data, plain)

    def test_dropped_layer_is_identity(self, make_block):
        p, _, x = make_block()
        cfg = BlockConfig(stoch_depth_p=0.9, training=True)
        seed = next(s for s in range(100) if not stochastic_depth_gate(11, 12, 0.9, np.random.default_rng(s)).keep)
        assert apply_block(x, p, cfg, 11, 12, np.random.default_rng(seed)) is x

    def test_kept_layer_is_rescaled(self, make_block):
        p, _, x = make_block(norm_variant="none")
        cfg = BlockConfig(norm_variant="none", stoch_depth_p=0.5, training=True)
        seed = next(s for s in range(100) if stochastic_depth_gate(1, 2, 0.5, np.random.default_rng(s)).keep)
        out = apply_block(x, p, cfg, 1, 2, np.random.default_rng(seed)).data
        update = (mlp(x, p.mlp) + attention(x, p.attn)).data
        assert np.allclose(out, x.data + 2.0 * update, atol=1e-14)

    def test_dropout_in_training_changes_output(self, make_block):
        p, _, x = make_block()
        cfg = BlockConfig(dropout_p=0.5, training=True)
        a = apply_block(x, p, cfg, rng=np.random.default_rng(0)).data
        b = apply_block(x, p, cfg, rng=np.random.default_rng(0)).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, apply_block(x, p, BlockConfig()).data)


class TestStochasticDepth:
    def test_first_layer_always_survives(self):
        assert survival_probability(0, 12, 0.5) == 1.0
        gate = stochastic_depth_gate(0, 12, 0.5, np.random.default_rng(0))
        assert gate.keep and gate.scale == 1.0

    def test_zero_rate(self):
        gate = stochastic_depth_gate(11, 12, 0.0, None)
        assert gate.keep and gate.scale == 1.0

    def test_linear_decay_and_frequency(self):
        assert survival_probability(11, 12, 0.1) == pytest.approx(0.9)
        rng = np.random.default_rng(2024)
        drops = sum(not stochastic_depth_gate(11, 12, 0.1, rng).keep for _ in range(100_000))
        assert abs(drops / 100_000 - 0.1) < 0.01

    def test_kept_scale(self):
        rng = np.random.default_rng(0)
        gate = next(g for g in (stochastic_depth_gate(11, 12, 0.1, rng) for _ in range(10)) if g.keep)
        assert gate.scale == pytest.approx(1.0 / 0.9)

    def test_eval_mode(self):
        gate = stochastic_depth_gate(11, 12, 0.5, None, training=False)
        assert gate.keep and gate.scale == 1.0

    def test_rate_out_of_range(self):
        with pytest.raises(ConfigError):
            stochastic_depth_gate(1, 12, 1.0, np.random.default_rng(0))

    def test_training_needs_rng(self):
        with pytest.raises(ContractError):
            stochastic_depth_gate(5, 12, 0.5, None)


class TestNormCount:
    @pytest.mark.parametrize(
        "variant,norm_variant,expected",
        [("parallel", "A", 1), ("parallel", "B", 2), ("parallel", "C", 1), ("parallel", "none", 0),
         ("sequential", "A", 2), ("sequential", "C", 2), ("sequential", "none", 0)],
    )
    def test_counts(self, variant, norm_variant, expected):
        assert norm_count(variant=variant, norm_variant=norm_variant) == expected
