import numpy as np
import pytest

from ufogen import autodiff as ad
from ufogen import networks as nets
from ufogen.autodiff import Tensor


def tiny_pair(**kw):
    defaults = dict(g_width=6, g_depth=2, d_width=5, d_depth=2, time_dim=8, fourier_bands=1)
    defaults.update(kw)
    return nets.make_model_pair(input_dim=2, time_steps=10, seed=1, **defaults)


class TestTimeEmbedding:
    def test_equal_times_identical(self):
        emb = nets.TimeEmbedding(dim=16)
        np.testing.assert_array_equal(emb(3, 10), emb(3, 10))

    def test_output_dim_fixed(self):
        emb = nets.TimeEmbedding(dim=32)
        assert emb(0, 10).shape == (1, 32)
        assert emb(10, 10).shape == (1, 32)

    def test_distinct_times_differ(self):
        emb = nets.TimeEmbedding(dim=16)
        assert not np.allclose(emb(2, 10), emb(9, 10))


class TestGeneratorForward:
    def test_zero_initialized_output_layer(self):
        m = tiny_pair()
        x = Tensor(np.random.default_rng(0).standard_normal((4, 2)))
        out = nets.generator_forward(m, x, 5)
        np.testing.assert_array_equal(out.data, np.zeros((4, 2)))

    def test_deterministic(self):
        m = tiny_pair()
        m.params["g.out.w"].data = np.random.default_rng(2).standard_normal((6, 2))
        x = np.random.default_rng(3).standard_normal((4, 2))
        a = nets.generator_forward(m, Tensor(x), 7).data
        b = nets.generator_forward(m, Tensor(x), 7).data
        assert a.tobytes() == b.tobytes()

    def test_forward_does_not_mutate_params(self):
        m = tiny_pair()
        before = {k: v.data.copy() for k, v in m.params.items()}
        nets.generator_forward(m, Tensor(np.ones((3, 2))), 4)
        for k, v in m.params.items():
            np.testing.assert_array_equal(v.data, before[k])

    def test_parameter_gradients_match_finite_differences(self):
        m = tiny_pair()
        rng = np.random.default_rng(5)
        m.params["g.out.w"].data = rng.standard_normal((6, 2)) * 0.3
        x_t = rng.standard_normal((3, 2))
        y = rng.standard_normal((3, 2))
        worst = 0.0
        for name in m.generator_params():
            def f(w, name=name):
                saved = m.params[name]
                m.params[name] = w
                try:
                    out = nets.generator_forward(m, Tensor(x_t), 4)
                    return ad.mean(ad.squared_l2_norm(ad.sub(out, Tensor(y)), axis=1))
                finally:
                    m.params[name] = saved
            worst = max(worst, ad.finite_difference_check(f, m.params[name]))
        assert worst < 1e-5

    def test_dimension_mismatch(self):
        m = tiny_pair()
        with pytest.raises(ad.ShapeError):
            nets.generator_forward(m, Tensor(np.ones((3, 5))), 4)
        with pytest.raises(IndexError):
            nets.generator_forward(m, Tensor(np.ones((3, 2))), 11)


class TestDiscriminatorForward:
    def test_zero_output_layer_gives_half_probability(self):
        m = tiny_pair()
        m.params["d.out.w"].data = np.zeros((5, 1))
        m.params["d.out.b"].data = np.zeros((1, 1))
        logits = nets.discriminator_forward(m, Tensor(np.ones((3, 2))), 2)
        np.testing.assert_array_equal(logits.data, np.zeros((3, 1)))

    def test_permutation_equivariance(self):
        m = tiny_pair()
        rng = np.random.default_rng(8)
        x = rng.standard_normal((6, 2))
        perm = rng.permutation(6)
        direct = nets.discriminator_forward(m, Tensor(x), 3).data
        permuted = nets.discriminator_forward(m, Tensor(x[perm]), 3).data
        np.testing.assert_allclose(permuted, direct[perm], rtol=1e-12)

    def test_conditioning_arity_enforced(self):
        plain = tiny_pair()
        cond = tiny_pair(d_takes_extra=True)
        x = Tensor(np.ones((2, 2)))
        with pytest.raises(ValueError):
            nets.discriminator_forward(plain, x, 1, extra=x)
        with pytest.raises(ValueError):
            nets.discriminator_forward(cond, x, 1)
        out = nets.discriminator_forward(cond, x, 1, extra=x)
        assert out.data.shape == (2, 1)

    def test_parameter_gradients_match_finite_differences(self):
        m = tiny_pair()
        rng = np.random.default_rng(9)
        x = rng.standard_normal((3, 2))
        worst = 0.0
        for name in m.discriminator_params():
            def f(w, name=name):
                saved = m.params[name]
                m.params[name] = w
                try:
                    return ad.mean(nets.discriminator_forward(m, Tensor(x), 2))
                finally:
                    m.params[name] = saved
            worst = max(worst, ad.finite_difference_check(f, m.params[name]))
        assert worst < 1e-5


class TestEma:
    def test_zero_decay_copies_parameters(self):
        m = tiny_pair()
        rng = np.random.default_rng(4)
        for k in m.generator_params():
            m.params[k].data = rng.standard_normal(m.params[k].data.shape)
        nets.ema_update(m, 0.0)
        for k, shadow in m.ema.items():
            np.testing.assert_array_equal(shadow, m.params[k].data)

    def test_single_step_value(self):
        m = tiny_pair()
        m.ema["g.out.b"][:] = 0.0
        m.params["g.out.b"].data = np.ones((1, 2))
        nets.ema_update(m, 0.999)
        np.testing.assert_allclose(m.ema["g.out.b"], np.full((1, 2), 0.001))

    def test_geometric_convergence(self):
        m = tiny_pair()
        m.ema["g.out.b"][:] = 0.0
        m.params["g.out.b"].data = np.ones((1, 2))
        for _ in range(200):
            nets.ema_update(m, 0.9)
        gap = np.abs(m.ema["g.out.b"] - 1.0).max()
        assert gap == pytest.approx(0.9 ** 200, rel=1e-9)

    def test_invalid_decay(self):
        with pytest.raises(ValueError):
            nets.ema_update(tiny_pair(), 1.0)

    def test_ema_forward_records_no_gradients(self):
        m = tiny_pair()
        x = Tensor(np.ones((2, 2)))
        before = len(ad.current_tape())
        out = nets.generator_forward(m, x, 3, use_ema=True)
        assert not out.requires_grad
        assert len(ad.current_tape()) == before

    def test_ema_untouched_by_training_gradients(self):
        m = tiny_pair()
        m.params["g.out.w"].data = np.full((6, 2), 0.5)
        shadow_before = {k: v.copy() for k, v in m.ema.items()}
        out = nets.generator_forward(m, Tensor(np.ones((2, 2))), 3)
        ad.backward(ad.mean(ad.squared_l2_norm(out, axis=1)))
        for k, v in m.ema.items():
            np.testing.assert_array_equal(v, shadow_before[k])
