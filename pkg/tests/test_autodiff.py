"""Reverse-mode tape: primitive ops, fused jet ops, and backward correctness."""

import numpy as np
import pytest

from spmpinn import autodiff as ad
from spmpinn.errors import NonFiniteGradient, ShapeMismatch


def _fd_grad(fn, x, h=1e-6):
    g = np.empty_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        g[idx] = (fn(xp) - fn(xm)) / (2 * h)
    return g


class TestPrimitives:
    @pytest.mark.parametrize("op,ref", [
        (lambda v: ad.tanh(v), np.tanh),
        (lambda v: ad.sigmoid(v), lambda x: 1 / (1 + np.exp(-x))),
        (lambda v: ad.exp(v), np.exp),
        (lambda v: ad.softplus(v), lambda x: np.log1p(np.exp(x))),
        (lambda v: ad.power(v, 0.5), np.sqrt),
    ])
    def test_unary_against_finite_differences(self, op, ref, rng):
        x = rng.uniform(0.2, 2.0, (4, 3))
        v = ad.Var(x)
        y = ad.reduce_sum(op(v))
        assert np.allclose(y.value, ref(x).sum(), rtol=1e-12)
        (g,) = ad.backward(y, [v])
        fd = _fd_grad(lambda xx: float(ref(xx).sum()), x)
        assert np.max(np.abs(g - fd)) <= 1e-7

    def test_arith_chain(self, rng):
        a = ad.Var(rng.normal(size=(5,)))
        b = ad.Var(rng.normal(size=(5,)) + 3.0)
        y = ad.reduce_mean_square(a * b - 2.0 / b + 0.5)
        ga, gb = ad.backward(y, [a, b])

        def f(av, bv):
            return float(np.mean((av * bv - 2.0 / bv + 0.5) ** 2))

        fa = _fd_grad(lambda av: f(av, b.value), a.value.copy())
        fb = _fd_grad(lambda bv: f(a.value, bv), b.value.copy())
        assert np.allclose(ga, fa, atol=1e-7)
        assert np.allclose(gb, fb, atol=1e-7)

    def test_broadcast_unbroadcast(self, rng):
        a = ad.Var(rng.normal(size=(4, 3)))
        b = ad.Var(rng.normal(size=(3,)))  # broadcasts over rows
        y = ad.reduce_sum(a * b)
        ga, gb = ad.backward(y, [a, b])
        assert ga.shape == (4, 3) and gb.shape == (3,)
        assert np.allclose(gb, a.value.sum(axis=0), rtol=1e-12)

    def test_matmul(self, rng):
        a = ad.Var(rng.normal(size=(6, 4)))
        w = ad.Var(rng.normal(size=(4, 2)))
        y = ad.reduce_mean_square(ad.matmul(a, w))
        ga, gw = ad.backward(y, [a, w])
        fw = _fd_grad(lambda wv: float(np.mean((a.value @ wv) ** 2)), w.value.copy())
        assert np.allclose(gw, fw, atol=1e-7)
        with pytest.raises(ShapeMismatch):
            ad.matmul(a, ad.Var(rng.normal(size=(3, 2))))

    def test_concat_and_take_column(self, rng):
        a = ad.Var(rng.normal(size=(5, 2)))
        b = ad.Var(rng.normal(size=(5, 1)))
        y = ad.reduce_sum(ad.take_column(ad.concat([a, b]), 2))
        ga, gb = ad.backward(y, [a, b])
        assert np.all(ga == 0.0)
        assert np.all(gb == 1.0)

    def test_custom_unary_uses_given_slope(self):
        v = ad.Var(np.array([0.2, 0.6]))
        y = ad.reduce_sum(ad.custom_unary(v, lambda x: x ** 3, lambda x: 3 * x ** 2))
        (g,) = ad.backward(y, [v])
        assert np.allclose(g, 3 * v.value ** 2, rtol=1e-12)

    def test_exp_clipped_counts_and_zeroes_gradient(self):
        counter = [0]
        v = ad.Var(np.array([0.5, 100.0, -3.0]))
        y = ad.reduce_sum(ad.exp_clipped(v, 80.0, counter))
        (g,) = ad.backward(y, [v])
        assert counter[0] == 1
        assert g[1] == 0.0 and g[0] > 0.0

    def test_reused_subexpression_accumulates(self):
        v = ad.Var(np.array([1.5]))
        w = ad.tanh(v)
        y = ad.reduce_sum(w * w + 3.0 * w)
        (g,) = ad.backward(y, [v])
        s = 1 - np.tanh(1.5) ** 2
        expected = (2 * np.tanh(1.5) + 3.0) * s
        assert g[0] == pytest.approx(expected, rel=1e-12)

    def test_constant_loss_zero_gradient(self):
        v = ad.Var(np.ones(3))
        y = ad.constant(np.asarray(7.0))
        (g,) = ad.backward(y, [v])
        assert np.all(g == 0.0)

    def test_nonfinite_gradient_raises(self):
        v = ad.Var(np.array([0.0]))
        with np.errstate(divide="ignore"):
            y = ad.reduce_sum(ad.log(v))  # -inf value, inf gradient
            with pytest.raises(NonFiniteGradient):
                ad.backward(y, [v])

    def test_backward_requires_scalar_root(self):
        v = ad.Var(np.ones(3))
        with pytest.raises(ShapeMismatch):
            ad.backward(v, [v])


def _primitive_jet_tanh(z_channels):
    """Channel rules spelled out with primitive ops, as an oracle for the fused op."""
    z0, z1, z2, z3 = z_channels
    v = ad.tanh(z0)
    s = 1.0 - v * v
    o1 = s * z1
    o2 = s * z2
    o3 = s * z3 + (-2.0) * v * s * z2 * z2
    return v, o1, o2, o3


class TestJetOps:
    def test_jet_activation_matches_primitive_composition(self, rng):
        """Fused tanh jet = chain rule written out with primitive ops, values and grads."""
        z = rng.normal(size=(4, 6, 3))
        fused_in = ad.Var(z.copy())
        fused = ad.jet_activation(fused_in, "tanh")
        prim_in = [ad.Var(z[i].copy()) for i in range(4)]
        prim = _primitive_jet_tanh(prim_in)
        for i in range(4):
            assert np.allclose(fused.value[i], prim[i].value, rtol=1e-14)
        w = rng.normal(size=(4, 6, 3))  # random cotangent via weighted sum
        loss_f = ad.reduce_sum(fused * ad.constant(w))
        loss_p = None
        for i in range(4):
            term = ad.reduce_sum(prim[i] * ad.constant(w[i]))
            loss_p = term if loss_p is None else loss_p + term
        (gf,) = ad.backward(loss_f, [fused_in])
        gp = ad.backward(loss_p, prim_in)
        for i in range(4):
            assert np.allclose(gf[i], gp[i], rtol=1e-12, atol=1e-14)

    def test_jet_mul_matches_primitive_composition(self, rng):
        a = rng.normal(size=(4, 5, 2))
        b = rng.normal(size=(4, 5, 2))
        fa, fb = ad.Var(a.copy()), ad.Var(b.copy())
        fused = ad.jet_mul(fa, fb)
        pa = [ad.Var(a[i].copy()) for i in range(4)]
        pb = [ad.Var(b[i].copy()) for i in range(4)]
        prim = [pa[0] * pb[0],
                pa[0] * pb[1] + pa[1] * pb[0],
                pa[0] * pb[2] + pa[2] * pb[0],
                pa[0] * pb[3] + 2.0 * pa[2] * pb[2] + pa[3] * pb[0]]
        w = rng.normal(size=(4, 5, 2))
        loss_f = ad.reduce_sum(fused * ad.constant(w))
        loss_p = sum((ad.reduce_sum(p * ad.constant(w[i])) for i, p in enumerate(prim)),
                     start=ad.constant(np.asarray(0.0)))
        (gaf,) = ad.backward(loss_f, [fa])
        gap = ad.backward(loss_p, pa)
        for i in range(4):
            assert np.allclose(gaf[i], gap[i], rtol=1e-12, atol=1e-14)

    def test_jet_affine_bias_only_on_value_channel(self, rng):
        x = ad.Var(rng.normal(size=(4, 3, 2)))
        w = ad.Var(rng.normal(size=(2, 5)))
        b = ad.Var(np.arange(5.0))
        y = ad.jet_affine(x, w, b)
        assert np.allclose(y.value[0], x.value[0] @ w.value + b.value)
        for i in (1, 2, 3):
            assert np.allclose(y.value[i], x.value[i] @ w.value)

    def test_jet_sigmoid_derivative_channel_hand_value(self):
        """d/dr of sigma(w r) at w=1.3, r=0.5 against the closed form."""
        wgt = 1.3
        x = ad.jet_input(np.stack([np.full((1, 1), 0.5), np.ones((1, 1))]),
                         np.float64)  # k=2: [val, d1]
        y = ad.jet_activation(ad.Var(x.value * wgt), "sigmoid")
        v = 1 / (1 + np.exp(-wgt * 0.5))
        assert y.value[0, 0, 0] == pytest.approx(v, rel=1e-14)
        assert y.value[1, 0, 0] == pytest.approx(wgt * v * (1 - v), rel=1e-14)

    def test_jet_expand_and_concat_round_trip(self, rng):
        a = ad.Var(rng.normal(size=(2, 4, 3)))
        e = ad.jet_expand(a, 4)
        assert np.all(e.value[2:] == 0.0)
        b = ad.Var(rng.normal(size=(4, 4, 2)))
        c = ad.jet_concat(e, b)
        y = ad.reduce_mean_square(ad.jet_channel(c, 3))
        ga, gb = ad.backward(y, [a, b])
        assert ga.shape == a.value.shape and np.all(ga == 0.0)  # channel 3 zero for a
        assert gb.shape == b.value.shape
