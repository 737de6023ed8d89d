"""Layer and optimizer behavior: hand-checked forwards, gradient checks,
the adaptive-moment update at t=1, schedule endpoints, and the
byte-stable checkpoint container."""

import numpy as np
import pytest

from corefkit import autodiff as ad
from corefkit.autodiff import NumericError, Tensor
from corefkit.nn import (
    FFNN,
    EmbeddingTable,
    ParameterBag,
    finite_difference_check,
    gate_update,
    glorot,
)
from corefkit.optim import Adam, AdamGroup, clip_global_norm, load_checkpoint, save_checkpoint


class TestFFNN:
    def test_zero_weight_network_outputs_zero(self, rng):
        bag = ParameterBag()
        net = FFNN(bag, "f", 4, 8, 2, 1, 0.0, rng)
        for _, p in bag.items():
            p.data[...] = 0.0
        out = net(Tensor(rng.standard_normal((5, 4))))
        assert (out.data == 0.0).all()

    def test_single_linear_layer_matches_hand_multiplication(self, rng):
        bag = ParameterBag()
        net = FFNN(bag, "f", 3, 4, 0, 2, 0.0, rng)  # depth 0: head only
        x = rng.standard_normal((6, 3))
        out = net(Tensor(x))
        w, b = bag["f.out.w"].data, bag["f.out.b"].data
        np.testing.assert_allclose(out.data, x @ w + b, atol=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        bag = ParameterBag()
        net = FFNN(bag, "f", 5, 7, 2, 1, 0.0, rng)
        x = Tensor(rng.standard_normal((4, 5)))
        wts = rng.standard_normal((4, 1))
        params = [bag[n] for n in bag.names()]
        worst = finite_difference_check(
            lambda: ad.sum_all(ad.mul(net(x), Tensor(wts))), params, rng, h=1e-5
        )
        assert worst <= 1e-3

    def test_dimension_mismatch_raises(self, rng):
        bag = ParameterBag()
        net = FFNN(bag, "f", 5, 7, 1, 1, 0.0, rng)
        with pytest.raises(ValueError):
            net(Tensor(np.zeros((2, 4))))

    def test_eval_mode_ignores_dropout(self, rng):
        bag = ParameterBag()
        net = FFNN(bag, "f", 3, 6, 2, 1, 0.5, rng)
        x = Tensor(rng.standard_normal((4, 3)))
        a = net(x, train=False)
        b = net(x, train=False)
        np.testing.assert_array_equal(a.data, b.data)


class TestGate:
    def test_override_one_returns_g_bitwise(self, rng):
        g = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        a = Tensor(rng.standard_normal((4, 6)))
        w = Tensor(glorot(rng, 12, 6), requires_grad=True)
        out = gate_update(g, a, w, override=1.0)
        np.testing.assert_array_equal(out.data, g.data)

    def test_override_zero_returns_refined(self, rng):
        g = Tensor(rng.standard_normal((4, 6)))
        a = Tensor(rng.standard_normal((4, 6)))
        w = Tensor(glorot(rng, 12, 6))
        out = gate_update(g, a, w, override=0.0)
        np.testing.assert_array_equal(out.data, a.data)

    def test_output_within_envelope(self, rng):
        for _ in range(20):
            g = Tensor(rng.standard_normal((5, 8)))
            a = Tensor(rng.standard_normal((5, 8)))
            w = Tensor(glorot(rng, 16, 8) * 3)
            out = gate_update(g, a, w)
            lo = np.minimum(g.data, a.data) - 1e-12
            hi = np.maximum(g.data, a.data) + 1e-12
            assert (out.data >= lo).all() and (out.data <= hi).all()

    def test_gradient(self, rng):
        g = rng.standard_normal((3, 4))
        a = rng.standard_normal((3, 4))
        w = glorot(rng, 8, 4)
        wts = rng.standard_normal((3, 4))
        tg, ta, tw = Tensor(g, requires_grad=True), Tensor(a, requires_grad=True), Tensor(w, requires_grad=True)
        worst = finite_difference_check(
            lambda: ad.sum_all(ad.mul(gate_update(tg, ta, tw), Tensor(wts))),
            [tg, ta, tw],
            rng,
        )
        assert worst <= 1e-3

    def test_shape_mismatch_raises(self, rng):
        with pytest.raises(ValueError):
            gate_update(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), Tensor(np.zeros((6, 3))))


class TestEmbeddingTable:
    def test_lookup_and_out_of_range(self, rng):
        bag = ParameterBag()
        table = EmbeddingTable(bag, "t", 5, 3, rng)
        out = table([0, 4, 0])
        np.testing.assert_array_equal(out.data[0], out.data[2])
        with pytest.raises(IndexError):
            table([5])


class TestAdam:
    def _scalar_setup(self, lr=0.1, total_steps=None, weight_decay=0.0):
        bag = ParameterBag()
        p = bag.create("w", np.asarray([1.0]))
        opt = Adam(bag, [AdamGroup(["w"], lr, weight_decay)], total_steps=total_steps)
        return bag, p, opt

    def test_zero_gradient_leaves_parameters_unchanged(self):
        bag, p, opt = self._scalar_setup()
        p.grad = np.zeros(1)
        opt.step()
        assert p.data[0] == 1.0

    def test_first_step_is_lr_times_sign(self):
        # bias-corrected first step: m-hat/sqrt(v-hat) = g/|g| up to eps
        for g in (0.37, -2.5):
            bag, p, opt = self._scalar_setup(lr=0.1)
            p.grad = np.asarray([g])
            opt.step()
            assert p.data[0] == pytest.approx(1.0 - 0.1 * np.sign(g), abs=1e-7)

    def test_linear_decay_reaches_zero_at_final_step(self):
        bag, p, opt = self._scalar_setup(lr=0.5, total_steps=10)
        assert opt.decay_factor(0) == 1.0
        assert abs(opt.decay_factor(9)) <= 1e-12
        for _ in range(9):
            p.grad = np.asarray([1.0])
            opt.step()
        before = p.data.copy()
        p.grad = np.asarray([123.0])
        opt.step()  # final step: effective lr 0
        np.testing.assert_array_equal(p.data, before)

    def test_weight_decay_is_decoupled(self):
        bag, p, opt = self._scalar_setup(lr=0.1, weight_decay=0.5)
        p.grad = np.zeros(1)
        opt.step()
        assert p.data[0] == pytest.approx(1.0 - 0.1 * 0.5 * 1.0)

    def test_non_finite_gradient_raises(self):
        bag, p, opt = self._scalar_setup()
        p.grad = np.asarray([np.inf])
        with pytest.raises(NumericError):
            opt.step()

    def test_groups_must_cover_parameters(self, rng):
        bag = ParameterBag()
        bag.create("a", np.zeros(1))
        bag.create("b", np.zeros(1))
        with pytest.raises(ValueError):
            Adam(bag, [AdamGroup(["a"], 0.1)])

    def test_clip_global_norm(self):
        bag = ParameterBag()
        p1 = bag.create("a", np.zeros(2))
        p2 = bag.create("b", np.zeros(2))
        p1.grad = np.asarray([3.0, 0.0])
        p2.grad = np.asarray([0.0, 4.0])
        norm = clip_global_norm([p1, p2], 1.0)
        assert norm == pytest.approx(5.0)
        total = np.sqrt((p1.grad**2).sum() + (p2.grad**2).sum())
        assert total == pytest.approx(1.0)


class TestCheckpoint:
    def test_round_trip_with_optimizer_and_meta(self, rng, tmp_path):
        bag = ParameterBag()
        bag.create("x.w", rng.standard_normal((3, 4)))
        bag.create("y", rng.standard_normal(5))
        opt = Adam(bag, [AdamGroup(bag.names(), 0.01)])
        for n in bag.names():
            bag[n].grad = rng.standard_normal(bag[n].data.shape)
        opt.step()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, bag, optimizer=opt, seed=99, meta={"config": {"k": 1}})
        params, opt_state, seed, meta = load_checkpoint(path)
        assert seed == 99 and meta == {"config": {"k": 1}}
        for n in bag.names():
            np.testing.assert_array_equal(params[n], bag[n].data)
        assert opt_state["step"] == 1
        np.testing.assert_array_equal(opt_state["m.x.w"], opt.m["x.w"])

    def test_bytes_are_stable_across_writes(self, rng, tmp_path):
        bag = ParameterBag()
        bag.create("w", rng.standard_normal((4, 4)))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, bag, seed=1)
        save_checkpoint(p2, bag, seed=1)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"nope")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_state_dict_mismatch(self, rng):
        bag = ParameterBag()
        bag.create("w", np.zeros(3))
        with pytest.raises(KeyError):
            bag.load_state_dict({"other": np.zeros(3)})
