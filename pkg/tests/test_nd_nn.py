"""Layer modules: naming, attention oracle, masks, serialization round-trip."""

import numpy as np
import pytest

from s2st import nd
from s2st.errors import CheckpointError, MaskError, ShapeError
from s2st.nd import ops
from s2st.nd.serialize import pack_named, unpack_named

RNG = np.random.default_rng(99)


class Block(nd.Module):
    def __init__(self, rng):
        self.lin = nd.Linear(4, 4, rng)
        self.norm = nd.LayerNorm(4)


class Net(nd.Module):
    def __init__(self, rng):
        self.emb = nd.Embedding(10, 4, rng)
        self.blocks = [Block(rng), Block(rng)]
        self.out = nd.Linear(4, 2, rng, bias=False)


class TestModuleTree:
    def test_named_parameters_paths(self):
        net = Net(np.random.default_rng(0))
        names = dict(net.named_parameters())
        assert "emb.weight" in names
        assert "blocks.0.lin.weight" in names
        assert "blocks.1.norm.bias" in names
        assert "out.weight" in names
        assert "out.bias" not in names
        assert len(names) == len(set(names))

    def test_num_parameters(self):
        net = Net(np.random.default_rng(0))
        # emb 40, two blocks of (16+4 lin, 4+4 norm)=28, out 8
        assert net.num_parameters() == 40 + 2 * 28 + 8

    def test_train_eval_propagates(self):
        net = Net(np.random.default_rng(0))
        net.eval()
        assert all(not m._training for m in net.modules())
        net.train()
        assert all(m._training for m in net.modules())

    def test_init_is_seed_deterministic(self):
        a = Net(np.random.default_rng(7))
        b = Net(np.random.default_rng(7))
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)


class TestAttention:
    def _brute_force(self, mha, q, k, v, mask=None):
        """Single-head-at-a-time reference straight from the definition."""
        B, Tq, D = q.shape
        Tk = k.shape[1]
        h, dh = mha.n_heads, mha.d_head
        qp = q @ mha.wq.weight.data + mha.wq.bias.data
        kp = k @ mha.wk.weight.data + mha.wk.bias.data
        vp = v @ mha.wv.weight.data + mha.wv.bias.data
        out = np.zeros((B, Tq, D))
        for b in range(B):
            for head in range(h):
                sl = slice(head * dh, (head + 1) * dh)
                s = qp[b, :, sl] @ kp[b, :, sl].T / np.sqrt(dh)
                if mask is not None:
                    s = np.where(mask, s, -1e9)
                e = np.exp(s - s.max(-1, keepdims=True))
                a = e / e.sum(-1, keepdims=True)
                out[b, :, sl] = a @ vp[b, :, sl]
        return out @ mha.wo.weight.data + mha.wo.bias.data

    def test_matches_brute_force(self):
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(8, 2, np.random.default_rng(3), box)
        q = RNG.standard_normal((2, 5, 8)).astype(np.float32)
        out = mha(nd.tensor(q), nd.tensor(q), nd.tensor(q))
        ref = self._brute_force(mha, q, q, q)
        np.testing.assert_allclose(out.data, ref, rtol=1e-4, atol=1e-5)

    def test_causal_mask_matches_brute_force(self):
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(8, 4, np.random.default_rng(4), box)
        q = RNG.standard_normal((1, 6, 8)).astype(np.float32)
        mask = np.tril(np.ones((6, 6), dtype=bool))
        out = mha(nd.tensor(q), nd.tensor(q), nd.tensor(q), mask=mask)
        ref = self._brute_force(mha, q, q, q, mask=mask)
        np.testing.assert_allclose(out.data, ref, rtol=1e-4, atol=1e-5)

    def test_cross_attention_kv_width(self):
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(8, 2, np.random.default_rng(5), box, kv_dim=12)
        q = nd.tensor(RNG.standard_normal((2, 3, 8)).astype(np.float32))
        kv = nd.tensor(RNG.standard_normal((2, 7, 12)).astype(np.float32))
        assert mha(q, kv, kv).shape == (2, 3, 8)

    def test_masked_keys_get_zero_weight(self):
        # with the last key masked, changing its value must not move output
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(4, 1, np.random.default_rng(6), box)
        kv1 = RNG.standard_normal((1, 4, 4)).astype(np.float32)
        kv2 = kv1.copy()
        kv2[0, 3] = 1e4
        q = nd.tensor(RNG.standard_normal((1, 2, 4)).astype(np.float32))
        mask = np.ones((2, 4), dtype=bool)
        mask[:, 3] = False
        a = mha(q, nd.tensor(kv1), nd.tensor(kv1), mask=mask)
        b = mha(q, nd.tensor(kv2), nd.tensor(kv2), mask=mask)
        np.testing.assert_array_equal(a.data, b.data)

    def test_fully_masked_row_raises(self):
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(4, 1, np.random.default_rng(6), box)
        q = nd.tensor(RNG.standard_normal((1, 2, 4)).astype(np.float32))
        mask = np.ones((2, 4), dtype=bool)
        mask[1, :] = False
        with pytest.raises(MaskError):
            mha(q, q, q, mask=mask)

    def test_indivisible_heads_rejected(self):
        with pytest.raises(ShapeError):
            nd.MultiHeadAttention(6, 4, np.random.default_rng(0), nd.RngBox())

    def test_gradients(self):
        box = nd.RngBox()
        mha = nd.MultiHeadAttention(4, 2, np.random.default_rng(8), box)
        mha.eval()
        x = RNG.standard_normal((1, 3, 4)).astype(np.float32)
        mask = np.tril(np.ones((3, 3), dtype=bool))

        def loss():
            t = nd.as_tensor(x)
            return ops.sum_(ops.tanh(mha(t, t, t, mask=mask)))

        rep = nd.finite_diff_check(loss, list(mha.named_parameters()), tol=2e-4)
        assert rep.passed, rep.summary()


class TestDropoutModule:
    def test_respects_eval_mode(self):
        box = nd.RngBox(np.random.default_rng(1))
        drop = nd.Dropout(0.9, box)
        x = nd.tensor(np.ones((8, 8), dtype=np.float32))
        drop.eval()
        np.testing.assert_array_equal(drop(x).data, x.data)
        drop.train()
        assert (drop(x).data == 0).any()

    def test_reseed_reproduces_pattern(self):
        box = nd.RngBox()
        drop = nd.Dropout(0.5, box)
        x = nd.tensor(np.ones((16, 16), dtype=np.float32))
        box.reseed(42)
        a = drop(x).data.copy()
        box.reseed(42)
        b = drop(x).data.copy()
        np.testing.assert_array_equal(a, b)


class TestSerialize:
    def test_roundtrip_bit_exact(self):
        tensors = {
            "enc.layers.0.w": RNG.standard_normal((3, 4)).astype(np.float32),
            "scalar": np.array(3.25, dtype=np.float32),
            "bias": np.arange(5, dtype=np.float32),
        }
        out = unpack_named(pack_named(tensors))
        assert set(out) == set(tensors)
        for k in tensors:
            assert out[k].shape == np.asarray(tensors[k]).shape
            assert out[k].tobytes() == np.ascontiguousarray(tensors[k]).tobytes()

    def test_truncation_rejected(self):
        buf = pack_named({"w": np.ones((4, 4), dtype=np.float32)})
        with pytest.raises(CheckpointError):
            unpack_named(buf[:-3])

    def test_trailing_garbage_rejected(self):
        buf = pack_named({"w": np.ones(2, dtype=np.float32)})
        with pytest.raises(CheckpointError):
            unpack_named(buf + b"\x00")

    def test_module_state_roundtrip(self):
        net = Net(np.random.default_rng(11))
        state = {k: v.data for k, v in net.named_parameters()}
        back = unpack_named(pack_named(state))
        for k, v in state.items():
            np.testing.assert_array_equal(back[k], v)
