"""Self-diagnostic gradient suite: every differentiable primitive plus a
full forward/backward pass of a miniature model, verified against central
finite differences. Wired to the `gradcheck` subcommand and run wholesale
by the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from . import nd
from .nd import ops
from .model import S2STModel, toy_config
from .model.losses import LossTargets, total_loss

# 2-layer / dim-16 model: big enough to cross every module boundary,
# small enough that a sampled finite-difference pass stays under a minute
_TINY = dict(enc_layers=2, enc_dim=16, enc_heads=2, ffn_dim=32,
             subsample_channels=4, dec_layers=2, dec_dim=16, dec_heads=2,
             prenet_hidden=12, prenet_bottleneck=8, postnet_layers=2,
             postnet_channels=8, postnet_kernel=3, aux_dim=16, aux_heads=2,
             aux_ffn_dim=32, tap_src=1, tap_tgt=2)


def _p(rng, *shape, away_from_zero=False):
    x = rng.normal(size=shape).astype(np.float32)
    if away_from_zero:  # kinked ops: keep clear of the non-smooth point
        x = np.where(np.abs(x) < 0.25, np.sign(x) * 0.25 + x, x)
    return nd.Parameter(x)


def primitive_checks(seed: int = 0):
    """Yield (name, scalar_fn, named_params) for every differentiable op."""
    rng = np.random.default_rng(seed)

    def scalarized(expr):
        return lambda: ops.sum_(expr())

    a = _p(rng, 2, 3)
    b = _p(rng, 3)
    yield "add", scalarized(lambda: ops.add(a, b)), [("a", a), ("b", b)]
    yield "sub", scalarized(lambda: ops.sub(a, b)), [("a", a), ("b", b)]
    yield "mul", scalarized(lambda: ops.mul(a, b)), [("a", a), ("b", b)]
    d = _p(rng, 2, 3, away_from_zero=True)
    yield "div", scalarized(lambda: ops.div(a, d)), [("a", a), ("d", d)]
    yield "neg", scalarized(lambda: ops.neg(a)), [("a", a)]

    m1 = _p(rng, 2, 3, 4)
    m2 = _p(rng, 4, 5)
    yield "matmul", scalarized(lambda: ops.matmul(m1, m2)), [
        ("m1", m1), ("m2", m2)]

    k = _p(rng, 3, 4, away_from_zero=True)
    yield "relu", scalarized(lambda: ops.relu(k)), [("k", k)]
    yield "absolute", scalarized(lambda: ops.absolute(k)), [("k", k)]
    yield "tanh", scalarized(lambda: ops.tanh(a)), [("a", a)]
    yield "sigmoid", scalarized(lambda: ops.sigmoid(a)), [("a", a)]
    yield "softplus", scalarized(lambda: ops.softplus(a)), [("a", a)]
    yield "exp", scalarized(lambda: ops.exp(a)), [("a", a)]
    pos = nd.Parameter(np.abs(rng.normal(size=(3, 4))).astype(np.float32) + 0.5)
    yield "log", scalarized(lambda: ops.log(pos)), [("pos", pos)]

    s = _p(rng, 3, 5)
    weights = rng.normal(size=(3, 5)).astype(np.float32)
    yield "softmax", scalarized(lambda: ops.mul(ops.softmax(s, axis=-1),
                                                weights)), [("s", s)]
    yield "log_softmax", scalarized(
        lambda: ops.mul(ops.log_softmax(s, axis=-1), weights)), [("s", s)]

    x = _p(rng, 2, 4, 6)
    gain = _p(rng, 6)
    bias = _p(rng, 6)
    yield "layer_norm", scalarized(lambda: ops.layer_norm(x, gain, bias)), [
        ("x", x), ("gain", gain), ("bias", bias)]

    def dropout_fn():
        # fresh generator per call keeps the sampled mask identical
        return ops.sum_(ops.dropout(x, 0.4, np.random.default_rng(11), True))
    yield "dropout", dropout_fn, [("x", x)]

    table = _p(rng, 5, 4)
    ids = np.array([[0, 2, 4], [1, 1, 3]])
    yield "embedding_lookup", scalarized(
        lambda: ops.embedding_lookup(table, ids)), [("table", table)]

    cx = _p(rng, 1, 2, 5, 4)
    cw = _p(rng, 3, 2, 3, 3)
    cb = _p(rng, 3)
    yield "conv2d", scalarized(
        lambda: ops.conv2d(cx, cw, cb, stride=(2, 2), padding="same")), [
        ("cx", cx), ("cw", cw), ("cb", cb)]

    yield "reshape", scalarized(
        lambda: ops.mul(ops.reshape(m1, (6, 4)), 1.5)), [("m1", m1)]
    yield "transpose", scalarized(
        lambda: ops.mul(ops.transpose(m1, (2, 0, 1)), weights[0, :3])), [
        ("m1", m1)]
    yield "concat", scalarized(
        lambda: ops.mul(ops.concat([a, ops.mul(a, 2.0)], axis=0), 0.5)), [
        ("a", a)]
    yield "slice", scalarized(
        lambda: ops.slice_(m1, (slice(None), slice(1, 3)))), [("m1", m1)]
    yield "sum", lambda: ops.sum_(ops.mul(a, a)), [("a", a)]
    yield "mean", lambda: ops.mul(ops.mean(ops.mul(a, b)), 7.0), [
        ("a", a), ("b", b)]


def model_check_fn(seed: int = 1):
    """A deterministic full-model loss closure plus its parameters."""
    cfg = toy_config(6, 7, dropout=0.0, prenet_dropout=0.0, **_TINY)
    model = S2STModel(cfg, seed=seed)
    model.eval()
    rng = np.random.default_rng(5)
    # zero-initialized biases sit exactly on the relu kink against the
    # all-zero GO frame, where central differences are invalid; nudge away
    for p in model.parameters():
        p.data = p.data + rng.normal(scale=0.03, size=p.shape).astype(
            p.data.dtype)
    mel = rng.normal(size=(1, 9, 80)).astype(np.float32)
    mask = np.ones((1, 9), bool)
    tgt = rng.normal(scale=0.5, size=(1, 8, 80)).astype(np.float32)
    ids_in = np.array([[1, 4, 5]])
    ids_out = np.array([[4, 5, 2]])
    idm = np.ones((1, 3), bool)
    targets = LossTargets(ids_out, idm, ids_out, idm, tgt,
                          np.ones((1, 8), bool),
                          np.array([[0.0, 1.0]], np.float32),
                          np.ones((1, 2), bool))

    def f():
        enc = model.encode(mel, mask)
        out = model.decode_spectrogram_teacher_forced(enc, tgt)
        ls = model.decode_auxiliary_teacher_forced(enc, "source", ids_in, idm)
        lt = model.decode_auxiliary_teacher_forced(enc, "target", ids_in, idm)
        _, total = total_loss(out, ls, lt, targets, cfg)
        return total

    params = [(n, p) for n, p in model.named_parameters()
              if "prompt" not in n]  # unused by this unprompted pass
    return f, params


def gradient_suite(primitive_tol: float = 1e-4, model_tol: float = 1e-3,
                   model_entries: int = 3, seed: int = 0):
    """Run every check; returns [(name, GradReport)] with the model last."""
    results = []
    for name, f, params in primitive_checks(seed):
        results.append((name, nd.finite_diff_check(f, params,
                                                   tol=primitive_tol)))
    f, params = model_check_fn(seed + 1)
    results.append(("full_model_loss",
                    nd.finite_diff_check(f, params, tol=model_tol,
                                         entries_per_param=model_entries)))
    return results
