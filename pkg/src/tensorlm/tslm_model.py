"""Multiplicative recurrent language model with hand-written gradients.

The hidden state follows h_t = (W h_{t-1}) * (U a_t) elementwise, with the
t = 1 term W h_0 stored directly as the vector `h0_pre` (all ones by
default) so W is never inverted. Conditionals are softmax(V h_t). For
small sizes the same distribution can be computed by materializing the
model's parameter tensor explicitly and contracting it against the
rank-one input tensor; `build_param_tensor` exists to make that
equivalence checkable.

Params are immutable during a forward/backward pass; concurrent passes on
shared params are safe as long as each keeps private traces/gradients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tensor_core import DenseTensor, check_tensor_size, rank_one

CHECKPOINT_MAGIC = b"TSLM"
CHECKPOINT_VERSION = 1

INIT_SCALE = 0.08


@dataclass
class TslmParams:
    """Trainable matrices; rows of `embed` are the word coefficient vectors."""

    embed: np.ndarray  # (|V|, m)
    u_mat: np.ndarray  # (r, m) input-to-hidden
    w_mat: np.ndarray  # (r, r) hidden-to-hidden
    v_mat: np.ndarray  # (|V|, r) hidden-to-output
    h0_pre: np.ndarray  # (r,) the W*h_0 product, not h_0 itself

    def __post_init__(self):
        for name in ("embed", "u_mat", "w_mat", "v_mat", "h0_pre"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        vocab, m = self.embed.shape
        r = self.u_mat.shape[0]
        if self.u_mat.shape != (r, m):
            raise ValueError("u_mat shape inconsistent with embed")
        if self.w_mat.shape != (r, r):
            raise ValueError("w_mat must be square of the hidden size")
        if self.v_mat.shape != (vocab, r):
            raise ValueError("v_mat shape inconsistent")
        if self.h0_pre.shape != (r,):
            raise ValueError("h0_pre must be a hidden-size vector")

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def embed_size(self) -> int:
        return self.embed.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.u_mat.shape[0]

    def arrays(self):
        return (self.embed, self.u_mat, self.w_mat, self.v_mat, self.h0_pre)

    def copy(self) -> "TslmParams":
        return TslmParams(*(a.copy() for a in self.arrays()))


@dataclass
class Gradients:
    """Loss gradients, same shapes as TslmParams."""

    embed: np.ndarray
    u_mat: np.ndarray
    w_mat: np.ndarray
    v_mat: np.ndarray
    h0_pre: np.ndarray

    @classmethod
    def zeros_like(cls, params: TslmParams) -> "Gradients":
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    def arrays(self):
        return (self.embed, self.u_mat, self.w_mat, self.v_mat, self.h0_pre)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))


@dataclass(frozen=True)
class ForwardTrace:
    inputs: tuple
    hiddens: np.ndarray  # (T, r)
    logits: np.ndarray  # (T, |V|)
    log_probs: np.ndarray  # (T, |V|)


def init_params(
    vocab_size: int,
    embed_size: int,
    hidden_size: int,
    seed: int = 0,
    scheme: str = "uniform",
) -> TslmParams:
    """Seeded initialization; h0_pre is fixed to all ones.

    "uniform" draws every matrix from uniform(-0.08, 0.08). "positive"
    keeps the same readout but makes embed/u_mat nonnegative and centers
    w_mat at 1/r with small relative noise: the elementwise recurrence
    then starts sign-free, so hidden features of the same token agree
    across histories. With the sign-symmetric init those features point
    in history-dependent random directions and gradient descent cannot
    get past the uniform distribution; use "positive" for any run that
    actually trains.
    """
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, cols))

    params = TslmParams(
        embed=mat(vocab_size, embed_size),
        u_mat=mat(hidden_size, embed_size),
        w_mat=mat(hidden_size, hidden_size),
        v_mat=mat(vocab_size, hidden_size),
        h0_pre=np.ones(hidden_size),
    )
    if scheme == "positive":
        r = hidden_size
        params.w_mat = (1.0 / r) * (1.0 + rng.uniform(-0.2, 0.2, (r, r)))
        params.u_mat = rng.uniform(0.0, 2 * INIT_SCALE, (r, embed_size))
        params.embed = rng.uniform(0.0, 2 * INIT_SCALE, (vocab_size, embed_size))
    elif scheme != "uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    return params


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def forward_step(params: TslmParams, h_prev, token_id: int) -> np.ndarray:
    """One recurrence step; h_prev=None uses the stored h0_pre term."""
    z = params.h0_pre if h_prev is None else params.w_mat @ np.asarray(h_prev)
    return z * (params.u_mat @ params.embed[int(token_id)])


class _Pass:
    """Cached activations of one batched forward pass."""

    __slots__ = ("ids", "alphas", "a", "z", "h", "scales", "kmax", "ksign", "log_probs")


def _forward(params, ids, h_start=None, rescale_hidden=False) -> _Pass:
    """Run the recurrence on an (B, T) id block.

    With rescale_hidden, each hidden vector is divided by its max-abs
    entry (scale tracked for exact gradients); this changes the readout
    distribution and exists purely as a numerical stability mode.
    """
    ids = np.asarray(ids, dtype=np.int64)
    batch, steps = ids.shape
    r = params.hidden_size
    cache = _Pass()
    cache.ids = ids
    cache.alphas = params.embed[ids]  # (B, T, m)
    cache.a = cache.alphas @ params.u_mat.T  # (B, T, r)
    cache.z = np.empty((batch, steps, r))
    cache.h = np.empty((batch, steps, r))
    cache.scales = np.ones((batch, steps))
    cache.kmax = np.zeros((batch, steps), dtype=np.int64)
    cache.ksign = np.zeros((batch, steps))
    h_prev = h_start
    for t in range(steps):
        if h_prev is None:
            z = np.broadcast_to(params.h0_pre, (batch, r)).copy()
        else:
            z = h_prev @ params.w_mat.T
        g = z * cache.a[:, t]
        if rescale_hidden:
            k = np.argmax(np.abs(g), axis=1)
            peak = g[np.arange(batch), k]
            scale = np.abs(peak)
            scale[scale == 0.0] = 1.0
            h = g / scale[:, None]
            cache.scales[:, t] = scale
            cache.kmax[:, t] = k
            cache.ksign[:, t] = np.sign(peak)
        else:
            h = g
        cache.z[:, t] = z
        cache.h[:, t] = h
        h_prev = h
    logits = cache.h @ params.v_mat.T
    cache.log_probs = log_softmax(logits)
    return cache


def _backward(params, cache: _Pass, d_logits, h_start=None, rescale_hidden=False):
    """Backpropagate through the multiplicative recurrence.

    d h_{t-1} picks up diag(U a_t) W from each later step; gradients for a
    carried-in h_start are dropped (truncated BPTT).
    """
    batch, steps = cache.ids.shape
    grads = Gradients.zeros_like(params)
    grads.v_mat += np.einsum("btv,btr->vr", d_logits, cache.h)
    dh_static = d_logits @ params.v_mat  # (B, T, r)
    carry = np.zeros((batch, params.hidden_size))
    for t in range(steps - 1, -1, -1):
        dh = dh_static[:, t] + carry
        if rescale_hidden:
            scale = cache.scales[:, t]
            dot = np.sum(dh * cache.h[:, t], axis=1)
            dg = dh / scale[:, None]
            dg[np.arange(batch), cache.kmax[:, t]] -= cache.ksign[:, t] * dot / scale
        else:
            dg = dh
        dz = dg * cache.a[:, t]
        da = dg * cache.z[:, t]
        grads.u_mat += da.T @ cache.alphas[:, t]
        np.add.at(grads.embed, cache.ids[:, t], da @ params.u_mat)
        if t > 0:
            grads.w_mat += dz.T @ cache.h[:, t - 1]
            carry = dz @ params.w_mat
        elif h_start is None:
            grads.h0_pre += np.sum(dz, axis=0)
        else:
            grads.w_mat += dz.T @ h_start
    return grads


def loss_and_gradients_batch(
    params: TslmParams,
    inputs,
    targets,
    h_start=None,
    rescale_hidden: bool = False,
):
    """Mean cross-entropy over a (B, T) block plus gradients and last hidden."""
    inputs = np.asarray(inputs, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if inputs.shape != targets.shape:
        raise ValueError("inputs and targets must have the same shape")
    batch, steps = inputs.shape
    cache = _forward(params, inputs, h_start=h_start, rescale_hidden=rescale_hidden)
    n_tokens = batch * steps
    token_lp = cache.log_probs[
        np.arange(batch)[:, None], np.arange(steps)[None, :], targets
    ]
    loss = -float(np.sum(token_lp)) / n_tokens
    d_logits = np.exp(cache.log_probs)
    d_logits[np.arange(batch)[:, None], np.arange(steps)[None, :], targets] -= 1.0
    d_logits /= n_tokens
    grads = _backward(
        params, cache, d_logits, h_start=h_start, rescale_hidden=rescale_hidden
    )
    return loss, grads, cache.h[:, -1].copy()


def forward_sequence(params: TslmParams, ids, rescale_hidden: bool = False) -> ForwardTrace:
    """Forward pass over one sequence; row t predicts the token at t+1."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise ValueError("ids must be a nonempty 1-D sequence")
    cache = _forward(params, ids[None, :], rescale_hidden=rescale_hidden)
    hiddens = cache.h[0]
    return ForwardTrace(
        inputs=tuple(int(i) for i in ids),
        hiddens=hiddens,
        logits=hiddens @ params.v_mat.T,
        log_probs=cache.log_probs[0],
    )


def loss_and_gradients(
    params: TslmParams, ids, targets, rescale_hidden: bool = False
):
    """Single-sequence mean cross-entropy and gradients."""
    ids = np.asarray(ids, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if ids.shape != targets.shape or ids.ndim != 1:
        raise ValueError("ids and targets must be 1-D and equal length")
    loss, grads, _ = loss_and_gradients_batch(
        params, ids[None, :], targets[None, :], rescale_hidden=rescale_hidden
    )
    return loss, grads


def conditional_distribution(
    params: TslmParams, prefix_ids, rescale_hidden: bool = False
) -> np.ndarray:
    """softmax(V h_T) after consuming the prefix."""
    trace = forward_sequence(params, prefix_ids, rescale_hidden=rescale_hidden)
    return softmax(trace.logits[-1])


def build_param_tensor(params: TslmParams, t: int) -> DenseTensor:
    """Materialize the order-t parameter tensor the recurrence contracts.

    Built by the shared-factor recursion: the base slice vector is h0_pre
    (all ones under the default convention), each level mixes with W and
    appends a mode through U, and the top level mixes with V to append the
    vocabulary mode. Mode layout: (t-1) embedding modes, vocabulary last.
    """
    if t < 2:
        raise ValueError("parameter tensor is defined for t >= 2")
    m = params.embed_size
    check_tensor_size(m ** (t - 1) * params.vocab_size)
    slices = params.h0_pre
    for _ in range(t - 2):
        slices = np.einsum("...i,ki,id->...dk", slices, params.w_mat, params.u_mat)
    full = np.einsum("...i,ki,id->...dk", slices, params.v_mat, params.u_mat)
    return DenseTensor(full)


def contract_with_inputs(param_tensor: DenseTensor, alphas) -> np.ndarray:
    """Fully contract the parameter tensor against word vectors a_1..a_{t-1}.

    The brute-force route: build the rank-one input tensor explicitly and
    sum products over all embedding modes, leaving the vocabulary mode.
    """
    input_tensor = rank_one(alphas)
    if param_tensor.shape[:-1] != input_tensor.shape:
        raise ValueError("input tensor does not match parameter tensor modes")
    vocab = param_tensor.shape[-1]
    return param_tensor.array.reshape(-1, vocab).T @ input_tensor.data


def save_checkpoint(path, params: TslmParams, vocab_tokens) -> None:
    """Write the fixed binary checkpoint layout (little-endian, float64)."""
    vocab_tokens = list(vocab_tokens)
    if len(vocab_tokens) != params.vocab_size:
        raise ValueError("vocab size does not match embedding rows")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(
            struct.pack(
                "<III", params.embed_size, params.hidden_size, params.vocab_size
            )
        )
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(vocab_tokens)))
        for tok in vocab_tokens:
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, vocab_tokens)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a TSLM checkpoint")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    m, r, vocab = struct.unpack_from("<III", blob, 8)
    offset = 20
    shapes = [(vocab, m), (r, m), (r, r), (vocab, r), (r,)]
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += n * 8
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    tokens = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        tokens.append(blob[offset : offset + length].decode("utf-8"))
        offset += length
    return TslmParams(*arrays), tuple(tokens)
