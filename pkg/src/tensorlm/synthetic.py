"""Synthetic Markov corpora with known conditional entropy.

Used by the sanity experiments and sweep modes: a model that fits the
generating chain perfectly has test perplexity exp(conditional entropy),
which gives an absolute yardstick real corpora never provide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CorpusSplits, TokenSeq


@dataclass(frozen=True)
class ChainSpec:
    """A stationary Markov source over token ids 0..V-1.

    `transitions` has shape (V, V) for a first-order chain or (V, V, V)
    for a second-order chain (last axis is the next-token distribution).
    """

    transitions: np.ndarray
    stationary: np.ndarray
    conditional_entropy: float

    @property
    def vocab_size(self) -> int:
        return self.transitions.shape[-1]

    @property
    def markov_order(self) -> int:
        return self.transitions.ndim - 1


def _entropy(dist: np.ndarray) -> float:
    p = dist[dist > 0]
    return float(-np.sum(p * np.log(p)))


def _stationary(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(100_000):
        nxt = pi @ matrix
        if np.max(np.abs(nxt - pi)) < 1e-15:
            return nxt
        pi = nxt
    return pi


def bigram_chain(vocab_size: int, concentration: float = 0.4, seed: int = 0) -> ChainSpec:
    """Random first-order chain with Dirichlet rows."""
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(np.full(vocab_size, concentration), size=vocab_size)
    pi = _stationary(trans)
    entropy = float(sum(pi[w] * _entropy(trans[w]) for w in range(vocab_size)))
    return ChainSpec(transitions=trans, stationary=pi, conditional_entropy=entropy)


def trigram_chain(vocab_size: int, concentration: float = 0.4, seed: int = 0) -> ChainSpec:
    """Random second-order chain; next token depends on the last two."""
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(
        np.full(vocab_size, concentration), size=(vocab_size, vocab_size)
    )
    # Stationary distribution of the pair process (a, b) -> (b, c).
    v = vocab_size
    pair = np.zeros((v * v, v * v))
    for a in range(v):
        for b in range(v):
            for c in range(v):
                pair[a * v + b, b * v + c] = trans[a, b, c]
    pi_pair = _stationary(pair).reshape(v, v)
    entropy = float(
        sum(
            pi_pair[a, b] * _entropy(trans[a, b])
            for a in range(v)
            for b in range(v)
        )
    )
    return ChainSpec(transitions=trans, stationary=pi_pair, conditional_entropy=entropy)


def sample(spec: ChainSpec, n_tokens: int, seed: int = 0, burn_in: int = 1000) -> np.ndarray:
    """Draw a contiguous token stream from the chain."""
    rng = np.random.default_rng(seed)
    v = spec.vocab_size
    cum = np.cumsum(spec.transitions, axis=-1)
    draws = rng.random(n_tokens + burn_in + spec.markov_order)
    out = np.empty(n_tokens + burn_in + spec.markov_order, dtype=np.int64)
    out[: spec.markov_order] = rng.integers(0, v, size=spec.markov_order)
    if spec.markov_order == 1:
        for i in range(1, out.size):
            out[i] = np.searchsorted(cum[out[i - 1]], draws[i], side="right")
    else:
        for i in range(2, out.size):
            out[i] = np.searchsorted(cum[out[i - 2], out[i - 1]], draws[i], side="right")
    out = np.minimum(out, v - 1)
    return out[burn_in + spec.markov_order :]


def splits_from_chain(
    spec: ChainSpec,
    train_tokens: int,
    valid_tokens: int,
    test_tokens: int,
    seed: int = 0,
) -> CorpusSplits:
    """Independent train/valid/test streams from one chain."""
    return CorpusSplits(
        vocab=None,
        train=TokenSeq(sample(spec, train_tokens, seed=seed), spec.vocab_size),
        valid=TokenSeq(sample(spec, valid_tokens, seed=seed + 1), spec.vocab_size),
        test=TokenSeq(sample(spec, test_tokens, seed=seed + 2), spec.vocab_size),
    )


def cycle_stream(vocab_size: int, n_tokens: int) -> TokenSeq:
    """Deterministic repeating stream 0,1,...,V-1,0,1,... (entropy zero)."""
    ids = np.arange(n_tokens, dtype=np.int64) % vocab_size
    return TokenSeq(ids, vocab_size)
