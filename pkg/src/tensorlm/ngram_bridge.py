"""One-hot sentence tensors and their equivalence to count-based n-grams.

A joint distribution over length-n token windows is stored as a dense
|V|^n tensor. Window probabilities are then inner products of one-hot
sentence tensors with that tensor, prefix marginals are inner products
with all-ones-padded tensors, and conditionals are their ratios. Every
tensor-route quantity has a pure-counting oracle alongside it; the two
routes share no code.

This module is a verification instrument for small vocabularies, not a
production n-gram store: tables are dense and unsmoothed by design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import DenseTensor, check_tensor_size, inner_product, rank_one


class UnseenContextError(ValueError):
    """Conditional probability requested for a context with zero count."""


@dataclass(frozen=True)
class OneHotSentence:
    """A fixed-length token-id sequence interpreted as one-hot vectors."""

    ids: tuple
    vocab_size: int

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        for i in self.ids:
            if not 0 <= i < self.vocab_size:
                raise ValueError(f"token id {i} outside [0, {self.vocab_size})")


@dataclass(frozen=True)
class NgramTable:
    """Maximum-likelihood joint distribution over length-n windows.

    `joint` holds probabilities (entries sum to 1); raw counts are kept
    alongside so count-based queries never touch the tensor route.
    """

    order: int
    vocab_size: int
    joint: DenseTensor
    counts: np.ndarray
    total_windows: int


def one_hot(index: int, dim: int) -> np.ndarray:
    if not 0 <= index < dim:
        raise ValueError(f"index {index} outside [0, {dim})")
    v = np.zeros(dim)
    v[index] = 1.0
    return v


def build_joint(windows, vocab_size: int, n: int) -> NgramTable:
    """Count length-n windows into a normalized |V|^n tensor.

    No smoothing: unseen windows have probability exactly zero.
    """
    if n < 1 or vocab_size < 1:
        raise ValueError("need n >= 1 and vocab_size >= 1")
    check_tensor_size(vocab_size**n)
    counts = np.zeros((vocab_size,) * n, dtype=np.int64)
    total = 0
    for w in windows:
        w = tuple(int(i) for i in w)
        if len(w) != n:
            raise ValueError(f"window {w} does not have length {n}")
        for i in w:
            if not 0 <= i < vocab_size:
                raise ValueError(f"token id {i} outside [0, {vocab_size})")
        counts[w] += 1
        total += 1
    if total == 0:
        raise ValueError("empty window stream")
    joint = DenseTensor(counts / total)
    return NgramTable(
        order=n,
        vocab_size=vocab_size,
        joint=joint,
        counts=counts,
        total_windows=total,
    )


def sentence_tensor(s: OneHotSentence) -> DenseTensor:
    """Rank-one tensor of the sentence's one-hot word vectors."""
    return rank_one([one_hot(i, s.vocab_size) for i in s.ids])


def prefix_tensor(prefix_ids, n: int, vocab_size: int) -> DenseTensor:
    """One-hot prefix padded with all-ones vectors up to order n.

    Its inner product with a joint tensor marginalizes out the padded
    positions, yielding the prefix probability.
    """
    prefix_ids = tuple(int(i) for i in prefix_ids)
    if not 1 <= len(prefix_ids) <= n:
        raise ValueError(f"prefix length must be in [1, {n}], got {len(prefix_ids)}")
    vectors = [one_hot(i, vocab_size) for i in prefix_ids]
    vectors += [np.ones(vocab_size)] * (n - len(prefix_ids))
    return rank_one(vectors)


def conditional_prob(table: NgramTable, prefix_ids, next_id: int) -> float:
    """p(next | prefix) as a ratio of prefix-tensor inner products."""
    prefix_ids = tuple(int(i) for i in prefix_ids)
    if len(prefix_ids) + 1 > table.order:
        raise ValueError("prefix too long for table order")
    numerator = inner_product(
        prefix_tensor(prefix_ids + (int(next_id),), table.order, table.vocab_size),
        table.joint,
    )
    if prefix_ids:
        denominator = inner_product(
            prefix_tensor(prefix_ids, table.order, table.vocab_size), table.joint
        )
    else:
        denominator = float(np.sum(table.joint.array))
    if denominator <= 0.0:
        raise UnseenContextError(f"context {prefix_ids} has zero probability")
    return numerator / denominator


def oracle_joint_prob(windows, window) -> float:
    """Empirical window probability by direct counting. No tensors."""
    windows = [tuple(w) for w in windows]
    if not windows:
        raise ValueError("empty window stream")
    window = tuple(int(i) for i in window)
    return sum(1 for w in windows if w == window) / len(windows)


def oracle_marginal_prob(windows, prefix) -> float:
    """Empirical probability that a window starts with `prefix`."""
    windows = [tuple(w) for w in windows]
    if not windows:
        raise ValueError("empty window stream")
    prefix = tuple(int(i) for i in prefix)
    return sum(1 for w in windows if w[: len(prefix)] == prefix) / len(windows)


def oracle_ngram_prob(windows, query) -> float:
    """Count-based conditional p(query[-1] | query[:-1]).

    Counts windows whose leading elements match; deliberately independent
    of the tensor machinery so it can serve as its oracle.
    """
    windows = [tuple(w) for w in windows]
    if not windows:
        raise ValueError("empty window stream")
    query = tuple(int(i) for i in query)
    if not query:
        raise ValueError("empty query")
    numerator = sum(1 for w in windows if w[: len(query)] == query)
    if len(query) == 1:
        denominator = len(windows)
    else:
        prefix = query[:-1]
        denominator = sum(1 for w in windows if w[: len(prefix)] == prefix)
    if denominator == 0:
        raise UnseenContextError(f"context {query[:-1]} never observed")
    return numerator / denominator
