"""Tokenization, vocabulary, and stream batching for PTB-style corpora.

Whitespace tokenization with a newline-as-<eos> convention. Streams are
contiguous token-id arrays; batching follows the standard stateful
truncated-BPTT layout (split the stream into batch_size rows, slide a
seq_len window, targets shifted by one).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

UNK = "<unk>"
EOS = "<eos>"


@dataclass(frozen=True)
class Vocab:
    tokens: tuple
    index: dict = field(repr=False)
    unk_id: int
    eos_id: int

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)


@dataclass(frozen=True)
class TokenSeq:
    """Contiguous id stream with <eos> inserted at line breaks."""

    ids: np.ndarray
    vocab_size: int

    def __post_init__(self):
        arr = np.asarray(self.ids, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("ids must be a 1-D stream")
        if arr.size and (arr.min() < 0 or arr.max() >= self.vocab_size):
            raise ValueError("token id outside vocabulary")
        arr.flags.writeable = False
        object.__setattr__(self, "ids", arr)

    def __len__(self) -> int:
        return int(self.ids.size)


def tokenize(line: str) -> list[str]:
    return line.split()


def build_vocab(lines, max_size: int | None = None, min_count: int = 1) -> Vocab:
    """Build a vocabulary from an iterable of text lines.

    <unk> and <eos> are always present (ids 0 and 1). Remaining tokens are
    ordered by frequency (descending), ties broken lexicographically, then
    cut to `max_size` total entries or filtered by `min_count`. The result
    is deterministic for identical input.
    """
    counts = Counter()
    saw_text = False
    for line in lines:
        saw_text = True
        counts.update(tokenize(line))
    if not saw_text:
        raise ValueError("empty input stream")
    counts.pop(UNK, None)
    counts.pop(EOS, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, c in ranked if c >= min_count]
    if max_size is not None:
        if max_size < 2:
            raise ValueError("max_size must cover the two special tokens")
        kept = kept[: max_size - 2]
    tokens = (UNK, EOS, *kept)
    index = {tok: i for i, tok in enumerate(tokens)}
    return Vocab(tokens=tokens, index=index, unk_id=index[UNK], eos_id=index[EOS])


def encode(vocab: Vocab, lines) -> TokenSeq:
    """Encode lines into one contiguous stream, <eos> at each line break."""
    ids = []
    for line in lines:
        ids.extend(vocab.id_of(tok) for tok in tokenize(line))
        ids.append(vocab.eos_id)
    return TokenSeq(ids=np.array(ids, dtype=np.int64), vocab_size=len(vocab))


def decode(vocab: Vocab, ids) -> list[str]:
    return [vocab.tokens[int(i)] for i in ids]


def oov_rate(seq: TokenSeq, vocab: Vocab) -> float:
    """Fraction of stream tokens mapped to <unk>."""
    if len(seq) == 0:
        return 0.0
    return float(np.mean(seq.ids == vocab.unk_id))


def batchify(seq: TokenSeq, batch_size: int, seq_len: int):
    """Yield (inputs, targets) blocks of shape (batch_size, seq_len).

    The stream is cut into batch_size contiguous rows; consecutive blocks
    advance along the rows so hidden state can be carried across them.
    Targets are inputs shifted by one position.
    """
    if batch_size < 1 or seq_len < 1:
        raise ValueError("batch_size and seq_len must be positive")
    if len(seq) < batch_size * (seq_len + 1):
        raise ValueError(
            f"stream of {len(seq)} tokens too short for "
            f"batch_size={batch_size}, seq_len={seq_len}"
        )
    cols = len(seq) // batch_size
    rows = seq.ids[: batch_size * cols].reshape(batch_size, cols)
    for start in range(0, cols - seq_len, seq_len):
        yield rows[:, start : start + seq_len], rows[:, start + 1 : start + seq_len + 1]


def num_batches(seq: TokenSeq, batch_size: int, seq_len: int) -> int:
    cols = len(seq) // batch_size
    return max(0, (cols - 1) // seq_len)


def stream_windows(seq: TokenSeq, n: int):
    """All length-n sliding windows of the stream (len(seq) - n + 1 of them)."""
    if n < 1:
        raise ValueError("window length must be positive")
    ids = seq.ids
    for i in range(len(ids) - n + 1):
        yield tuple(int(x) for x in ids[i : i + n])


def line_windows(vocab: Vocab, lines, n: int):
    """Length-n windows taken within each line independently.

    No <eos> padding and no cross-line windows; this is the window stream
    the n-gram equivalence checks run on.
    """
    if n < 1:
        raise ValueError("window length must be positive")
    for line in lines:
        ids = [vocab.id_of(tok) for tok in tokenize(line)]
        for i in range(len(ids) - n + 1):
            yield tuple(ids[i : i + n])


@dataclass(frozen=True)
class CorpusSplits:
    vocab: Vocab | None
    train: TokenSeq
    valid: TokenSeq | None = None
    test: TokenSeq | None = None


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_splits(
    train_path,
    valid_path=None,
    test_path=None,
    max_size: int | None = None,
    min_count: int = 1,
) -> CorpusSplits:
    """Read split files and encode them with a vocabulary built on train."""
    train_lines = read_lines(train_path)
    vocab = build_vocab(train_lines, max_size=max_size, min_count=min_count)
    train = encode(vocab, train_lines)
    valid = encode(vocab, read_lines(valid_path)) if valid_path else None
    test = encode(vocab, read_lines(test_path)) if test_path else None
    return CorpusSplits(vocab=vocab, train=train, valid=valid, test=test)
