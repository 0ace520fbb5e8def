"""Command-line entry point.

Machine-readable results go to stdout (tab-separated, 6 significant
digits, deviations in scientific notation); diagnostics go to stderr.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import ngram_bridge, synthetic, tensor_core, tslm_model
from .corpus import (
    EOS,
    UNK,
    Vocab,
    TokenSeq,
    build_vocab,
    encode,
    line_windows,
    load_splits,
    read_lines,
)
from .training_eval import TrainConfig, TslmModel, perplexity, train


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embed-size", type=int, default=64)
    p.add_argument("--hidden-size", type=int, default=64)
    p.add_argument("--seq-len", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--rescale-hidden", action="store_true")
    p.add_argument(
        "--stateless",
        action="store_true",
        help="restart hidden state at every window instead of carrying it",
    )


def _config_from(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        clip_norm=args.clip,
        batch_size=args.batch_size,
        seq_len=args.seq_len,
        hidden_size=args.hidden_size,
        embed_size=args.embed_size,
        seed=args.seed,
        rescale_hidden=args.rescale_hidden,
        stateful=not args.stateless,
    )


def _new_model(vocab_size: int, config: TrainConfig) -> TslmModel:
    params = tslm_model.init_params(
        vocab_size, config.embed_size, config.hidden_size,
        seed=config.seed, scheme="positive",
    )
    return TslmModel(
        params,
        rescale_hidden=config.rescale_hidden,
        context_window=None if config.stateful else config.seq_len,
    )


def cmd_train(args) -> int:
    splits = load_splits(args.train, args.valid, args.test)
    config = _config_from(args)
    model = _new_model(len(splits.vocab), config)
    params = model.params
    train(model, splits, config, log_stream=sys.stdout)
    if splits.test is not None:
        report = perplexity(model, splits.test, split="test")
        print(f"test ppl {report.perplexity:.6g}", file=sys.stderr)
    if args.checkpoint:
        tslm_model.save_checkpoint(args.checkpoint, params, splits.vocab.tokens)
        print(f"checkpoint written to {args.checkpoint}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    params, tokens = tslm_model.load_checkpoint(args.checkpoint)
    index = {tok: i for i, tok in enumerate(tokens)}
    vocab = Vocab(
        tokens=tuple(tokens),
        index=index,
        unk_id=index.get(UNK, 0),
        eos_id=index.get(EOS, 0),
    )
    seq = encode(vocab, read_lines(args.data))
    model = TslmModel(
        params,
        rescale_hidden=args.rescale_hidden,
        context_window=args.context_window,
    )
    report = perplexity(model, seq, split="eval")
    print(f"ppl\t{report.perplexity:.6g}")
    print(f"tokens {report.token_count}", file=sys.stderr)
    return 0


def cmd_oracle_check(args) -> int:
    lines = read_lines(args.data)
    vocab = build_vocab(lines, max_size=args.vocab_limit)
    windows = list(line_windows(vocab, lines, args.n))
    if not windows:
        raise ValueError(f"no length-{args.n} windows in {args.data}")
    table = ngram_bridge.build_joint(windows, len(vocab), args.n)
    distinct = sorted(set(windows))
    max_dev = 0.0

    for w in distinct:
        sent = ngram_bridge.sentence_tensor(
            ngram_bridge.OneHotSentence(w, len(vocab))
        )
        tensor_p = tensor_core.inner_product(sent, table.joint)
        max_dev = max(max_dev, abs(tensor_p - ngram_bridge.oracle_joint_prob(windows, w)))
        for i in range(1, args.n + 1):
            prefix = w[:i]
            marginal = tensor_core.inner_product(
                ngram_bridge.prefix_tensor(prefix, args.n, len(vocab)), table.joint
            )
            max_dev = max(
                max_dev,
                abs(marginal - ngram_bridge.oracle_marginal_prob(windows, prefix)),
            )
            cond = ngram_bridge.conditional_prob(table, prefix[:-1], prefix[-1])
            max_dev = max(
                max_dev, abs(cond - ngram_bridge.oracle_ngram_prob(windows, prefix))
            )

    print(f"max_abs_deviation\t{max_dev:.3e}")
    print(
        f"checked {len(distinct)} distinct windows over |V|={len(vocab)}, n={args.n}",
        file=sys.stderr,
    )
    return 0


def cmd_equivalence_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    max_dev = 0.0
    for _ in range(args.trials):
        params = tslm_model.TslmParams(
            embed=rng.uniform(-1, 1, size=(args.vocab, args.m)),
            u_mat=rng.uniform(-1, 1, size=(args.r, args.m)),
            w_mat=rng.uniform(-1, 1, size=(args.r, args.r)),
            v_mat=rng.uniform(-1, 1, size=(args.vocab, args.r)),
            h0_pre=np.ones(args.r),
        )
        ids = rng.integers(0, args.vocab, size=args.t - 1)
        trace = tslm_model.forward_sequence(params, ids)
        direct = trace.logits[-1]
        contracted = tslm_model.contract_with_inputs(
            tslm_model.build_param_tensor(params, args.t), params.embed[ids]
        )
        max_dev = max(max_dev, float(np.max(np.abs(direct - contracted))))
    print(f"max_abs_deviation\t{max_dev:.3e}")
    return 0


def cmd_decompose_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    tensor = tensor_core.DenseTensor(rng.standard_normal((args.dim,) * args.order))
    norm = float(np.linalg.norm(tensor.array))
    print("rank\tabs_error\trel_error")
    for r in range(1, args.rank + 1):
        chain = tensor_core.recursive_decompose(tensor, r)
        recon = tensor_core.reconstruct(chain, args.order)
        err = float(np.linalg.norm(tensor.array - recon.array))
        print(f"{r}\t{err:.3e}\t{err / norm:.3e}")
    return 0


def cmd_sweep(args) -> int:
    # Sweeps mirror the fixed-order reading of the model: stateless
    # windows, rescaled hidden state.
    args.stateless = True
    args.rescale_hidden = True
    if args.train:
        base_splits = load_splits(args.train, args.valid, args.test)
        vocab_size = len(base_splits.vocab)
    else:
        spec = synthetic.trigram_chain(args.vocab, concentration=0.4, seed=args.seed)
        base_splits = synthetic.splits_from_chain(
            spec, args.synthetic_tokens, args.synthetic_tokens // 5,
            args.synthetic_tokens // 5, seed=args.seed,
        )
        vocab_size = spec.vocab_size
        print(
            f"synthetic second-order chain, exp(entropy) = "
            f"{np.exp(spec.conditional_entropy):.6g}",
            file=sys.stderr,
        )
    print("value\tvalid_ppl\ttest_ppl")
    for value in args.values:
        config = _config_from(args)
        if args.param == "seq-len":
            config.seq_len = value
        else:
            config.hidden_size = config.embed_size = value
        model = _new_model(vocab_size, config)
        train(model, base_splits, config)
        valid_ppl = (
            perplexity(model, base_splits.valid).perplexity
            if base_splits.valid is not None
            else float("nan")
        )
        test_ppl = (
            perplexity(model, base_splits.test).perplexity
            if base_splits.test is not None
            else float("nan")
        )
        print(f"{value}\t{valid_ppl:.6g}\t{test_ppl:.6g}")
        sys.stdout.flush()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensorlm",
        description="Tensor-space language modeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the multiplicative model on text files")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test")
    p.add_argument("--checkpoint")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="perplexity of a checkpoint on a text file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--rescale-hidden", action="store_true")
    p.add_argument("--context-window", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "oracle-check",
        help="verify n-gram equivalences of the tensor route on a corpus",
    )
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--vocab-limit", type=int, default=None)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser(
        "equivalence-check",
        help="compare the recurrence against the explicit tensor contraction",
    )
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--vocab", type=int, default=4)
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_equivalence_check)

    p = sub.add_parser(
        "decompose-demo", help="per-rank reconstruction error on a random tensor"
    )
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_decompose_demo)

    p = sub.add_parser(
        "sweep", help="perplexity sweep over sequence length or hidden size"
    )
    p.add_argument("--param", choices=("seq-len", "hidden-size"), required=True)
    p.add_argument("--values", type=int, nargs="+", required=True)
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--vocab", type=int, default=6)
    p.add_argument("--synthetic-tokens", type=int, default=20000)
    _add_config_flags(p)
    p.set_defaults(
        func=cmd_sweep, lr=0.1, epochs=6, hidden_size=16, embed_size=16, seq_len=8
    )

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures exit 1; argparse handles usage
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
