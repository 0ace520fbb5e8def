"""Tensor-space language modeling toolkit.

Dense tensor calculus with n-gram equivalence oracles, plus the derived
multiplicative recurrent language model with hand-written gradients.
"""

from .tensor_core import (
    DecompChain,
    DenseTensor,
    SvdResult,
    as_tensor,
    delta_tensor,
    inner_product,
    matricize_last,
    rank_one,
    reconstruct,
    recursive_decompose,
    svd,
    tensor_product,
)
from .ngram_bridge import (
    NgramTable,
    OneHotSentence,
    UnseenContextError,
    build_joint,
    conditional_prob,
    oracle_joint_prob,
    oracle_marginal_prob,
    oracle_ngram_prob,
    prefix_tensor,
    sentence_tensor,
)
from .corpus import (
    CorpusSplits,
    TokenSeq,
    Vocab,
    batchify,
    build_vocab,
    encode,
    line_windows,
    load_splits,
    oov_rate,
    stream_windows,
)
from .tslm_model import (
    ForwardTrace,
    Gradients,
    TslmParams,
    build_param_tensor,
    conditional_distribution,
    contract_with_inputs,
    forward_sequence,
    forward_step,
    init_params,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
)
from .training_eval import (
    AdditiveRnnModel,
    EvalReport,
    NgramBaseline,
    TrainConfig,
    TrainingDivergedError,
    TslmModel,
    baseline_ngram,
    baseline_rnn_cell,
    perplexity,
    train,
)

__version__ = "0.1.0"
