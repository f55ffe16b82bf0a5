"""Compact RL-trained document selector for edge RAG pipelines."""

from .dataio import (
    EmbeddingStore,
    QAExample,
    build_candidate_pool,
    load_qa_jsonl,
    read_embedding_store,
    write_embedding_store,
    write_qa_jsonl,
)
from .errors import (
    DataError,
    FormatError,
    RewardError,
    ShapeError,
    SrasError,
    TrainingError,
)
from .numcore import AdamW, SeededRng, matvec, softmax
from .policy import TopKAction, argmax_topk, entropy, logprob_of, sample_topk
from .reward import (
    DEFAULT_STOPWORDS,
    RewardConfig,
    RewardEngine,
    embedding_cosine_semantic,
    exact_match,
    hybrid_reward,
    normalize_answer,
    normalize_batch,
    relaxed_f1,
)
from .scorer import (
    ScoreGradients,
    SelectorParams,
    init_params,
    load_params,
    param_count,
    save_params,
    score_candidates,
    score_gradients,
)
from .synthenv import SynthConfig, generate_task, oracle_reward
from .trainer import (
    TrainConfig,
    Transition,
    compute_advantage,
    curriculum_order,
    ppo_clip_loss,
    train,
    warmup_epoch,
)

__version__ = "0.1.0"
