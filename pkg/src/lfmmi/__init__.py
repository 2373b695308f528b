"""Weighted finite-state acceptor toolkit for LF-MMI training and decoding."""

__version__ = "0.1.0"

from .emissions import Emissions, load_emissions, save_emissions
from .fsa import Arc, Fsa, compose, connect, from_text, load_fsa, save_fsa, to_text
from .forward import (
    FrameScores,
    OccupancyTable,
    forward_backward,
    forward_frame_scores,
    forward_trellis,
)
from .graphs import (
    PrefixSplit,
    TopologyConfig,
    compile_denominator,
    compile_numerator,
    compile_prefix_numerator,
    make_split,
)
from .lexicon import Lexicon, SymbolTable, load_lexicon, load_symbol_table
from .lm import PhoneBigramLm, estimate_phone_bigram, load_phone_lm, save_phone_lm
from .scorer import (
    DenominatorCache,
    LossBreakdown,
    PrefixScoreCache,
    combined_objective,
    lfmmi_loss_and_grad,
    mmi_alignment_score,
    mmi_log_posterior,
    mmi_prefix_delta,
    mmi_prefix_score,
    precompute_denominator,
)
from .decoding import (
    DecodeConfig,
    NBestEntry,
    NBestList,
    aed_beam_search,
    nt_alsd_beam_search,
    read_nbest_jsonl,
    rescore_nbest,
    write_nbest_jsonl,
)
from .base_scorers import (
    EOS_TOKEN,
    CtcPrefixScorer,
    JointTableScorer,
    TokenNgramScorer,
    joint_table_from_token_emissions,
)
from .corpus import (
    AlignedUtterance,
    CorpusSpec,
    ErrorRateReport,
    evaluate_error_rate,
    generate_corpus,
    synthesize_emissions,
)
