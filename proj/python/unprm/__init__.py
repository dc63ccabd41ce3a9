"""Python bindings for the unprm library."""

from ._core import (
    DataError,
    Error,
    ProviderError,
    UsageError,
    answers_match,
    count_step_tags,
    escape_step_text,
    export_record,
    harmonic_f1,
    log_perplexity,
    majority_vote,
    mc_ppl,
    normalize_answer,
    normalized_entropy,
    parse_record,
    prm_bon,
    processbench_f1,
    run_cli,
    sequence_entropy,
    solution_reward,
    unescape_step_text,
    wrf_vote,
)

__all__ = [
    "DataError",
    "Error",
    "ProviderError",
    "UsageError",
    "answers_match",
    "count_step_tags",
    "escape_step_text",
    "export_record",
    "harmonic_f1",
    "log_perplexity",
    "majority_vote",
    "mc_ppl",
    "normalize_answer",
    "normalized_entropy",
    "parse_record",
    "prm_bon",
    "processbench_f1",
    "run_cli",
    "sequence_entropy",
    "solution_reward",
    "unescape_step_text",
    "wrf_vote",
]
