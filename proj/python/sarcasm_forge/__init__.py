"""Python access to the sarcasm_forge C++ core."""

from ._core import (
    ConfusionMatrix,
    ForgeError,
    Label,
    MultimodalInstance,
    ParsedTrajectory,
    RepetitionConfig,
    RewardWeights,
    accuracy,
    anti_repetition_filter,
    confusion,
    error_code_of,
    extract_label,
    format_reward,
    generate_instances,
    group_advantages,
    kl_estimate,
    macro_f1,
    ngram_entropy,
    normalize_rows,
    oracle_score,
    parse_trajectory,
    render_prompt,
    stratified_split,
    total_reward,
    trigram_jaccard,
)

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "ForgeError",
    "Label",
    "MultimodalInstance",
    "ParsedTrajectory",
    "RepetitionConfig",
    "RewardWeights",
    "accuracy",
    "anti_repetition_filter",
    "confusion",
    "error_code_of",
    "extract_label",
    "format_reward",
    "generate_instances",
    "group_advantages",
    "kl_estimate",
    "macro_f1",
    "ngram_entropy",
    "normalize_rows",
    "oracle_score",
    "parse_trajectory",
    "render_prompt",
    "stratified_split",
    "total_reward",
    "trigram_jaccard",
]
