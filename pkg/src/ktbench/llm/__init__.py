"""Language-model pathway: prompts, corpora, backends, and prediction."""

from .backends import (
    CAP_CHAT,
    CAP_COMPLETION,
    ChatResult,
    CompletionResult,
    HttpBackend,
    HttpBackendConfig,
    LlmBackend,
    MalformedPromptError,
    MockBackend,
    RecordingBackend,
    ReplayBackend,
    TransportError,
    parse_prompt_fields,
    request_hash,
)
from .corpus import PromptExample, export_finetune_corpus, iter_corpus, read_corpus
from .decoding import NoSignal, ParseFailure, TokenLogprobs, normalize_logprobs, parse_completion
from .predict import (
    MODE_FINETUNED,
    MODE_ZERO_SHOT,
    SURROGATE_P_CORRECT,
    SURROGATE_P_WRONG,
    PredictionFailure,
    predict_llm,
    predict_llm_batch,
)
from .prompts import (
    RESPONSE_STUB,
    SYSTEM_MESSAGE,
    ChatRequest,
    build_zero_shot_request,
    render_extended_prompt,
    render_minimal_prompt,
    render_prompt,
    space_digits,
)

__all__ = [
    "CAP_CHAT",
    "CAP_COMPLETION",
    "ChatRequest",
    "ChatResult",
    "CompletionResult",
    "HttpBackend",
    "HttpBackendConfig",
    "LlmBackend",
    "MODE_FINETUNED",
    "MODE_ZERO_SHOT",
    "MalformedPromptError",
    "MockBackend",
    "NoSignal",
    "ParseFailure",
    "PredictionFailure",
    "PromptExample",
    "RESPONSE_STUB",
    "RecordingBackend",
    "ReplayBackend",
    "SURROGATE_P_CORRECT",
    "SURROGATE_P_WRONG",
    "SYSTEM_MESSAGE",
    "TokenLogprobs",
    "TransportError",
    "build_zero_shot_request",
    "export_finetune_corpus",
    "iter_corpus",
    "normalize_logprobs",
    "parse_completion",
    "parse_prompt_fields",
    "predict_llm",
    "predict_llm_batch",
    "read_corpus",
    "render_extended_prompt",
    "render_minimal_prompt",
    "render_prompt",
    "request_hash",
    "space_digits",
]
