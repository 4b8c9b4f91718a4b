"""Self-explanation engine for agents carrying a task-method-knowledge
self-model: parsing and validation, deterministic snippet retrieval, an
LLM-backed explanation pipeline, evaluation studies, and an HTTP service.
"""

from .dot_export import export_dot
from .errors import (
    AuthError,
    ConfigError,
    CycleError,
    DanglingReferenceError,
    DuplicateIdError,
    MalformedResponseError,
    ModelSyntaxError,
    PipelineError,
    ProviderError,
    RetryExhaustedError,
    SchemaError,
    TmkError,
)
from .gateway import (
    AlternatingMock,
    ChatRequest,
    HttpProvider,
    MockRule,
    ProviderConfig,
    ScriptedMock,
    complete,
    load_mock_script,
    mock_complete,
)
from .harness import (
    AblationReport,
    BankEntry,
    Judgment,
    PrecisionReport,
    QuestionBank,
    load_judgments,
    load_precision_questions,
    load_question_bank,
    paired_t_test,
    run_ablation_study,
    run_correctness_study,
    run_precision_study,
    summarize_correctness,
)
from .model import (
    Annotation,
    CoTStep,
    DegradationLevel,
    DegradedContext,
    KnowledgeEntry,
    Method,
    Snippet,
    Task,
    TmkModel,
    Transition,
    Violation,
    compute_layers,
    degrade,
    fsm_walk,
    snippets,
    validate,
)
from .parsing import parse_model, parse_model_file, serialize_model
from .pipeline import (
    ClassifierVerdict,
    ExplainPipeline,
    ExplanationResult,
    QuestionClass,
    TemplateSet,
    classify,
    explain,
    localize,
    reason,
)
from .retrieval import (
    EmbeddingVector,
    ScoredSnippet,
    SnippetIndex,
    answer_similarity,
    build_index,
    search,
    tokenize,
)
from .service import ExplainService, RecordStore, ServiceConfig, make_server
from .stats import TTestResult, regularized_incomplete_beta, student_t_cdf, two_tailed_p

__version__ = "0.1.0"
