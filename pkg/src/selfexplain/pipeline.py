"""The three-stage explanation pipeline: classify, localize, reason.

A question is first classified into one of four classes that decide
which parts of the self-model may be consulted, then the relevant
snippets are retrieved, and finally a prompt is assembled for the
provider. When the retrieved material includes a method, the prompt
walks that method's state machine step by step.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import PipelineError, ProviderError
from .gateway import ChatRequest, Provider
from .model import (
    PART_KNOWLEDGE,
    PART_METHOD,
    PART_TASK,
    PROFILE_FULL,
    CoTStep,
    DegradedContext,
    TmkModel,
    degrade,
    fsm_walk,
)
from .retrieval import ScoredSnippet, SnippetIndex, build_index, search

DEFAULT_K = 5
DEFAULT_K_MAX = 10


class QuestionClass(str, Enum):
    KMODEL = "kmodel"
    MMODEL = "mmodel"
    MULTIMODEL = "multimodel"
    CANT_ANSWER = "cant_answer"


PARTS_FOR_CLASS = {
    QuestionClass.KMODEL: frozenset({PART_KNOWLEDGE}),
    QuestionClass.MMODEL: frozenset({PART_TASK, PART_METHOD}),
    QuestionClass.MULTIMODEL: frozenset({PART_TASK, PART_METHOD, PART_KNOWLEDGE}),
}


@dataclass(frozen=True)
class ClassifierVerdict:
    question_class: QuestionClass
    k: int


@dataclass(frozen=True)
class ExplanationResult:
    answer: str
    verdict: ClassifierVerdict
    used_snippets: tuple[ScoredSnippet, ...]
    cot_steps: tuple[CoTStep, ...]
    trace_id: str


@dataclass(frozen=True)
class TemplateSet:
    """Prompt templates, shipped as versioned text fixtures."""

    classifier: str
    classifier_retry: str
    class_descriptions: str
    reasoner: str
    reasoner_plain: str
    reasoner_bare: str
    refusal: str
    feedback_request: str

    _FILES = {
        "classifier": "classifier_v1.txt",
        "classifier_retry": "classifier_retry_v1.txt",
        "class_descriptions": "class_descriptions_v1.txt",
        "reasoner": "reasoner_v1.txt",
        "reasoner_plain": "reasoner_plain_v1.txt",
        "reasoner_bare": "reasoner_bare_v1.txt",
        "refusal": "refusal_v1.txt",
        "feedback_request": "feedback_request_v1.txt",
    }

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        """Read templates from a directory, or the packaged defaults."""
        texts = {}
        for attr, filename in cls._FILES.items():
            if directory is None:
                source = resources.files("selfexplain").joinpath("templates", filename)
                texts[attr] = source.read_text(encoding="utf-8")
            else:
                texts[attr] = (Path(directory) / filename).read_text(encoding="utf-8")
        return cls(**texts)


_PLACEHOLDER_RE = re.compile(r"\{(question|class_descriptions|snippets|cot_steps|k)\}")


def render_template(template: str, **values: object) -> str:
    """Substitute named placeholders in one pass; braces in values stay put."""
    return _PLACEHOLDER_RE.sub(lambda m: str(values.get(m.group(1), m.group(0))), template)


_CLASS_RE = re.compile(
    r"\b(multimodel|mmodel|kmodel|cant[_ ]?answer|can't\s+answer)\b", re.IGNORECASE)
_K_RE = re.compile(r"\bk\s*[=:]\s*(\d+)", re.IGNORECASE)


def parse_classifier_reply(reply: str) -> tuple[QuestionClass, int | None] | None:
    """Pull (class, k) out of a provider reply; None when no class is found."""
    match = _CLASS_RE.search(reply)
    if not match:
        return None
    token = match.group(1).lower()
    if token.startswith("can"):
        question_class = QuestionClass.CANT_ANSWER
    else:
        question_class = QuestionClass(token)
    k_match = _K_RE.search(reply)
    return question_class, int(k_match.group(1)) if k_match else None


def classify(question: str, llm: Provider, *, templates: TemplateSet | None = None,
             default_k: int = DEFAULT_K, k_max: int = DEFAULT_K_MAX) -> ClassifierVerdict:
    """Classify a question and extract its complexity k.

    An unparseable reply is re-asked once with a stricter format
    instruction; if that also fails the verdict falls back to
    cant_answer with the default k. k is always clamped into [1, k_max].
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    templates = templates or TemplateSet.load()
    prompt = render_template(templates.classifier, question=question,
                             class_descriptions=templates.class_descriptions.rstrip(),
                             k=k_max)
    parsed = parse_classifier_reply(llm.complete(ChatRequest(user_text=prompt)))
    if parsed is None:
        retry_prompt = render_template(templates.classifier_retry, question=question)
        parsed = parse_classifier_reply(llm.complete(ChatRequest(user_text=retry_prompt)))
    if parsed is None:
        return ClassifierVerdict(QuestionClass.CANT_ANSWER, default_k)
    question_class, k = parsed
    if k is None:
        k = default_k
    return ClassifierVerdict(question_class, max(1, min(k_max, k)))


def localize(verdict: ClassifierVerdict, question: str,
             index: SnippetIndex) -> list[ScoredSnippet]:
    """Retrieve the k most relevant snippets from the parts the class allows."""
    if verdict.question_class is QuestionClass.CANT_ANSWER:
        raise ValueError("cant_answer questions are not localized")
    if not index.snippets:
        return []
    return search(index, question, verdict.k, PARTS_FOR_CLASS[verdict.question_class])


def build_reason_prompt(question: str, verdict: ClassifierVerdict,
                        localized: list[ScoredSnippet], model: TmkModel, *,
                        templates: TemplateSet,
                        context: DegradedContext | None = None,
                        ) -> tuple[str, tuple[CoTStep, ...]]:
    """Assemble the reasoner prompt and the walk steps it embeds.

    With the full prompt profile the localized snippet texts are quoted
    and, when a method was retrieved, the best-scored method's state
    machine is walked into numbered steps. The degraded profiles shrink
    the prompt down to the overview sentence or the bare question.
    """
    profile = context.prompt_profile if context else PROFILE_FULL
    if profile == PROFILE_FULL:
        snippet_block = "\n".join(f"- {s.snippet.text}" for s in localized)
        if not snippet_block:
            snippet_block = "(nothing relevant was found in the self-model)"
        steps: tuple[CoTStep, ...] = ()
        cot_block = ""
        best_method = next((s for s in localized if s.snippet.part == PART_METHOD), None)
        if best_method is not None:
            method = model.methods[best_method.snippet.source_id]
            steps = tuple(fsm_walk(method, model))
            lines = [format_cot_step(step) for step in steps]
            cot_block = ("Walk of the most relevant method, step by step:\n"
                         + "\n".join(lines) + "\n")
        prompt = render_template(templates.reasoner, question=question,
                                 snippets=snippet_block, cot_steps=cot_block, k=verdict.k)
        return prompt, steps
    level = context.level.level if context else 0
    if level >= 6:
        return render_template(templates.reasoner_bare, question=question), ()
    overview = model.overview if context and context.overview_only else ""
    prompt = render_template(templates.reasoner_plain, question=question,
                             snippets=overview, k=verdict.k)
    return prompt, ()


def format_cot_step(step: CoTStep) -> str:
    return (f"Step {step.step_index}: {step.from_state} -> {step.to_state}: "
            f"{step.annotation_text}")


def reason(question: str, verdict: ClassifierVerdict, localized: list[ScoredSnippet],
           model: TmkModel, llm: Provider, *, templates: TemplateSet | None = None,
           context: DegradedContext | None = None, temperature: float = 0.0) -> str:
    """Run the reasoning stage and return the provider's answer text."""
    templates = templates or TemplateSet.load()
    prompt, _ = build_reason_prompt(question, verdict, localized, model,
                                    templates=templates, context=context)
    return llm.complete(ChatRequest(user_text=prompt, temperature=temperature))


def explain(question: str, model: TmkModel, index: SnippetIndex, llm: Provider, *,
            context: DegradedContext | None = None, templates: TemplateSet | None = None,
            default_k: int = DEFAULT_K, k_max: int = DEFAULT_K_MAX,
            temperature: float = 0.0) -> ExplanationResult:
    """Answer one question end to end: classify, localize, reason.

    A cant_answer verdict short-circuits to the fixed refusal text with
    no snippets consulted. Provider failures are wrapped in
    ``PipelineError`` carrying the request's trace id.
    """
    templates = templates or TemplateSet.load()
    trace_id = uuid.uuid4().hex
    try:
        verdict = classify(question, llm, templates=templates,
                           default_k=default_k, k_max=k_max)
        if verdict.question_class is QuestionClass.CANT_ANSWER:
            return ExplanationResult(answer=templates.refusal.strip(), verdict=verdict,
                                     used_snippets=(), cot_steps=(), trace_id=trace_id)
        localized = localize(verdict, question, index)
        prompt, steps = build_reason_prompt(question, verdict, localized, model,
                                            templates=templates, context=context)
        answer = llm.complete(ChatRequest(user_text=prompt, temperature=temperature))
    except ProviderError as exc:
        raise PipelineError(f"provider failure while answering: {exc}",
                            trace_id=trace_id, cause=exc) from exc
    return ExplanationResult(answer=answer, verdict=verdict,
                             used_snippets=tuple(localized), cot_steps=steps,
                             trace_id=trace_id)


class ExplainPipeline:
    """Immutable configuration for answering questions over one model.

    Construction degrades the model to the requested level and indexes
    the surviving snippets; ``explain`` calls are then independent and
    safe to issue concurrently.
    """

    def __init__(self, model: TmkModel, provider: Provider, *, level: int = 0,
                 templates: TemplateSet | None = None, default_k: int = DEFAULT_K,
                 k_max: int = DEFAULT_K_MAX, temperature: float = 0.0):
        self.model = model
        self.provider = provider
        self.context = degrade(model, level)
        self.index = build_index(self.context.snippets)
        self.templates = templates or TemplateSet.load()
        self.default_k = default_k
        self.k_max = k_max
        self.temperature = temperature

    @property
    def level(self) -> int:
        return self.context.level.level

    def explain(self, question: str) -> ExplanationResult:
        return explain(question, self.model, self.index, self.provider,
                       context=self.context, templates=self.templates,
                       default_k=self.default_k, k_max=self.k_max,
                       temperature=self.temperature)
