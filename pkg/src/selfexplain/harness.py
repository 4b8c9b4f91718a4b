"""Study runners: correctness/completeness recording, precision, ablation.

Each study writes line-delimited records as it goes, so an interrupted
run can resume without re-asking answered questions. Correctness and
completeness judgments are entered by humans; this module records and
tabulates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .pipeline import ExplainPipeline
from .retrieval import answer_similarity
from .stats import TTestResult, paired_t_test

CATEGORIES = ("input", "output", "how_global", "why_not", "others",
              "others_context", "agent_specific")
CATEGORY_LABELS = {
    "input": "Input",
    "output": "Output",
    "how_global": "How (global)",
    "why_not": "Why not",
    "others": "Others",
    "others_context": "Others (context)",
    "agent_specific": "Agent-specific",
}
SOURCES = ("xai_bank", "adapted", "agent_specific")
CORRECTNESS_VALUES = ("yes", "partial", "no")
COMPLETENESS_VALUES = ("complete", "incomplete")

SIGNIFICANCE_ALPHA = 0.05
ABLATION_LEVELS = (1, 2, 3, 4, 5, 6)
CONSECUTIVE_PAIRS = ((1, 2), (2, 3), (3, 4), (4, 5), (5, 6))


@dataclass(frozen=True)
class BankEntry:
    question: str
    category: str
    source: str


@dataclass(frozen=True)
class QuestionBank:
    entries: tuple[BankEntry, ...]

    def questions(self) -> list[str]:
        return [e.question for e in self.entries]

    def category_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in CATEGORIES}
        for entry in self.entries:
            counts[entry.category] += 1
        return counts


def load_question_bank(path: str | Path | None = None) -> QuestionBank:
    """Load a bank from a TSV of (question, category, source); None loads
    the bundled 66-question bank."""
    if path is None:
        text = resources.files("selfexplain").joinpath(
            "data", "question_bank.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    entries: list[BankEntry] = []
    seen: set[str] = set()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    header = lines[0].split("\t")
    if header != ["question", "category", "source"]:
        raise ValueError("question bank needs a 'question\\tcategory\\tsource' header")
    for line_no, line in enumerate(lines[1:], 2):
        cells = line.split("\t")
        if len(cells) != 3:
            raise ValueError(f"line {line_no}: expected 3 tab-separated columns")
        question, category, source = (c.strip() for c in cells)
        if category not in CATEGORIES:
            raise ValueError(f"line {line_no}: unknown category '{category}'")
        if source not in SOURCES:
            raise ValueError(f"line {line_no}: unknown source '{source}'")
        if question in seen:
            raise ValueError(f"line {line_no}: duplicate question '{question}'")
        seen.add(question)
        entries.append(BankEntry(question, category, source))
    return QuestionBank(tuple(entries))


def load_precision_questions(path: str | Path | None = None) -> list[str]:
    """The repeated-question study's question list, one per line."""
    if path is None:
        text = resources.files("selfexplain").joinpath(
            "data", "precision_questions.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


@dataclass(frozen=True)
class Judgment:
    question: str
    correctness: str  # yes | partial | no
    completeness: str  # complete | incomplete
    judge: str
    answer: str

    def __post_init__(self) -> None:
        if self.correctness not in CORRECTNESS_VALUES:
            raise ValueError(f"correctness must be one of {CORRECTNESS_VALUES}")
        if self.completeness not in COMPLETENESS_VALUES:
            raise ValueError(f"completeness must be one of {COMPLETENESS_VALUES}")


def load_judgments(path: str | Path) -> list[Judgment]:
    """Load judgments from a TSV with header
    (question, correctness, completeness, judge, answer)."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    header = lines[0].split("\t")
    expected = ["question", "correctness", "completeness", "judge", "answer"]
    if header != expected:
        raise ValueError(f"judgments file needs header {expected}")
    judgments = []
    for line in lines[1:]:
        cells = line.split("\t")
        if len(cells) != 5:
            raise ValueError("each judgment row needs 5 tab-separated columns")
        judgments.append(Judgment(*cells))
    return judgments


@dataclass(frozen=True)
class TranscriptEntry:
    question: str
    answer: str | None
    question_class: str | None
    k: int | None
    error: str | None = None


class _RecordLog:
    """Append-only JSONL log keyed for resumption."""

    def __init__(self, path: str | Path | None, resume: bool):
        self.path = Path(path) if path else None
        self.existing: dict[str, dict] = {}
        if self.path and resume and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    record = json.loads(line)
                    self.existing[record["key"]] = record
        elif self.path and not resume:
            self.path.write_text("", encoding="utf-8")

    def get(self, key: str) -> dict | None:
        return self.existing.get(key)

    def append(self, key: str, record: dict) -> None:
        if self.path is None:
            return
        record = {"key": key, **record}
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def run_correctness_study(bank: QuestionBank, pipeline: ExplainPipeline, *,
                          record_path: str | Path | None = None,
                          resume: bool = False) -> list[TranscriptEntry]:
    """Ask every bank question once and persist the transcript.

    A failing question is recorded with its error and the study moves on.
    """
    log = _RecordLog(record_path, resume)
    transcript: list[TranscriptEntry] = []
    for entry in bank.entries:
        key = f"correctness:{entry.question}"
        cached = log.get(key)
        if cached is not None:
            transcript.append(TranscriptEntry(
                question=entry.question, answer=cached.get("answer"),
                question_class=cached.get("class"), k=cached.get("k"),
                error=cached.get("error")))
            continue
        try:
            result = pipeline.explain(entry.question)
        except Exception as exc:  # study must continue past one bad question
            record = TranscriptEntry(entry.question, None, None, None, error=str(exc))
            log.append(key, {"question": entry.question, "error": str(exc)})
        else:
            record = TranscriptEntry(entry.question, result.answer,
                                     result.verdict.question_class.value,
                                     result.verdict.k)
            log.append(key, {"question": entry.question, "answer": result.answer,
                             "class": result.verdict.question_class.value,
                             "k": result.verdict.k})
        transcript.append(record)
    return transcript


@dataclass(frozen=True)
class CategoryTally:
    category: str
    n_questions: int
    complete: int
    incomplete: int
    correct: int
    partially_correct: int
    incorrect: int


def summarize_correctness(bank: QuestionBank,
                          judgments: Iterable[Judgment]) -> list[CategoryTally]:
    """Tally judgments per question category, in the report's row order."""
    by_question = {e.question: e.category for e in bank.entries}
    tallies = {c: {"n": 0, "complete": 0, "incomplete": 0,
                   "yes": 0, "partial": 0, "no": 0} for c in CATEGORIES}
    for entry in bank.entries:
        tallies[entry.category]["n"] += 1
    for judgment in judgments:
        category = by_question.get(judgment.question)
        if category is None:
            raise ValueError(f"judgment for unknown question: '{judgment.question}'")
        bucket = tallies[category]
        bucket[judgment.correctness] += 1
        bucket[judgment.completeness] += 1
    return [CategoryTally(category=c, n_questions=t["n"],
                          complete=t["complete"], incomplete=t["incomplete"],
                          correct=t["yes"], partially_correct=t["partial"],
                          incorrect=t["no"])
            for c, t in tallies.items()]


def format_correctness_table(tallies: Sequence[CategoryTally]) -> str:
    """Human-readable per-category summary with completeness and
    correctness columns."""
    lines = [f"{'Category':<18} {'# of Questions':>14}  "
             f"{'Completeness':<26} {'Correctness'}"]
    lines.append("-" * 92)
    for t in tallies:
        completeness = f"Complete: {t.complete}/{t.n_questions}, " \
                       f"Incomplete: {t.incomplete}/{t.n_questions}"
        correctness = (f"Correct: {t.correct}/{t.n_questions}, "
                       f"Partially correct: {t.partially_correct}/{t.n_questions}, "
                       f"Incorrect: {t.incorrect}/{t.n_questions}")
        lines.append(f"{CATEGORY_LABELS[t.category]:<18} {t.n_questions:>14}  "
                     f"{completeness:<26} {correctness}")
    total = sum(t.n_questions for t in tallies)
    lines.append("-" * 92)
    lines.append(f"{'Total':<18} {total:>14}")
    return "\n".join(lines)


def normalize_answer(text: str) -> str:
    """Collapse whitespace so distinct-answer counting is about content."""
    return " ".join(text.split())


@dataclass(frozen=True)
class PrecisionQuestionReport:
    question: str
    n_runs: int
    failures: int
    distinct_answers: tuple[tuple[str, int], ...]  # (answer, count), first-seen order
    similarity_matrix: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class PrecisionReport:
    n_requested: int
    per_question: tuple[PrecisionQuestionReport, ...]


def run_precision_study(questions: Sequence[str], n: int, pipeline: ExplainPipeline, *,
                        record_path: str | Path | None = None,
                        resume: bool = False) -> PrecisionReport:
    """Ask each question n times and count distinct answers.

    Answers are compared exactly after whitespace normalization; the
    pairwise similarity matrix over the distinct answers captures how
    close the variants are. Failed runs are excluded from the counts and
    tallied as warnings.
    """
    if n < 2:
        raise ValueError("a precision study needs n >= 2 runs per question")
    log = _RecordLog(record_path, resume)
    reports = []
    for q_index, question in enumerate(questions):
        answers: list[str] = []
        failures = 0
        for run_index in range(n):
            key = f"precision:{q_index}:{run_index}"
            cached = log.get(key)
            if cached is not None:
                if cached.get("error") is None:
                    answers.append(cached["answer"])
                else:
                    failures += 1
                continue
            try:
                result = pipeline.explain(question)
            except Exception as exc:
                failures += 1
                log.append(key, {"question": question, "run": run_index,
                                 "error": str(exc)})
            else:
                answers.append(result.answer)
                log.append(key, {"question": question, "run": run_index,
                                 "answer": result.answer, "error": None})
        counts: dict[str, int] = {}
        for answer in answers:
            normalized = normalize_answer(answer)
            counts[normalized] = counts.get(normalized, 0) + 1
        distinct = tuple(counts.items())
        matrix = tuple(
            tuple(1.0 if i == j else answer_similarity(distinct[i][0], distinct[j][0])
                  for j in range(len(distinct)))
            for i in range(len(distinct)))
        reports.append(PrecisionQuestionReport(
            question=question, n_runs=len(answers), failures=failures,
            distinct_answers=distinct, similarity_matrix=matrix))
    return PrecisionReport(n_requested=n, per_question=tuple(reports))


def format_precision_summary(report: PrecisionReport) -> str:
    lines = [f"Precision study: {report.n_requested} runs per question",
             f"{'#':>3}  {'distinct':>8}  {'failures':>8}  question"]
    for i, q in enumerate(report.per_question, 1):
        lines.append(f"{i:>3}  {len(q.distinct_answers):>8}  {q.failures:>8}  {q.question}")
    return "\n".join(lines)


@dataclass(frozen=True)
class PairTest:
    pair: tuple[int, int]
    result: TTestResult

    @property
    def significant(self) -> bool | None:
        if self.result.no_variance or self.result.p is None:
            return None
        return self.result.p < SIGNIFICANCE_ALPHA


@dataclass(frozen=True)
class AblationReport:
    questions: tuple[str, ...]
    baseline_answers: dict[str, str]
    level_similarities: dict[int, tuple[float, ...]]  # level -> one score per question
    level_answers: dict[int, tuple[str, ...]]
    tests: tuple[PairTest, ...]
    failures: int = 0
    aborted_at_level: int | None = None


def run_ablation_study(questions: Sequence[str],
                       pipeline_factory: Callable[[int], ExplainPipeline], *,
                       levels: Sequence[int] = ABLATION_LEVELS,
                       record_path: str | Path | None = None,
                       resume: bool = False) -> AblationReport:
    """Compare answers under progressively degraded self-models.

    Level 0 answers are the baseline; each degraded level's answers are
    scored against the baseline with the answer-similarity measure, and
    consecutive level pairs get a paired t-test over the per-question
    scores. If every question fails at some level the study aborts and
    returns what it has.
    """
    log = _RecordLog(record_path, resume)
    failures = 0

    def ask(level: int, question: str) -> str | None:
        nonlocal failures
        key = f"ablation:{level}:{question}"
        cached = log.get(key)
        if cached is not None:
            if cached.get("error") is None:
                return cached["answer"]
            failures += 1
            return None
        try:
            answer = pipelines[level].explain(question).answer
        except Exception as exc:
            failures += 1
            log.append(key, {"level": level, "question": question, "error": str(exc)})
            return None
        log.append(key, {"level": level, "question": question,
                         "answer": answer, "error": None})
        return answer

    pipelines = {0: pipeline_factory(0)}
    baseline: dict[str, str] = {}
    for question in questions:
        answer = ask(0, question)
        if answer is not None:
            baseline[question] = answer
    if not baseline:
        raise RuntimeError("baseline level 0 produced no answers; cannot compare")

    level_similarities: dict[int, tuple[float, ...]] = {}
    level_answers: dict[int, tuple[str, ...]] = {}
    aborted_at = None
    for level in levels:
        pipelines[level] = pipeline_factory(level)
        context = getattr(pipelines[level], "context", None)
        if level >= 6 and context is not None and (context.snippets
                                                   or context.overview_only):
            raise RuntimeError(f"level {level} pipeline must run with an empty context")
        answers: list[str] = []
        scores: list[float] = []
        succeeded = 0
        for question in questions:
            answer = ask(level, question)
            if answer is None:
                answers.append("")
                scores.append(0.0)
                continue
            succeeded += 1
            answers.append(answer)
            base = baseline.get(question, "")
            scores.append(answer_similarity(normalize_answer(answer),
                                            normalize_answer(base)))
        if succeeded == 0:
            aborted_at = level
            break
        level_similarities[level] = tuple(scores)
        level_answers[level] = tuple(answers)

    tests = []
    for low, high in CONSECUTIVE_PAIRS:
        if low in level_similarities and high in level_similarities:
            tests.append(PairTest((low, high),
                                  paired_t_test(level_similarities[low],
                                                level_similarities[high])))
    return AblationReport(questions=tuple(questions), baseline_answers=baseline,
                          level_similarities=level_similarities,
                          level_answers=level_answers, tests=tuple(tests),
                          failures=failures, aborted_at_level=aborted_at)


def format_significance_table(tests: Sequence[PairTest]) -> str:
    """The pairwise significance table in the report's standard shape."""
    lines = ["Result of pair-wise t-tests",
             f"{'Pair':<22} {'p-value':>8}  Significance"]
    for test in tests:
        pair = f"Level {test.pair[0]} to Level {test.pair[1]}"
        if test.result.no_variance:
            lines.append(f"{pair:<22} {'n/a':>8}  no-variance, p undefined")
            continue
        marker = "**" if test.significant else ""
        lines.append(f"{pair:<22} {test.result.p:>8.2f}  {marker}")
    return "\n".join(lines)


def format_ablation_summary(report: AblationReport) -> str:
    lines = ["Ablation study: similarity to the full-model baseline"]
    for level in sorted(report.level_similarities):
        scores = report.level_similarities[level]
        mean = sum(scores) / len(scores) if scores else 0.0
        lines.append(f"Level {level}: mean similarity {mean:.4f} over {len(scores)} questions")
    if report.aborted_at_level is not None:
        lines.append(f"Study aborted at level {report.aborted_at_level}: "
                     "every question failed")
    if report.failures:
        lines.append(f"Warnings: {report.failures} failed runs")
    lines.append("")
    lines.append(format_significance_table(report.tests))
    return "\n".join(lines)
