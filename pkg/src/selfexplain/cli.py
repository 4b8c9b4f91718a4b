"""Command-line surface: model tooling, one-off questions, the service,
and the study runners.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dot_export import export_dot
from .errors import ConfigError, PipelineError, ProviderError, TmkError
from .figures import render_ablation_figure, render_precision_figure
from .harness import (
    format_ablation_summary,
    format_precision_summary,
    load_precision_questions,
    run_ablation_study,
    run_precision_study,
)
from .model import degrade, validate
from .parsing import parse_model_file
from .pipeline import DEFAULT_K, DEFAULT_K_MAX, ExplainPipeline, TemplateSet
from .service import (
    ServiceConfig,
    build_provider,
    load_service_config,
    packaged_model_path,
    serve,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_PROVIDER = 3


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=["mock", "live"], default="mock")
    parser.add_argument("--mock-script", type=Path, default=None,
                        help="JSONL rule file for the scripted mock")
    parser.add_argument("--base-url", default="",
                        help="OpenAI-compatible endpoint for --provider live")
    parser.add_argument("--chat-model", default="default")
    parser.add_argument("--level", type=int, default=0,
                        help="degradation level 0..6 to run the pipeline at")
    parser.add_argument("--k-max", type=int, default=DEFAULT_K_MAX)
    parser.add_argument("--default-k", type=int, default=DEFAULT_K)
    parser.add_argument("--templates-dir", type=Path, default=None)


def _pipeline_from_args(args: argparse.Namespace, level: int | None = None) -> ExplainPipeline:
    config = ServiceConfig(model_path=args.model, provider=args.provider,
                           mock_script=args.mock_script, base_url=args.base_url,
                           chat_model=args.chat_model,
                           level=args.level if level is None else level,
                           k_max=args.k_max, default_k=args.default_k,
                           templates_dir=args.templates_dir)
    model = parse_model_file(config.model_path)
    violations = validate(model)
    if violations:
        raise ConfigError(f"model has {len(violations)} validation violation(s); "
                          "run 'selfexplain validate' to list them")
    provider = build_provider(config)
    templates = TemplateSet.load(config.templates_dir)
    return ExplainPipeline(model, provider, level=config.level, templates=templates,
                           default_k=config.default_k, k_max=config.k_max)


def _print_result(result) -> None:
    print(result.answer)
    print()
    print(f"trace_id: {result.trace_id}")
    print(f"class: {result.verdict.question_class.value}  k: {result.verdict.k}")
    if result.used_snippets:
        used = ", ".join(s.snippet.source_id for s in result.used_snippets)
        print(f"snippets: {used}")
    if result.cot_steps:
        print(f"method steps walked: {len(result.cot_steps)}")


def cmd_validate(args: argparse.Namespace) -> int:
    model = parse_model_file(args.model)
    violations = validate(model)
    if not violations:
        print(f"{args.model}: valid "
              f"({len(model.tasks)} tasks, {len(model.methods)} methods, "
              f"{len(model.knowledge)} knowledge entries)")
        return EXIT_OK
    for violation in violations:
        print(violation)
    print(f"{len(violations)} violation(s)")
    return EXIT_VALIDATION


def cmd_ask(args: argparse.Namespace) -> int:
    pipeline = _pipeline_from_args(args)
    _print_result(pipeline.explain(args.question))
    return EXIT_OK


def cmd_repl(args: argparse.Namespace) -> int:
    pipeline = _pipeline_from_args(args)
    print(f"{pipeline.model.agent_name} self-explanation repl; "
          "empty line or Ctrl-D exits")
    while True:
        try:
            question = input("? ").strip()
        except EOFError:
            break
        if not question:
            break
        try:
            _print_result(pipeline.explain(question))
        except PipelineError as exc:
            print(f"provider failure: {exc}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    if args.config:
        config = load_service_config(args.config)
    else:
        config = ServiceConfig(model_path=args.model, provider=args.provider,
                               mock_script=args.mock_script, base_url=args.base_url,
                               chat_model=args.chat_model, port=args.port,
                               trigger_tag=args.trigger_tag, level=args.level,
                               k_max=args.k_max, default_k=args.default_k,
                               templates_dir=args.templates_dir,
                               record_path=args.records,
                               static_dir=args.static_dir)
    serve(config)
    return EXIT_OK


def cmd_degrade(args: argparse.Namespace) -> int:
    model = parse_model_file(args.model)
    context = degrade(model, args.level)
    lines = [f"{s.part}\t{s.source_id}\t{s.layer}\t{s.text}" for s in context.snippets]
    if context.overview_only:
        lines = [f"overview\t-\t-\t{model.overview}"]
    listing = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(listing + ("\n" if listing else ""), encoding="utf-8")
        print(f"wrote {len(lines)} snippet line(s) to {args.out}")
    else:
        print(listing)
    return EXIT_OK


def cmd_export_dot(args: argparse.Namespace) -> int:
    model = parse_model_file(args.model)
    document = export_dot(model)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        print(f"wrote graph to {args.out}")
    else:
        print(document, end="")
    return EXIT_OK


def cmd_study_precision(args: argparse.Namespace) -> int:
    questions = load_precision_questions(args.questions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline = _pipeline_from_args(args)
    report = run_precision_study(questions, args.n, pipeline,
                                 record_path=out / "precision_runs.jsonl",
                                 resume=args.resume)
    summary = format_precision_summary(report)
    (out / "precision_summary.txt").write_text(summary + "\n", encoding="utf-8")
    with (out / "precision_report.json").open("w", encoding="utf-8") as handle:
        json.dump({
            "n_requested": report.n_requested,
            "questions": [{
                "question": q.question,
                "n_runs": q.n_runs,
                "failures": q.failures,
                "distinct_answers": [{"answer": a, "count": c}
                                     for a, c in q.distinct_answers],
                "similarity_matrix": [list(row) for row in q.similarity_matrix],
            } for q in report.per_question],
        }, handle, ensure_ascii=False, indent=2)
    rows = ["question\tn_runs\tdistinct\tfailures"]
    rows += [f"{q.question}\t{q.n_runs}\t{len(q.distinct_answers)}\t{q.failures}"
             for q in report.per_question]
    (out / "precision_records.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    render_precision_figure(report, out / "precision_similarity.png")
    print(summary)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_study_ablation(args: argparse.Namespace) -> int:
    questions = load_precision_questions(args.questions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def factory(level: int) -> ExplainPipeline:
        return _pipeline_from_args(args, level=level)

    report = run_ablation_study(questions, factory,
                                record_path=out / "ablation_runs.jsonl",
                                resume=args.resume)
    summary = format_ablation_summary(report)
    (out / "ablation_summary.txt").write_text(summary + "\n", encoding="utf-8")
    rows = ["level\tquestion\tsimilarity"]
    for level in sorted(report.level_similarities):
        for question, score in zip(report.questions, report.level_similarities[level]):
            rows.append(f"{level}\t{question}\t{score:.6f}")
    (out / "ablation_records.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    with (out / "ablation_report.json").open("w", encoding="utf-8") as handle:
        json.dump({
            "questions": list(report.questions),
            "levels": {str(level): list(scores)
                       for level, scores in report.level_similarities.items()},
            "tests": [{
                "pair": list(test.pair),
                "t": test.result.t,
                "df": test.result.df,
                "p": test.result.p,
                "no_variance": test.result.no_variance,
                "significant": test.significant,
            } for test in report.tests],
            "failures": report.failures,
            "aborted_at_level": report.aborted_at_level,
        }, handle, ensure_ascii=False, indent=2)
    render_ablation_figure(report, out / "ablation_similarity.png")
    print(summary)
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfexplain",
        description="Self-explanation engine over a task-method-knowledge self-model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model document against every invariant")
    p.add_argument("model", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ask", help="answer one question and print the trace")
    p.add_argument("model", type=Path, nargs="?", default=packaged_model_path())
    p.add_argument("question")
    _add_provider_args(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("repl", help="interactive question loop")
    p.add_argument("model", type=Path, nargs="?", default=packaged_model_path())
    _add_provider_args(p)
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON config file; overrides the other flags")
    p.add_argument("--model", type=Path, default=packaged_model_path())
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--trigger-tag", default="#SAMIexplain")
    p.add_argument("--records", type=Path, default=Path("ask_records.jsonl"))
    p.add_argument("--static-dir", type=Path, default=None,
                   help="directory with the built chat UI to serve at /")
    _add_provider_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("degrade", help="write the snippet listing at one degradation level")
    p.add_argument("model", type=Path, nargs="?", default=packaged_model_path())
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("export-dot", help="render the model as a Graphviz document")
    p.add_argument("model", type=Path, nargs="?", default=packaged_model_path())
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_export_dot)

    study = sub.add_parser("study", help="run an evaluation study")
    study_sub = study.add_subparsers(dest="study_command", required=True)

    p = study_sub.add_parser("precision", help="ask each question n times, count answers")
    p.add_argument("--model", type=Path, default=packaged_model_path())
    p.add_argument("--questions", type=Path, default=None,
                   help="question list, one per line (default: bundled list)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", action="store_true")
    _add_provider_args(p)
    p.set_defaults(func=cmd_study_precision)

    p = study_sub.add_parser("ablation", help="compare answers across degradation levels")
    p.add_argument("--model", type=Path, default=packaged_model_path())
    p.add_argument("--questions", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", action="store_true")
    _add_provider_args(p)
    p.set_defaults(func=cmd_study_ablation)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TmkError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ProviderError, PipelineError) as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
