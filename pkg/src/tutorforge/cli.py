"""Command line entry points: author, serve, simulate, analyze."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from .bundled import bundled_lesson, bundled_script, fixture_dir
from .errors import TutorforgeError
from .gateway import FixtureStore, Gateway
from .induction import InductionConfig, compile_script
from .model import emit_script, parse_lesson, parse_script, validate_lesson
from .service import DEFAULT_SEED, ContentStore, create_app
from .simulate import POLICY_IDS, run_simulation
from .study import build_report, load_posttest, load_survey, records_from_logs


def _make_gateway(provider: str, fixtures: str | None) -> Gateway:
    if provider == "live":
        return Gateway("live")
    store = FixtureStore(fixtures or fixture_dir())
    return Gateway(provider, fixtures=store)


def _cmd_author(args: argparse.Namespace) -> int:
    lesson = parse_lesson(Path(args.lesson).read_bytes())
    report = validate_lesson(lesson)
    if not report.ok:
        print(f"lesson invalid: {report.violations[0]}", file=sys.stderr)
        return 2
    gateway = _make_gateway(args.provider, args.fixtures)
    cfg = InductionConfig(target_question_count=args.questions)
    script = compile_script(lesson, cfg, gateway)
    Path(args.out).write_bytes(emit_script(script))
    print(f"wrote {args.out}: {len(script.questions)} questions, "
          f"{sum(len(q.expectations) for q in script.questions)} expectations")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store = ContentStore()
    if args.lesson:
        lesson = parse_lesson(Path(args.lesson).read_bytes())
    else:
        lesson = bundled_lesson()
    store.add_lesson(lesson)
    if args.script:
        script = parse_script(Path(args.script).read_bytes())
    else:
        script = bundled_script("llm")
    store.add_script(script, default_for=("llm_qa", "ruffle_riley"))
    if args.teacher_script:
        teacher = parse_script(Path(args.teacher_script).read_bytes())
    else:
        teacher = bundled_script("teacher")
    store.add_script(teacher, default_for=("teacher_qa",))

    gateway = _make_gateway(args.provider, args.fixtures)
    app = create_app(store, gateway, args.data, seed=args.seed,
                     ui_dir=args.ui if args.ui else None)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    summaries = run_simulation(
        args.policy, args.sessions, args.data,
        provider=args.provider, condition=args.condition, fixtures=args.fixtures,
    )
    for summary in summaries:
        fields = asdict(summary)
        fields["followups_by_question"] = list(summary.followups_by_question)
        print(" ".join(f"{k}={v}" for k, v in fields.items()))
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    survey = load_survey(args.survey)
    posttest = load_posttest(args.posttest)
    records, skipped = records_from_logs(args.records, survey)
    report = build_report(records, posttest, survey)
    if skipped:
        report += f"Skipped {len(skipped)} unfinished session(s): {', '.join(skipped)}\n"
    Path(args.out).write_text(report, encoding="utf-8")
    print(report, end="")
    print(f"report written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tutorforge")
    sub = parser.add_subparsers(dest="command", required=True)

    author = sub.add_parser("author", help="induce a tutoring script from a lesson")
    author.add_argument("--lesson", required=True)
    author.add_argument("--out", required=True)
    author.add_argument("--questions", type=int, default=InductionConfig().target_question_count)
    author.add_argument("--provider", choices=("live", "replay", "record"), default="replay")
    author.add_argument("--fixtures", default=None)
    author.set_defaults(func=_cmd_author)

    serve = sub.add_parser("serve", help="run the session service")
    serve.add_argument("--data", required=True)
    serve.add_argument("--lesson", default=None)
    serve.add_argument("--script", default=None)
    serve.add_argument("--teacher-script", default=None)
    serve.add_argument("--provider", choices=("live", "replay", "record"), default="replay")
    serve.add_argument("--fixtures", default=None)
    serve.add_argument("--seed", type=int, default=DEFAULT_SEED)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--ui", default=None, help="directory of built UI files to mount at /app")
    serve.set_defaults(func=_cmd_serve)

    simulate = sub.add_parser("simulate", help="drive scripted learner sessions")
    simulate.add_argument("--policy", choices=POLICY_IDS, required=True)
    simulate.add_argument("--sessions", type=int, default=1)
    simulate.add_argument("--provider", choices=("replay", "record", "live"), default="replay")
    simulate.add_argument("--condition",
                          choices=("reading", "teacher_qa", "llm_qa", "ruffle_riley"),
                          default="ruffle_riley")
    simulate.add_argument("--data", required=True)
    simulate.add_argument("--fixtures", default=None)
    simulate.set_defaults(func=_cmd_simulate)

    analyze = sub.add_parser("analyze", help="score logs and write the study report")
    analyze.add_argument("--records", required=True, help="directory of session event logs")
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--posttest", default=None)
    analyze.add_argument("--survey", default=None)
    analyze.set_defaults(func=_cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TutorforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
