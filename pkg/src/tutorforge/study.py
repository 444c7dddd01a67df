"""Experiment scaffolding: condition assignment, post-test scoring,
exclusion filtering, and the analysis report."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .engine import CONDITIONS, SessionSummary, session_summary
from .errors import SchemaViolation, UnknownItem
from .eventlog import EventLog, rehydrate_session
from .stats import bonferroni_pairwise, descriptive_stats, one_way_anova

LIKERT_MIN = 1
LIKERT_MAX = 7

BUNDLED_ITEM_COUNT = 7
BUNDLED_TEACHER_ITEMS = 5
BUNDLED_OPENSTAX_ITEMS = 2

# Aspects that only make sense when there was a chatbot to rate.
CHATBOT_ONLY_ASPECTS = ("interruption", "coherence", "support")


@dataclass(frozen=True)
class PostTestItem:
    item_id: str
    stem: str
    options: tuple[str, str, str, str]
    correct_index: int
    provenance: str  # teacher | openstax


@dataclass(frozen=True)
class PostTest:
    items: tuple[PostTestItem, ...]


@dataclass(frozen=True)
class SurveyInstrument:
    aspects: tuple[tuple[str, str], ...]  # (key, prompt)
    attention_checks: tuple[tuple[str, str, int], ...]  # (key, prompt, expected)
    lookup_key: str
    lookup_prompt: str
    lookup_denial: int  # the response meaning "I did not look answers up"


@dataclass(frozen=True)
class StudyRecord:
    participant_id: str
    condition: str
    posttest_answers: dict
    survey: dict  # aspect key -> 1..7
    attention_pass: tuple[bool, bool]
    lookup_denied: bool
    session_summary: SessionSummary | None = None


def assign_condition(participant_id: str, seed: int) -> str:
    """Uniform, deterministic condition assignment from (participant, seed)."""
    digest = hashlib.sha256(f"{seed}\x1f{participant_id}".encode("utf-8")).digest()
    return CONDITIONS[int.from_bytes(digest[:8], "big") % len(CONDITIONS)]


def score_posttest(test: PostTest, answers: dict) -> int:
    """One point per correct choice; unanswered items score zero."""
    known = {item.item_id: item.correct_index for item in test.items}
    for item_id in answers:
        if item_id not in known:
            raise UnknownItem(f"unknown post-test item {item_id!r}")
    return sum(1 for item_id, correct in known.items() if answers.get(item_id) == correct)


def apply_exclusion_filters(
    records: Sequence[StudyRecord],
) -> tuple[list[StudyRecord], list[tuple[StudyRecord, str]]]:
    """Keep participants who passed both attention checks and denied looking
    answers up; label everyone else attention_fail or lookup_fail."""
    kept: list[StudyRecord] = []
    excluded: list[tuple[StudyRecord, str]] = []
    for record in records:
        if not all(record.attention_pass):
            excluded.append((record, "attention_fail"))
        elif not record.lookup_denied:
            excluded.append((record, "lookup_fail"))
        else:
            kept.append(record)
    return kept, excluded


# ---------------------------------------------------------------------------
# Instrument loading


def _read_data(name: str, path: str | Path | None) -> tuple[dict, bool]:
    if path is None:
        text = resources.files("tutorforge").joinpath(f"data/{name}").read_text(encoding="utf-8")
        return json.loads(text), True
    return json.loads(Path(path).read_text(encoding="utf-8")), False


def load_posttest(path: str | Path | None = None) -> PostTest:
    """Load the post-test; the bundled instrument must keep its 5 teacher +
    2 source-book item composition, custom files may use any counts."""
    doc, bundled = _read_data("posttest.json", path)
    items = []
    for i, raw in enumerate(doc["items"]):
        options = tuple(raw["options"])
        if len(options) != 4:
            raise SchemaViolation(f"/items/{i}/options", "exactly 4 options required")
        if not 0 <= raw["correct_index"] <= 3:
            raise SchemaViolation(f"/items/{i}/correct_index", "must be 0..3")
        if raw["provenance"] not in ("teacher", "openstax"):
            raise SchemaViolation(f"/items/{i}/provenance", "must be teacher or openstax")
        items.append(PostTestItem(
            item_id=raw["item_id"], stem=raw["stem"], options=options,
            correct_index=raw["correct_index"], provenance=raw["provenance"],
        ))
    test = PostTest(items=tuple(items))
    if bundled:
        teacher = sum(1 for it in test.items if it.provenance == "teacher")
        openstax = sum(1 for it in test.items if it.provenance == "openstax")
        if (len(test.items) != BUNDLED_ITEM_COUNT or teacher != BUNDLED_TEACHER_ITEMS
                or openstax != BUNDLED_OPENSTAX_ITEMS):
            raise SchemaViolation("/items", "bundled post-test must have 5 teacher + 2 openstax items")
    return test


def load_survey(path: str | Path | None = None) -> SurveyInstrument:
    doc, _ = _read_data("survey.json", path)
    return SurveyInstrument(
        aspects=tuple((a["key"], a["prompt"]) for a in doc["aspects"]),
        attention_checks=tuple(
            (c["key"], c["prompt"], c["expected"]) for c in doc["attention_checks"]
        ),
        lookup_key=doc["lookup"]["key"],
        lookup_prompt=doc["lookup"]["prompt"],
        lookup_denial=doc["lookup"]["denial"],
    )


# ---------------------------------------------------------------------------
# From event logs to records


def records_from_logs(
    data_dir: str | Path,
    survey: SurveyInstrument,
) -> tuple[list[StudyRecord], list[str]]:
    """Rehydrate every session log in a directory into study records.

    Sessions that never reached phase=done are skipped and reported.
    """
    log = EventLog(data_dir)
    records: list[StudyRecord] = []
    skipped: list[str] = []
    for session_id in log.session_ids():
        state = rehydrate_session(log.read_events(session_id))
        if state.phase != "done":
            skipped.append(session_id)
            continue
        responses = state.survey_responses or {}
        attention = tuple(
            responses.get(key) == expected for key, _, expected in survey.attention_checks
        )
        aspect_keys = {key for key, _ in survey.aspects}
        records.append(StudyRecord(
            participant_id=state.participant_id,
            condition=state.condition,
            posttest_answers=state.posttest_answers or {},
            survey={k: v for k, v in responses.items() if k in aspect_keys},
            attention_pass=(bool(attention[0]), bool(attention[1])),
            lookup_denied=responses.get(survey.lookup_key) == survey.lookup_denial,
            session_summary=session_summary(state),
        ))
    return records, skipped


# ---------------------------------------------------------------------------
# Report


def _fmt_mean_se(values: Sequence[float]) -> str:
    if not values:
        return "-"
    mean, se = descriptive_stats(values)
    return f"{mean:.2f} ± {se:.2f}"


def build_report(
    records: Sequence[StudyRecord],
    posttest: PostTest,
    survey: SurveyInstrument,
) -> str:
    """Plain-text analysis report: exclusions, per-condition post-test
    mean/SE, ANOVA with Bonferroni post-hoc, and per-aspect survey table."""
    kept, excluded = apply_exclusion_filters(records)
    reasons = {"attention_fail": 0, "lookup_fail": 0}
    for _, reason in excluded:
        reasons[reason] += 1

    by_condition: dict[str, list[StudyRecord]] = {c: [] for c in CONDITIONS}
    for record in kept:
        by_condition.setdefault(record.condition, []).append(record)

    scores = {
        c: [score_posttest(posttest, r.posttest_answers) for r in rs]
        for c, rs in by_condition.items()
    }

    lines: list[str] = []
    lines.append("Study report")
    lines.append("============")
    lines.append("")
    lines.append(
        f"Participants: {len(records)} total, {len(kept)} kept, "
        f"{len(excluded)} excluded "
        f"(attention_fail={reasons['attention_fail']}, lookup_fail={reasons['lookup_fail']})"
    )
    lines.append("")
    lines.append(f"Learning performance (post-test, {len(posttest.items)} items)")
    lines.append(f"{'condition':<14}{'n':>4}  {'score mean±SE':>14}")
    for condition in CONDITIONS:
        values = scores[condition]
        lines.append(f"{condition:<14}{len(values):>4}  {_fmt_mean_se(values):>14}")
    lines.append("")

    eligible = [(c, scores[c]) for c in CONDITIONS if len(scores[c]) >= 2]
    if len(eligible) >= 2:
        labels = [c for c, _ in eligible]
        groups = [v for _, v in eligible]
        anova = one_way_anova(groups)
        lines.append(
            f"One-way ANOVA on post-test scores: "
            f"F({anova.df_between}, {anova.df_within}) = {anova.f_stat:.3f}, "
            f"p = {anova.p_value:.4f}"
            + (" (degenerate)" if anova.degenerate else "")
        )
        lines.append("Bonferroni post-hoc (pooled two-sided t):")
        lines.append(f"{'pair':<28}{'raw p':>10}{'adj p':>10}  sig")
        for comparison in bonferroni_pairwise(groups, labels):
            pair = " vs ".join(comparison.pair)
            sig = "*" if comparison.significant else ""
            lines.append(
                f"{pair:<28}{comparison.raw_p:>10.4f}{comparison.adjusted_p:>10.4f}  {sig}"
            )
    else:
        lines.append("One-way ANOVA on post-test scores: skipped "
                     "(need at least two conditions with n >= 2)")
    lines.append("")

    lines.append(f"Learning experience ({LIKERT_MIN}-{LIKERT_MAX} Likert, mean±SE; "
                 "- = not asked)")
    header = f"{'aspect':<14}" + "".join(f"{c:>14}" for c in CONDITIONS)
    header += f"{'F':>9}{'p':>9}  sig pairs"
    lines.append(header)
    for aspect, _prompt in survey.aspects:
        per_condition = {
            c: [r.survey[aspect] for r in by_condition[c] if aspect in r.survey]
            for c in CONDITIONS
        }
        row = f"{aspect:<14}" + "".join(
            f"{_fmt_mean_se(per_condition[c]):>14}" for c in CONDITIONS
        )
        eligible = [(c, per_condition[c]) for c in CONDITIONS if len(per_condition[c]) >= 2]
        if len(eligible) >= 2:
            labels = [c for c, _ in eligible]
            groups = [v for _, v in eligible]
            anova = one_way_anova(groups)
            sig_pairs = [
                " vs ".join(comparison.pair)
                for comparison in bonferroni_pairwise(groups, labels)
                if comparison.significant
            ]
            row += f"{anova.f_stat:>9.3f}{anova.p_value:>9.4f}  {'; '.join(sig_pairs)}"
        else:
            row += f"{'-':>9}{'-':>9}"
        lines.append(row)
    lines.append("")
    return "\n".join(lines) + "\n"
