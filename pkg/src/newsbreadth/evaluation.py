"""
Scoring of model analyses: direction accuracy, ROUGE-1/2/L on the
prediction section, temporal-term frequency and the HG vs HG-NC case
breakdown against weekly clustering ratios.

ROUGE here is the F1 variant with lowercase alphanumeric tokens, no
stemming and no stopword removal.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .labeling import MovementLabel, find_label

REPORT_SCHEMA_VERSION = 1
ROUGE_VARIANT = "F1, lowercase alphanumeric tokens, no stemming, no stopwords"
DEFAULT_TERMS = ("long-term", "short-term")
_WEEK = timedelta(days=7)

HEADERS = ("[Positive Developments]", "[Potential Concerns]", "[Prediction & Analysis]")
_HEADER_RES = (
    re.compile(r"\[\s*positive\s+developments\s*\]", re.IGNORECASE),
    re.compile(r"\[\s*potential\s+concerns\s*\]", re.IGNORECASE),
    re.compile(r"\[\s*prediction\s*(?:&|and)\s*analysis\s*\]", re.IGNORECASE),
)
_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class AnalysisParseError(ValueError):
    def __init__(self, message: str, header: str | None = None):
        super().__init__(message)
        self.header = header


@dataclass(frozen=True)
class AnalysisSections:
    positive_developments: tuple[str, ...]
    potential_concerns: tuple[str, ...]
    prediction_analysis: str
    predicted_label: MovementLabel
    warnings: tuple[str, ...] = field(default=(), compare=False)


def _bullets(block: str) -> list[str]:
    lines = [ln for ln in block.splitlines() if ln.strip()]
    marked = [m.group(1) for m in map(_BULLET_RE.match, lines) if m]
    if marked:
        return marked
    return [ln.strip() for ln in lines]


def parse_analysis(text: str) -> AnalysisSections:
    """Split an analysis into its three bracketed sections and read the predicted label.

    Raises:
        AnalysisParseError: a header is missing or out of order, or the
            prediction section contains no movement label.
    """
    positions = []
    start = 0
    for header, rx in zip(HEADERS, _HEADER_RES):
        m = rx.search(text, start)
        if m is None:
            raise AnalysisParseError(f"missing header {header}", header)
        positions.append(m)
        start = m.end()
    pos_block = text[positions[0].end() : positions[1].start()]
    con_block = text[positions[1].end() : positions[2].start()]
    pred_block = text[positions[2].end() :].strip()
    label = find_label(pred_block)
    if label is None:
        raise AnalysisParseError("no movement label in [Prediction & Analysis]", HEADERS[2])
    pos, con = _bullets(pos_block), _bullets(con_block)
    warnings = []
    for name, items in (("positive developments", pos), ("potential concerns", con)):
        if not 2 <= len(items) <= 4:
            warnings.append(f"{len(items)} {name} (expected 2-4)")
    return AnalysisSections(tuple(pos), tuple(con), pred_block, label, tuple(warnings))


def format_analysis(sections: AnalysisSections) -> str:
    """Inverse of ``parse_analysis`` for well-formed sections."""
    out = [HEADERS[0]]
    out += [f"{i}. {b}" for i, b in enumerate(sections.positive_developments, 1)]
    out += ["", HEADERS[1]]
    out += [f"{i}. {b}" for i, b in enumerate(sections.potential_concerns, 1)]
    out += ["", HEADERS[2], sections.prediction_analysis]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Metrics


def binary_accuracy(predicted: Sequence[MovementLabel], actual: Sequence[MovementLabel]) -> float:
    """Share of pairs whose up/down direction agrees."""
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(actual)} actuals")
    if not predicted:
        raise ValueError("no predictions to score")
    hits = sum(p.direction == a.direction for p, a in zip(predicted, actual))
    return hits / len(predicted)


def rouge_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> float:
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand, ref = _ngrams(rouge_tokens(candidate), n), _ngrams(rouge_tokens(reference), n)
    total = sum(cand.values()) + sum(ref.values())
    overlap = sum((cand & ref).values())
    # 2PR/(P+R) reduces to 2*overlap/(|cand|+|ref|)
    return 2 * overlap / total if overlap else 0.0


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    cand, ref = rouge_tokens(candidate), rouge_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    return 2 * lcs / (len(cand) + len(ref)) if lcs else 0.0


def _normalize_term_text(text: str) -> str:
    return " ".join(text.lower().replace("-", " ").split())


def term_frequency(outputs: Sequence[AnalysisSections], terms: Iterable[str] = DEFAULT_TERMS) -> dict[str, float]:
    """Fraction of outputs whose prediction section mentions each term.

    Matching is case-insensitive and treats hyphens as spaces.
    """
    if not outputs:
        raise ValueError("no outputs")
    texts = [_normalize_term_text(o.prediction_analysis) for o in outputs]
    result = {}
    for term in terms:
        needle = _normalize_term_text(term)
        result[term] = sum(needle in t for t in texts) / len(texts)
    return result


class Case(str, Enum):
    CASE1 = "Case1"  # HG-NC right, HG wrong
    CASE2 = "Case2"  # HG right, HG-NC wrong
    CASE3 = "Case3"  # both right or both wrong


def case_classification(hg_correct: bool, hgnc_correct: bool) -> Case:
    if hgnc_correct and not hg_correct:
        return Case.CASE1
    if hg_correct and not hgnc_correct:
        return Case.CASE2
    return Case.CASE3


@dataclass(frozen=True)
class WeekCase:
    week_start: date
    ratio: float
    case: Case
    ticker: str = ""


@dataclass(frozen=True)
class RatioSummary:
    rows: tuple[WeekCase, ...]
    case_counts: dict[str, int]
    case1_high_ratio: tuple[WeekCase, ...]
    case2_low_ratio: tuple[WeekCase, ...]


def ratio_report(weeks: Sequence[WeekCase], high: float = 0.5, low: float = 0.4) -> RatioSummary:
    """Per-week rows plus Case1 weeks with ratio above ``high`` and Case2 weeks below ``low``."""
    counts = Counter(w.case for w in weeks)
    return RatioSummary(
        rows=tuple(weeks),
        case_counts={c.value: counts.get(c, 0) for c in Case},
        case1_high_ratio=tuple(w for w in weeks if w.case is Case.CASE1 and w.ratio > high),
        case2_low_ratio=tuple(w for w in weeks if w.case is Case.CASE2 and w.ratio < low),
    )


# ---------------------------------------------------------------------------
# Prediction files and reports


class PredictionFileError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("unparseable predictions:\n" + "\n".join(errors))


@dataclass(frozen=True)
class Prediction:
    ticker: str
    target_start: date
    mode: str
    label: MovementLabel
    sections: AnalysisSections | None = None


def load_predictions(text: str, source: str = "<predictions>") -> list[Prediction]:
    """Read a predictions JSONL file.

    Each line holds ``ticker``, ``target_start`` (ISO date), ``mode`` and
    either ``output`` (a full analysis) or ``label`` (a bare movement label,
    any case). Every bad row is reported, not just the first.
    """
    preds, errors = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sections = None
            if rec.get("output") is not None:
                sections = parse_analysis(rec["output"])
                label = sections.predicted_label
            else:
                label = MovementLabel.parse(str(rec["label"]))
            preds.append(Prediction(str(rec["ticker"]).upper(), date.fromisoformat(rec["target_start"]), str(rec.get("mode", "HGNC")), label, sections))
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"{source}:{lineno}: {exc}")
    if errors:
        raise PredictionFileError(errors)
    if not preds:
        raise PredictionFileError([f"{source}: no predictions"])
    return preds


@dataclass(frozen=True)
class ObservationRow:
    ticker: str
    week_start: date
    target_start: date
    actual: MovementLabel
    predicted: MovementLabel
    rouge1: float | None
    rouge2: float | None
    rougeL: float | None
    ratio: float | None
    case: Case | None

    @property
    def correct(self) -> bool:
        return self.actual.direction == self.predicted.direction


@dataclass
class EvaluationReport:
    mode: str
    n_observations: int
    binary_accuracy: float
    rouge1: float | None
    rouge2: float | None
    rougeL: float | None
    term_freq: dict[str, float]
    rows: list[ObservationRow]
    ratio_summary: RatioSummary | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def per_week_cases(self) -> list[WeekCase]:
        return list(self.ratio_summary.rows) if self.ratio_summary else []


REPORT_COLUMNS = (
    "mode", "ticker", "week_start", "target_start", "actual", "predicted", "correct",
    "rouge1", "rouge2", "rougeL", "ratio", "case",
)


def _opt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def report_csv(reports: EvaluationReport | Sequence[EvaluationReport]) -> str:
    """Per-observation CSV; several reports (one per mode) share one file."""
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for report in reports:
        for r in report.rows:
            w.writerow([
                report.mode, r.ticker, r.week_start.isoformat(), r.target_start.isoformat(), str(r.actual), str(r.predicted),
                int(r.correct), _opt(r.rouge1), _opt(r.rouge2), _opt(r.rougeL), _opt(r.ratio), r.case.value if r.case else "",
            ])
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def summary_text(report: EvaluationReport) -> str:
    lines = [
        f"report schema v{REPORT_SCHEMA_VERSION}",
        f"mode: {report.mode}",
        f"observations: {report.n_observations}",
        f"binary accuracy: {report.binary_accuracy:.4f}",
    ]
    if report.rouge1 is not None:
        lines.append(f"ROUGE-1 / ROUGE-2 / ROUGE-L: {report.rouge1:.4f} / {report.rouge2:.4f} / {report.rougeL:.4f}")
    for term, freq in report.term_freq.items():
        lines.append(f"term frequency {term!r}: {freq:.4f}")
    s = report.ratio_summary
    if s is not None:
        lines.append("cases: " + ", ".join(f"{k}={v}" for k, v in s.case_counts.items()))
        lines.append(f"Case1 weeks with ratio > 0.5: {len(s.case1_high_ratio)}")
        lines.append(f"Case2 weeks with ratio < 0.4: {len(s.case2_low_ratio)}")
    for k, v in report.metadata.items():
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def evaluate(
    predictions: Sequence[Prediction],
    actuals: Mapping[tuple[str, date], MovementLabel],
    references: Mapping[tuple[str, date], str] | None = None,
    ratios: Mapping[tuple[str, date], float] | None = None,
    mode: str = "HGNC",
    terms: Iterable[str] = DEFAULT_TERMS,
    compare_mode: str | None = None,
) -> EvaluationReport:
    """Score the ``mode`` predictions against actual labels.

    Keys are ``(ticker, target_start)``. ``references`` maps to teacher
    analyses; ROUGE is computed on the prediction sections. ``ratios`` maps
    to the clustering ratio of the news week feeding each target. Cases
    compare HG with HGNC: when the other mode of that pair (or
    ``compare_mode``) has predictions for the same weeks, each row gets its
    case.
    """
    if compare_mode is None:
        compare_mode = {"HGNC": "HG", "HG": "HGNC"}.get(mode)
    hgnc_first = mode != "HG"
    mine = sorted((p for p in predictions if p.mode == mode), key=lambda p: (p.ticker, p.target_start))
    if not mine:
        raise ValueError(f"no {mode} predictions")
    missing = [f"{p.ticker} {p.target_start}" for p in mine if (p.ticker, p.target_start) not in actuals]
    if missing:
        raise ValueError("no actual label for: " + ", ".join(missing))
    others = {(p.ticker, p.target_start): p for p in predictions if p.mode == compare_mode}
    references = references or {}
    ratios = ratios or {}
    rows = []
    for p in mine:
        key = (p.ticker, p.target_start)
        actual = actuals[key]
        r1 = r2 = rl = None
        ref = references.get(key)
        if ref is not None and p.sections is not None:
            ref_pred = _prediction_section(ref)
            cand = p.sections.prediction_analysis
            r1, r2, rl = rouge_n(cand, ref_pred, 1), rouge_n(cand, ref_pred, 2), rouge_l(cand, ref_pred)
        case = None
        if key in others:
            other = others[key]
            mine_ok, other_ok = p.label.direction == actual.direction, other.label.direction == actual.direction
            case = case_classification(other_ok, mine_ok) if hgnc_first else case_classification(mine_ok, other_ok)
        rows.append(ObservationRow(p.ticker, p.target_start - _WEEK, p.target_start, actual, p.label, r1, r2, rl, ratios.get(key), case))
    acc = binary_accuracy([r.predicted for r in rows], [r.actual for r in rows])
    scored = [r for r in rows if r.rouge1 is not None]

    def mean(xs):
        return sum(xs) / len(xs) if xs else None

    sections = [p.sections for p in mine if p.sections is not None]
    tf = term_frequency(sections, terms) if sections else {}
    summary = None
    if any(r.case is not None for r in rows):
        summary = ratio_report([
            WeekCase(r.week_start, r.ratio if r.ratio is not None else float("nan"), r.case, r.ticker)
            for r in rows if r.case is not None
        ])
    return EvaluationReport(
        mode=mode,
        n_observations=len(rows),
        binary_accuracy=acc,
        rouge1=mean([r.rouge1 for r in scored]),
        rouge2=mean([r.rouge2 for r in scored]),
        rougeL=mean([r.rougeL for r in scored]),
        term_freq=tf,
        rows=rows,
        ratio_summary=summary,
        metadata={
            "rouge": ROUGE_VARIANT,
            "weekly return": "prior week final close to target week final close",
        },
    )


def _prediction_section(text: str) -> str:
    try:
        return parse_analysis(text).prediction_analysis
    except AnalysisParseError:
        m = _HEADER_RES[2].search(text)
        return text[m.end() :] if m else text

