"""
Instruction-tuning dataset construction.

The teacher model sees the prompt with the known outcome of the target week
and writes an analysis. The stored example pairs that analysis with the
prompt the student will see, i.e. the same prompt without the outcome.

Teacher access goes through a chat-completion client. ``ReplayClient`` and
``RecordingClient`` store responses in a cassette directory, one JSON file
per request named by the SHA-256 of the canonical request, so dataset builds
can be repeated byte for byte without model access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx

from .evaluation import AnalysisParseError, parse_analysis
from .labeling import LABEL_PATTERN, MovementLabel
from .market_data import atomic_write_text
from .prompting import DEFAULT_BUDGET, PromptBundle, PromptMode, Tokenizer, render_pair

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are a seasoned stock market analyst. Identify the positive developments and potential concerns "
    "for the company from the information provided, then predict its stock price movement for the coming week."
)


class TeacherError(Exception):
    """The teacher could not be reached or kept failing."""


class TeacherAuthError(TeacherError):
    pass


class CassetteMiss(TeacherError):
    """Replay mode found no recorded response for a request."""


class ExampleSkipped(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class LlmRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    attempt: int = 0

    def key(self) -> str:
        """Cassette key. ``attempt`` is included so retries get their own recording."""
        payload = json.dumps(
            {
                "model": self.model,
                "messages": [list(m) for m in self.messages],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "attempt": self.attempt,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @property
    def user_text(self) -> str:
        return next((c for r, c in reversed(self.messages) if r == "user"), "")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    finish_reason: str = "stop"


class ChatClient(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


class HttpChatClient:
    """OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 2.0,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(base_url=base_url, headers=headers, timeout=timeout, transport=transport)
        self.max_retries = max_retries
        self.backoff = backoff

    def complete(self, request):
        body = {
            "model": request.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code in (401, 403):
                raise TeacherAuthError(f"teacher rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TeacherError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TeacherError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                choice = resp.json()["choices"][0]
                text = choice["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TeacherError(f"malformed completion payload: {exc}") from exc
            if not text.strip():
                last = TeacherError("empty completion")
                continue
            return LlmResponse(text, choice.get("finish_reason") or "stop")
        raise TeacherError(f"teacher failed after {self.max_retries + 1} attempts: {last}")


def _cassette_path(root: Path, request: LlmRequest) -> Path:
    return root / f"{request.key()}.json"


class ReplayClient:
    def __init__(self, cassette_dir: str | os.PathLike):
        self.root = Path(cassette_dir)
        if not self.root.is_dir():
            raise TeacherError(f"cassette directory not found: {self.root}")

    def complete(self, request):
        path = _cassette_path(self.root, request)
        try:
            rec = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CassetteMiss(f"no recording for request {request.key()[:12]}") from None
        return LlmResponse(rec["response"]["text"], rec["response"].get("finish_reason", "stop"))


class RecordingClient:
    """Passes requests to ``inner`` and stores every response in the cassette directory."""

    def __init__(self, inner: ChatClient, cassette_dir: str | os.PathLike):
        self.inner = inner
        self.root = Path(cassette_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def complete(self, request):
        response = self.inner.complete(request)
        record = {
            "request": {
                "model": request.model,
                "messages": [list(m) for m in request.messages],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "attempt": request.attempt,
            },
            "response": {"text": response.text, "finish_reason": response.finish_reason},
        }
        atomic_write_text(_cassette_path(self.root, request), json.dumps(record, indent=2, ensure_ascii=False) + "\n")
        return response


class RateLimiter:
    """Token bucket shared by worker threads; ``rate`` requests per second, bursts up to ``burst``."""

    def __init__(self, rate: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.burst = burst
        self._tokens = float(burst)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class RateLimitedClient:
    def __init__(self, inner: ChatClient, limiter: RateLimiter):
        self.inner = inner
        self.limiter = limiter

    def complete(self, request):
        self.limiter.acquire()
        return self.inner.complete(request)


# ---------------------------------------------------------------------------
# Examples


@dataclass(frozen=True)
class ExampleMeta:
    ticker: str
    context_start: str
    target_start: str
    target_end: str
    mode: str
    actual_label: str
    actual_return: float


@dataclass(frozen=True)
class InstructionExample:
    prompt: str
    completion: str
    meta: ExampleMeta

    def sort_key(self):
        return (self.meta.ticker, self.meta.target_start, self.meta.mode)


@dataclass(frozen=True)
class TeacherSettings:
    model: str = "teacher"
    temperature: float = 0.0
    max_tokens: int = 1024
    max_attempts: int = 3
    require_label_match: bool = True


def teacher_request(teacher_prompt: str, settings: TeacherSettings, attempt: int = 0) -> LlmRequest:
    return LlmRequest(
        model=settings.model,
        messages=(("system", SYSTEM_PROMPT), ("user", teacher_prompt)),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        attempt=attempt,
    )


def generate_example(
    bundle: PromptBundle,
    teacher: ChatClient,
    settings: TeacherSettings | None = None,
    budget: int = DEFAULT_BUDGET,
    tokenizer: Tokenizer | None = None,
) -> InstructionExample:
    """Ask the teacher for an analysis of ``bundle`` and pair it with the stripped prompt.

    Completions that do not parse (or, by default, predict a label other
    than the known one) are retried up to ``settings.max_attempts`` times.

    Raises:
        ExampleSkipped: every attempt produced an invalid completion.
        TeacherError: the teacher itself failed.
    """
    settings = settings or TeacherSettings()
    label = bundle.ground_truth_label
    if label is None:
        raise ValueError("teacher generation needs the ground-truth label")
    teacher_text, student = render_pair(bundle, budget, tokenizer)
    problems = []
    for attempt in range(settings.max_attempts):
        response = teacher.complete(teacher_request(teacher_text, settings, attempt))
        try:
            sections = parse_analysis(response.text)
        except AnalysisParseError as exc:
            problems.append(f"attempt {attempt + 1}: {exc}")
            continue
        if settings.require_label_match and sections.predicted_label != label:
            problems.append(f"attempt {attempt + 1}: predicted {sections.predicted_label}, known outcome {label}")
            continue
        meta = ExampleMeta(
            ticker=bundle.ticker,
            context_start=bundle.context_window.start_date.isoformat(),
            target_start=bundle.target_window.start_date.isoformat(),
            target_end=bundle.target_window.end_date.isoformat(),
            mode=PromptMode(bundle.mode).value,
            actual_label=str(label),
            actual_return=round(bundle.ground_truth_return, 10),
        )
        return InstructionExample(student.text, response.text.strip() + "\n", meta)
    raise ExampleSkipped("; ".join(problems))


@dataclass
class BuildResult:
    examples: list[InstructionExample]
    skipped: list[tuple[str, str, str]] = field(default_factory=list)  # (ticker, target_start, reason)


def generate_examples(
    bundles: Sequence[PromptBundle],
    teacher: ChatClient,
    settings: TeacherSettings | None = None,
    budget: int = DEFAULT_BUDGET,
    max_in_flight: int = 4,
    tokenizer: Tokenizer | None = None,
) -> BuildResult:
    """Run ``generate_example`` over many bundles with at most ``max_in_flight`` concurrent calls.

    Output order follows ``(ticker, target week, mode)`` regardless of completion order.
    """

    def one(bundle):
        try:
            return generate_example(bundle, teacher, settings, budget, tokenizer), None
        except ExampleSkipped as exc:
            logger.warning("skipped %s %s: %s", bundle.ticker, bundle.target_window.start_date, exc.reason)
            return None, (bundle.ticker, bundle.target_window.start_date.isoformat(), exc.reason)

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = list(pool.map(one, bundles))
    examples = sorted((e for e, _ in results if e is not None), key=InstructionExample.sort_key)
    skipped = sorted(s for _, s in results if s is not None)
    return BuildResult(examples, skipped)


def example_to_record(example: InstructionExample) -> dict:
    return {"instruction": example.prompt, "output": example.completion, "meta": asdict(example.meta)}


def export_jsonl(examples: Iterable[InstructionExample], path: str | os.PathLike) -> Path:
    """Write one ``{"instruction", "output", "meta"}`` object per line, sorted by ticker and week."""
    path = Path(path)
    ordered = sorted(examples, key=InstructionExample.sort_key)
    text = "".join(json.dumps(example_to_record(e), ensure_ascii=False) + "\n" for e in ordered)
    atomic_write_text(path, text)
    return path


def load_jsonl(path: str | os.PathLike) -> list[InstructionExample]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append(InstructionExample(rec["instruction"], rec["output"], ExampleMeta(**rec["meta"])))
    return out


def label_tokens(text: str) -> set[str]:
    """Every movement-label token in ``text``, upper-cased."""
    found = set()
    for m in LABEL_PATTERN.finditer(text):
        try:
            found.add(str(MovementLabel.parse(m.group(0))))
        except ValueError:
            continue
    return found


def leakage_audit(examples: Iterable[InstructionExample]) -> list[InstructionExample]:
    """Examples whose prompt contains the actual label of their target week."""
    return [e for e in examples if e.meta.actual_label in label_tokens(e.prompt)]


def skip_log_text(skipped: Sequence[tuple[str, str, str]]) -> str:
    return "".join(f"{t}\t{w}\t{' '.join(r.split())}\n" for t, w, r in skipped)
