"""Annotators: gold-label oracle, judge prompt builder, strict response
parser, and a retrying HTTP client for a chat-completion endpoint.

The judge protocol asks for one ``<analysis_i>`` block per reviewed step and
a single ``<conclusion>`` of Correct or Incorrect, stopping at the first
erroneous step. Parsing is strict: analysis indices must start at 1 and be
contiguous, Correct must cover every step, Incorrect maps the last analysis
index to a 0-based first_error. All parse failures raise JudgeParseError
with a stable machine-readable ``code``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .core import Trajectory

__all__ = [
    "Annotation",
    "AnnotationError",
    "AnnotatorUnavailable",
    "AnnotationSource",
    "JUDGE_PROMPT_TEMPLATE",
    "JudgeParseError",
    "JudgeVerdict",
    "RemoteJudgeClient",
    "build_judge_prompt",
    "extract_prompt_content",
    "judge_annotate",
    "oracle_annotate",
    "parse_judge_response",
    "render_judge_response",
]

MAX_PROMPT_CHARS = 120_000

JUDGE_PROMPT_TEMPLATE = """I will provide a math problem along with a solution. They will be formatted as follows:
[Math Problem]
<math_problem>
...(math problem)...
</math_problem>
[Solution]
<paragraph_1>
...(paragraph 1 of solution)...
</paragraph_1>
...
<paragraph_n>
...(paragraph n of solution)...
</paragraph_n>

Your task is to review each paragraph of the solution in sequence, analyzing,
verifying, and critiquing the reasoning in detail. You need to provide the
analyses and the conclusion in the following format:
<analysis_1>
...(analysis of paragraph 1)...
</analysis_1>
...
<analysis_n>
...(analysis of paragraph n)...
</analysis_n>
<conclusion>
Correct/Incorrect
</conclusion>

* When you analyze each paragraph, you should use proper verification, recalculation, or reflection to indicate whether it is logically and mathematically valid. Please elaborate on the analysis process carefully.
* If an error is detected in any paragraph, you should describe the nature and cause of the error in detail, and suggest how to correct the error or the correct approach. Once a paragraph is found to contain any error, stop further analysis of subsequent paragraphs (as they may depend on the identified error) and directly provide the conclusion of "Incorrect." For instance, given a solution of five paragraphs, if an error is found in the third paragraph, you should reply in the following format:
<analysis_1>
...(analysis of paragraph 1)...
</analysis_1>
<analysis_2>
...(analysis of paragraph 2)...
</analysis_3>
<analysis_3>
...(analysis of paragraph 3; since an error is found here, also provide detailed critique and correction guideline)...
</analysis_3>
<conclusion>
Incorrect
</conclusion>
Note that the analyses of paragraphs 4 and 5 should be skipped as the paragraph 3 has been found to contain an error.
* Respond with your analyses and conclusion directly.
--------------------------------------------------
The following is the math problem and the solution for your task:
[Math Problem]
{tagged_problem}
[Solution]
{tagged_response}
"""


class AnnotationSource(str, enum.Enum):
    ORACLE = "oracle"
    JUDGE = "judge"
    CACHE = "cache"


@dataclass(frozen=True)
class Annotation:
    """A first-error label (None for error-free) and where it came from."""

    first_error: int | None
    source: AnnotationSource
    raw: str | None = None


class AnnotationError(RuntimeError):
    """This trajectory could not be annotated (bad input, unparseable judge)."""


class AnnotatorUnavailable(AnnotationError):
    """The annotation service itself is down or unconfigured."""


class JudgeParseError(ValueError):
    """Malformed judge response; ``code`` identifies the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class JudgeVerdict:
    """Parsed analyses (1-based indices) and the Correct/Incorrect call."""

    analyses: tuple[tuple[int, str], ...]
    conclusion: str

    @property
    def first_error(self) -> int | None:
        """0-based first error implied by the verdict."""
        if self.conclusion == "Correct":
            return None
        return self.analyses[-1][0] - 1


def oracle_annotate(traj: Trajectory) -> Annotation:
    """Return the trajectory's gold label verbatim."""
    if traj.gold is None:
        raise AnnotationError(f"trajectory {traj.id!r} has no gold label to reveal")
    return Annotation(first_error=traj.gold.first_error, source=AnnotationSource.ORACLE)


_FORBIDDEN_IN_STEP = re.compile(r"</?(?:paragraph_\d+|math_problem|analysis_\d+|conclusion)>")


def build_judge_prompt(question: str, step_texts: list[str]) -> str:
    """Fill the prompt template with a tagged question and tagged steps."""
    if not step_texts:
        raise ValueError("build_judge_prompt requires at least one step")
    if not question:
        raise ValueError("build_judge_prompt requires a nonempty question")
    if _FORBIDDEN_IN_STEP.search(question):
        raise ValueError("question contains protocol tags and cannot be wrapped safely")
    for i, text in enumerate(step_texts):
        if not text:
            raise ValueError(f"step {i} has empty text")
        if _FORBIDDEN_IN_STEP.search(text):
            raise ValueError(f"step {i} contains protocol tags and cannot be wrapped safely")
    tagged_problem = f"<math_problem>\n{question}\n</math_problem>"
    tagged_response = "\n".join(
        f"<paragraph_{i + 1}>\n{text}\n</paragraph_{i + 1}>" for i, text in enumerate(step_texts)
    )
    return JUDGE_PROMPT_TEMPLATE.replace("{tagged_problem}", tagged_problem).replace(
        "{tagged_response}", tagged_response
    )


_PROBLEM_RE = re.compile(r"<math_problem>\n(.*?)\n</math_problem>", re.DOTALL)
_PARAGRAPH_RE = re.compile(r"<paragraph_(\d+)>\n(.*?)\n</paragraph_\1>", re.DOTALL)


def extract_prompt_content(prompt: str) -> tuple[str, list[str]]:
    """Inverse of build_judge_prompt: recover (question, step_texts)."""
    tail = prompt.split("-" * 50, 1)[-1]
    m = _PROBLEM_RE.search(tail)
    if m is None:
        raise ValueError("prompt has no <math_problem> block")
    question = m.group(1)
    steps = [g[1] for g in _PARAGRAPH_RE.findall(tail)]
    if not steps:
        raise ValueError("prompt has no <paragraph_i> blocks")
    return question, steps


_ANALYSIS_OPEN_RE = re.compile(r"<analysis_(\d+)>")
_CONCLUSION_RE = re.compile(r"<conclusion>(.*?)</conclusion>", re.DOTALL)


def parse_judge_response(text: str, n_steps: int) -> JudgeVerdict:
    """Strictly parse a judge response for a solution of n_steps steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    conclusions = _CONCLUSION_RE.findall(text)
    if not conclusions:
        if "<conclusion>" in text:
            raise JudgeParseError("unclosed_tag", "<conclusion> is never closed")
        raise JudgeParseError("missing_conclusion", "no <conclusion> block found")
    if len(conclusions) > 1:
        raise JudgeParseError("duplicate_conclusion", f"{len(conclusions)} <conclusion> blocks")
    word = conclusions[0].strip()
    if word not in ("Correct", "Incorrect"):
        raise JudgeParseError("unknown_conclusion", f"conclusion is {word!r}")

    # analyses live before the conclusion; trailing prose after it is ignored
    body = text[: text.index("<conclusion>")]
    analyses: list[tuple[int, str]] = []
    pos = 0
    while True:
        m = _ANALYSIS_OPEN_RE.search(body, pos)
        if m is None:
            break
        idx = int(m.group(1))
        close = f"</analysis_{idx}>"
        end = body.find(close, m.end())
        if end < 0:
            raise JudgeParseError("unclosed_tag", f"<analysis_{idx}> is never closed")
        analyses.append((idx, body[m.end() : end].strip()))
        pos = end + len(close)
    indices = [i for i, _ in analyses]
    if indices != list(range(1, len(indices) + 1)):
        raise JudgeParseError(
            "noncontiguous_analyses",
            f"analysis indices {indices} are not contiguous from 1",
        )
    if word == "Correct":
        if len(analyses) != n_steps:
            raise JudgeParseError(
                "correct_count_mismatch",
                f"Correct needs {n_steps} analyses, got {len(analyses)}",
            )
    else:
        if not analyses:
            raise JudgeParseError("no_analyses", "Incorrect with no analysis blocks")
        if len(analyses) > n_steps:
            raise JudgeParseError(
                "too_many_analyses",
                f"{len(analyses)} analyses for a {n_steps}-step solution",
            )
    return JudgeVerdict(analyses=tuple(analyses), conclusion=word)


def render_judge_response(first_error: int | None, n_steps: int) -> str:
    """Synthesize a well-formed response implying the given first_error."""
    stop = n_steps if first_error is None else first_error + 1
    parts = []
    for i in range(1, stop + 1):
        parts.append(f"<analysis_{i}>\nstep {i} reviewed.\n</analysis_{i}>")
    word = "Correct" if first_error is None else "Incorrect"
    parts.append(f"<conclusion>\n{word}\n</conclusion>")
    return "\n".join(parts)


def _default_transport(
    endpoint: str, payload: dict, timeout_s: float
) -> str:
    import requests

    resp = requests.post(endpoint, json=payload, timeout=timeout_s)
    resp.raise_for_status()
    data = resp.json()
    return data["choices"][0]["message"]["content"]


@dataclass
class RemoteJudgeClient:
    """Chat-completion client with retries, an in-flight cap, and a file cache.

    endpoint/model/timeout default from ANNOTATOR_ENDPOINT, ANNOTATOR_MODEL,
    and ANNOTATOR_TIMEOUT_MS. ``transport`` is injectable for tests and must
    return the assistant message text for a payload
    {model, messages:[{role: user, content}], temperature}.
    """

    endpoint: str | None = None
    model: str | None = None
    timeout_s: float | None = None
    temperature: float = 0.0
    max_attempts: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 8
    cache_dir: str | None = None
    transport: object = None
    _sem: threading.Semaphore = field(init=False, repr=False)
    _calls: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        if self.endpoint is None:
            self.endpoint = os.environ.get("ANNOTATOR_ENDPOINT")
        if self.model is None:
            self.model = os.environ.get("ANNOTATOR_MODEL", "judge")
        if self.timeout_s is None:
            ms = os.environ.get("ANNOTATOR_TIMEOUT_MS", "30000")
            self.timeout_s = float(ms) / 1000.0
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.transport is None:
            self.transport = _default_transport
        self._sem = threading.Semaphore(self.max_in_flight)

    def _cache_path(self, prompt: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        return Path(self.cache_dir) / f"{digest}.json"

    def cache_lookup(self, prompt: str) -> str | None:
        path = self._cache_path(prompt)
        if path is None or not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)["response"]

    def _cache_store(self, prompt: str, response: str) -> None:
        path = self._cache_path(prompt)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp-{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump({"response": response}, f)
        os.replace(tmp, path)  # last writer wins; identical content by construction

    def complete(self, prompt: str) -> str:
        """One raw completion with transport-level retries."""
        if self.endpoint is None:
            raise AnnotatorUnavailable("no annotator endpoint configured (set ANNOTATOR_ENDPOINT)")
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                with self._sem:
                    self._calls += 1
                    return self.transport(self.endpoint, payload, self.timeout_s)
            except Exception as exc:  # transport or response-shape failure
                last = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff_s * (2.0**attempt))
        raise AnnotatorUnavailable(
            f"annotation unavailable after {self.max_attempts} attempts: {last}"
        )

    @property
    def call_count(self) -> int:
        return self._calls


def judge_annotate(client: RemoteJudgeClient, traj: Trajectory) -> Annotation:
    """Prompt the judge about traj and map its verdict to an Annotation."""
    texts = []
    for step in traj.steps:
        if step.text is None:
            raise AnnotationError(f"trajectory {traj.id!r} step {step.index} has no text")
        texts.append(step.text)
    prompt = build_judge_prompt(traj.question, texts)
    if len(prompt) > MAX_PROMPT_CHARS:
        raise AnnotationError(
            f"prompt for {traj.id!r} is {len(prompt)} chars, over the {MAX_PROMPT_CHARS} cap"
        )
    cached = client.cache_lookup(prompt)
    if cached is not None:
        verdict = parse_judge_response(cached, traj.n_steps)
        return Annotation(first_error=verdict.first_error, source=AnnotationSource.CACHE, raw=cached)
    response = client.complete(prompt)
    try:
        verdict = parse_judge_response(response, traj.n_steps)
    except JudgeParseError:
        response = client.complete(prompt)  # one re-ask on a malformed response
        try:
            verdict = parse_judge_response(response, traj.n_steps)
        except JudgeParseError as exc:
            raise AnnotationError(f"judge response unparseable for {traj.id!r}: {exc}") from exc
    client._cache_store(prompt, response)
    return Annotation(first_error=verdict.first_error, source=AnnotationSource.JUDGE, raw=response)
