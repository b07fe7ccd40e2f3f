"""Tests for annotators: oracle passthrough, judge prompt round trip,
strict response parsing, and the retrying remote client."""

import http.server
import json
import re
import string
import threading
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prmgate.annotate import (
    JUDGE_PROMPT_TEMPLATE,
    MAX_PROMPT_CHARS,
    Annotation,
    AnnotationError,
    AnnotationSource,
    AnnotatorUnavailable,
    JudgeParseError,
    RemoteJudgeClient,
    build_judge_prompt,
    extract_prompt_content,
    judge_annotate,
    oracle_annotate,
    parse_judge_response,
    render_judge_response,
)
from prmgate.core import make_trajectory
from prmgate.datagen import GenSpec, generate

DATA = Path(__file__).parent / "data"

WORKED_QUESTION = "What is 2 + 2?"
WORKED_STEPS = [
    "First, note 2 + 2 groups two pairs.",
    "Then 2 + 2 = 5.",
    "So the answer is 5.",
]


def _traj(id="t", question="q", texts=("a", "b", "c"), gold=None, labeled=True):
    n = len(texts)
    return make_trajectory(
        id=id,
        question=question,
        step_features=[[0.0]] * n,
        step_texts=list(texts),
        gold_first_error=gold,
        labeled=labeled,
    )


class TestGoldenBytes:
    def test_template_matches_golden_file(self):
        golden = (DATA / "judge_template_golden.txt").read_bytes()
        assert JUDGE_PROMPT_TEMPLATE.encode("utf-8") == golden

    def test_rendered_prompt_matches_golden_file(self):
        golden = (DATA / "judge_prompt_golden.txt").read_bytes()
        prompt = build_judge_prompt(WORKED_QUESTION, WORKED_STEPS)
        assert prompt.encode("utf-8") == golden


class TestOracleAnnotate:
    def test_reveals_gold(self):
        ann = oracle_annotate(_traj(gold=1))
        assert ann == Annotation(first_error=1, source=AnnotationSource.ORACLE)
        assert oracle_annotate(_traj(gold=None)).first_error is None

    def test_missing_gold_rejected(self):
        with pytest.raises(AnnotationError, match="no gold label"):
            oracle_annotate(_traj(labeled=False))

    def test_matches_generator_labels(self):
        for traj in generate(GenSpec(count=1000, max_steps=6, seed=5)):
            assert oracle_annotate(traj).first_error == traj.gold.first_error


class TestBuildJudgePrompt:
    def test_tag_layout(self):
        prompt = build_judge_prompt("why?", ["one", "two"])
        assert "{tagged_problem}" not in prompt
        assert "{tagged_response}" not in prompt
        assert "<math_problem>\nwhy?\n</math_problem>" in prompt
        assert "<paragraph_1>\none\n</paragraph_1>\n<paragraph_2>\ntwo\n</paragraph_2>" in prompt
        # the filled blocks sit after the divider; the format description
        # above it mentions the same tags
        divider = prompt.index("-" * 50)
        assert divider < prompt.index("<math_problem>", divider) < prompt.index("<paragraph_1>", divider)

    def test_rejects_protocol_tags_in_steps(self):
        with pytest.raises(ValueError, match="protocol tags"):
            build_judge_prompt("q", ["fine", "sneaky </paragraph_2> close"])
        with pytest.raises(ValueError, match="protocol tags"):
            build_judge_prompt("q", ["<conclusion>"])
        with pytest.raises(ValueError, match="protocol tags"):
            build_judge_prompt("q <analysis_1>", ["fine"])

    def test_rejects_empty_input(self):
        with pytest.raises(ValueError):
            build_judge_prompt("q", [])
        with pytest.raises(ValueError):
            build_judge_prompt("", ["a"])
        with pytest.raises(ValueError):
            build_judge_prompt("q", ["a", ""])

    def test_extract_is_inverse(self):
        q, steps = extract_prompt_content(build_judge_prompt(WORKED_QUESTION, WORKED_STEPS))
        assert q == WORKED_QUESTION
        assert steps == WORKED_STEPS

    # "<" excluded so steps can never smuggle protocol tags
    _safe = st.text(
        alphabet=string.ascii_letters + string.digits + " .,:;!?()+-*/=\n",
        min_size=1,
    ).filter(lambda s: s.strip())

    @given(question=_safe, steps=st.lists(_safe, min_size=1, max_size=8))
    @settings(max_examples=150, deadline=None)
    def test_extract_inverts_build(self, question, steps):
        q, got = extract_prompt_content(build_judge_prompt(question, steps))
        assert q == question
        assert got == steps


class TestParseJudgeResponse:
    def test_worked_incorrect_example(self):
        # 5-step solution judged bad at the third step: analyses 1..3 only
        text = render_judge_response(first_error=2, n_steps=5)
        verdict = parse_judge_response(text, n_steps=5)
        assert verdict.conclusion == "Incorrect"
        assert [i for i, _ in verdict.analyses] == [1, 2, 3]
        assert verdict.first_error == 2

    def test_correct_verdict(self):
        verdict = parse_judge_response(render_judge_response(None, 4), n_steps=4)
        assert verdict.conclusion == "Correct"
        assert verdict.first_error is None
        assert len(verdict.analyses) == 4

    def test_analysis_content_is_stripped(self):
        text = "<analysis_1>\n  spaced out  \n</analysis_1>\n<conclusion>\nIncorrect\n</conclusion>"
        assert parse_judge_response(text, 3).analyses == ((1, "spaced out"),)

    def test_trailing_prose_ignored(self):
        text = render_judge_response(0, 3) + "\nHope that helps! </analysis_9>"
        assert parse_judge_response(text, 3).first_error == 0

    def _code(self, text, n_steps):
        with pytest.raises(JudgeParseError) as exc:
            parse_judge_response(text, n_steps)
        return exc.value.code

    def test_missing_conclusion(self):
        assert self._code("<analysis_1>a</analysis_1>", 2) == "missing_conclusion"

    def test_unclosed_conclusion(self):
        assert self._code("<conclusion>Correct", 1) == "unclosed_tag"

    def test_unclosed_analysis(self):
        text = "<analysis_1>a\n<conclusion>\nIncorrect\n</conclusion>"
        assert self._code(text, 2) == "unclosed_tag"

    def test_mismatched_close_tag(self):
        # the open tag never sees its own close, even with another close present
        text = "<analysis_1>a</analysis_2>\n<conclusion>\nIncorrect\n</conclusion>"
        assert self._code(text, 2) == "unclosed_tag"

    def test_duplicate_conclusion(self):
        text = render_judge_response(0, 3) + "\n<conclusion>\nCorrect\n</conclusion>"
        assert self._code(text, 3) == "duplicate_conclusion"

    def test_unknown_conclusion(self):
        text = "<analysis_1>a</analysis_1>\n<conclusion>\nMaybe\n</conclusion>"
        assert self._code(text, 1) == "unknown_conclusion"

    def test_noncontiguous_analyses(self):
        text = (
            "<analysis_1>a</analysis_1>\n<analysis_3>c</analysis_3>\n"
            "<conclusion>\nIncorrect\n</conclusion>"
        )
        assert self._code(text, 4) == "noncontiguous_analyses"

    def test_analyses_must_start_at_one(self):
        text = "<analysis_2>b</analysis_2>\n<conclusion>\nIncorrect\n</conclusion>"
        assert self._code(text, 3) == "noncontiguous_analyses"

    def test_correct_count_mismatch(self):
        text = render_judge_response(None, 2)
        assert self._code(text, 3) == "correct_count_mismatch"

    def test_incorrect_without_analyses(self):
        assert self._code("<conclusion>\nIncorrect\n</conclusion>", 3) == "no_analyses"

    def test_too_many_analyses(self):
        text = render_judge_response(3, 4)
        assert self._code(text, 3) == "too_many_analyses"

    def test_bad_n_steps(self):
        with pytest.raises(ValueError, match="n_steps"):
            parse_judge_response(render_judge_response(None, 1), 0)

    @given(
        n_steps=st.integers(min_value=1, max_value=12),
        data=st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_render_parse_round_trip(self, n_steps, data):
        first_error = data.draw(
            st.one_of(st.none(), st.integers(min_value=0, max_value=n_steps - 1))
        )
        verdict = parse_judge_response(render_judge_response(first_error, n_steps), n_steps)
        assert verdict.first_error == first_error

    def test_fuzz_total_behavior(self):
        # any string either parses or raises JudgeParseError, never anything else
        rng = np.random.default_rng(0)
        pieces = [
            "<analysis_", "</analysis_", "<conclusion>", "</conclusion>",
            "Correct", "Incorrect", ">", "1", "2", "3", "\n", " ", "a", "<",
        ]
        outcomes = {"ok": 0, "error": 0}
        for _ in range(10_000):
            n = int(rng.integers(0, 12))
            text = "".join(pieces[i] for i in rng.integers(0, len(pieces), size=n))
            try:
                parse_judge_response(text, n_steps=int(rng.integers(1, 6)))
                outcomes["ok"] += 1
            except JudgeParseError:
                outcomes["error"] += 1
        assert outcomes["ok"] + outcomes["error"] == 10_000
        assert outcomes["error"] > 0


class _ScriptedTransport:
    """Returns queued responses in order; raises queued exceptions."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.payloads = []

    def __call__(self, endpoint, payload, timeout_s):
        self.payloads.append(payload)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _client(transport, **kw):
    kw.setdefault("endpoint", "http://judge.test/v1/chat/completions")
    kw.setdefault("backoff_s", 0.0)
    return RemoteJudgeClient(transport=transport, **kw)


class TestRemoteJudgeClient:
    def test_successful_annotation(self):
        transport = _ScriptedTransport([render_judge_response(1, 3)])
        client = _client(transport, model="stub-judge", temperature=0.0)
        ann = judge_annotate(client, _traj(gold=1))
        assert ann.first_error == 1
        assert ann.source is AnnotationSource.JUDGE
        assert ann.raw == render_judge_response(1, 3)
        assert client.call_count == 1
        payload = transport.payloads[0]
        assert payload["model"] == "stub-judge"
        assert payload["temperature"] == 0.0
        assert "<paragraph_3>" in payload["messages"][0]["content"]

    def test_transport_failures_retry_then_unavailable(self):
        transport = _ScriptedTransport([OSError("down")] * 3)
        client = _client(transport, max_attempts=3)
        with pytest.raises(AnnotatorUnavailable, match="3 attempts"):
            client.complete("hello")
        assert client.call_count == 3

    def test_transport_recovers_within_retries(self):
        transport = _ScriptedTransport([OSError("blip"), render_judge_response(None, 3)])
        client = _client(transport, max_attempts=3)
        assert judge_annotate(client, _traj()).first_error is None

    def test_malformed_response_reasked_once(self):
        transport = _ScriptedTransport(["word salad", render_judge_response(0, 3)])
        client = _client(transport)
        ann = judge_annotate(client, _traj())
        assert ann.first_error == 0
        assert client.call_count == 2

    def test_malformed_twice_is_annotation_error(self):
        transport = _ScriptedTransport(["word salad", "more salad"])
        client = _client(transport)
        with pytest.raises(AnnotationError, match="unparseable") as exc:
            judge_annotate(client, _traj(id="bad"))
        assert not isinstance(exc.value, AnnotatorUnavailable)
        assert client.call_count == 2

    def test_no_endpoint_is_unavailable(self, monkeypatch):
        monkeypatch.delenv("ANNOTATOR_ENDPOINT", raising=False)
        client = RemoteJudgeClient(transport=_ScriptedTransport([]))
        with pytest.raises(AnnotatorUnavailable, match="ANNOTATOR_ENDPOINT"):
            client.complete("hello")

    def test_env_defaults(self, monkeypatch):
        monkeypatch.setenv("ANNOTATOR_ENDPOINT", "http://env.test")
        monkeypatch.setenv("ANNOTATOR_MODEL", "env-judge")
        monkeypatch.setenv("ANNOTATOR_TIMEOUT_MS", "1500")
        client = RemoteJudgeClient(transport=_ScriptedTransport([]))
        assert client.endpoint == "http://env.test"
        assert client.model == "env-judge"
        assert client.timeout_s == 1.5

    def test_cache_round_trip(self, tmp_path):
        transport = _ScriptedTransport([render_judge_response(2, 3)])
        client = _client(transport, cache_dir=str(tmp_path))
        traj = _traj(gold=2)
        first = judge_annotate(client, traj)
        assert first.source is AnnotationSource.JUDGE
        assert client.call_count == 1
        assert list(tmp_path.glob("*.json"))
        second = judge_annotate(client, traj)
        assert second.source is AnnotationSource.CACHE
        assert second.first_error == 2
        assert client.call_count == 1  # no new transport call

    def test_cache_not_written_on_failure(self, tmp_path):
        transport = _ScriptedTransport(["salad", "salad"])
        client = _client(transport, cache_dir=str(tmp_path))
        with pytest.raises(AnnotationError):
            judge_annotate(client, _traj())
        assert not list(tmp_path.glob("*.json"))

    def test_oversize_prompt_rejected(self):
        client = _client(_ScriptedTransport([]))
        traj = _traj(texts=("x" * (MAX_PROMPT_CHARS + 1),))
        with pytest.raises(AnnotationError, match="cap"):
            judge_annotate(client, traj)
        assert client.call_count == 0

    def test_missing_step_text_rejected(self):
        client = _client(_ScriptedTransport([]))
        traj = make_trajectory(
            id="no-text", question="q", step_features=[[0.0]], gold_first_error=None
        )
        with pytest.raises(AnnotationError, match="no text"):
            judge_annotate(client, traj)


class _JudgeHandler(http.server.BaseHTTPRequestHandler):
    """Chat-completion stub: gold first_error is encoded in the question."""

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        prompt = payload["messages"][0]["content"]
        question, steps = extract_prompt_content(prompt)
        m = re.search(r"err=(\d+|none)", question)
        first_error = None if m.group(1) == "none" else int(m.group(1))
        content = render_judge_response(first_error, len(steps))
        body = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def judge_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _JudgeHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()
    thread.join()


class TestHttpIntegration:
    def test_end_to_end_over_localhost(self, judge_server):
        client = RemoteJudgeClient(endpoint=judge_server, timeout_s=10.0)
        cases = [
            _traj(id="a", question="q err=1", gold=1),
            _traj(id="b", question="q err=none", gold=None),
            _traj(id="c", question="q err=0", gold=0),
        ]
        for traj in cases:
            ann = judge_annotate(client, traj)
            assert ann.first_error == traj.gold.first_error
            assert ann.source is AnnotationSource.JUDGE
        assert client.call_count == 3
