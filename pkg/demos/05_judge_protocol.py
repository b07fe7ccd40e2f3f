"""
The judge prompt and its strict grammar
=======================================

A fixed prompt asks the judge to analyze each solution paragraph inside
numbered tags and finish with a single conclusion tag. The parser accepts
exactly that grammar and nothing else; every rejection carries a typed
code so callers can tell malformed output from transport failure.
"""

import json
import re
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from prmgate.annotate import (
    JudgeParseError,
    RemoteJudgeClient,
    build_judge_prompt,
    extract_prompt_content,
    judge_annotate,
    parse_judge_response,
    render_judge_response,
)
from prmgate.core import make_trajectory

QUESTION = "Solve x + 3 = 7. (demo marker: err=1)"
STEPS = [
    "Subtract 3 from both sides to isolate x.",
    "This gives x = 5.",
    "So the answer is x = 5.",
]

prompt = build_judge_prompt(QUESTION, STEPS)
print(f"prompt is {len(prompt)} chars; the tagged tail looks like:\n")
print("\n".join(prompt.splitlines()[-12:]))

# a well-formed verdict: paragraph 2 is the first bad one
response = render_judge_response(1, len(STEPS))
print(f"\na well-formed response:\n{response}\n")
verdict = parse_judge_response(response, n_steps=len(STEPS))
print(f"parsed: conclusion={verdict.conclusion!r}, analyses for paragraphs "
      f"{[i for i, _ in verdict.analyses]}, first_error index {verdict.first_error}")

# malformed responses are rejected with a code, never guessed at
bad = [
    response[: response.index("<conclusion>")],
    response.replace("</analysis_2>", "</analysis_9>"),
    response + "\n<conclusion>\nCorrect\n</conclusion>",
]
print()
for text in bad:
    try:
        parse_judge_response(text, n_steps=len(STEPS))
    except JudgeParseError as exc:
        print(f"rejected [{exc.code}]: {exc}")


# a tiny local judge: it reads the gold marker out of the question and
# answers in the protocol grammar, standing in for a real endpoint
class DemoJudge(BaseHTTPRequestHandler):
    def do_POST(self):
        payload = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        question, steps = extract_prompt_content(payload["messages"][0]["content"])
        marker = re.search(r"err=(\d+|none)", question).group(1)
        gold = None if marker == "none" else int(marker)
        text = render_judge_response(gold, len(steps))
        body = json.dumps({"choices": [{"message": {"content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


server = ThreadingHTTPServer(("127.0.0.1", 0), DemoJudge)
threading.Thread(target=server.serve_forever, daemon=True).start()

client = RemoteJudgeClient(
    endpoint=f"http://127.0.0.1:{server.server_port}/v1/chat/completions",
    cache_dir=tempfile.mkdtemp(prefix="prmgate_judge_cache_"),
)
traj = make_trajectory(id="demo", question=QUESTION,
                       step_features=[[0.0]] * len(STEPS), step_texts=STEPS,
                       labeled=False)

first = judge_annotate(client, traj)
second = judge_annotate(client, traj)
server.shutdown()

print(f"\nlive annotation: first_error={first.first_error} (source {first.source.value})")
print(f"asked again:     first_error={second.first_error} (source {second.source.value})")
print(f"HTTP calls made: {client.call_count} (the cache answered the repeat)")
