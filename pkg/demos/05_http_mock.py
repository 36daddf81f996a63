"""Two requests per query against a completions endpoint, here served by a stub."""

import json

import httpx

from repcs.backends import HttpBackend, QueryCase
from repcs.detector import score_output

ANCHOR = ["The", " Eiffel", " Tower"]
RAG = [{"The": -0.1, "A": -2.5}, {" Eiffel": -0.2, " Louvre": -1.9}, {" Tower": -0.05}]
PARA = [{"The": -0.3, "A": -1.5}, {" Louvre": -0.4, " Eiffel": -1.2}, {" Tower": -0.1, " Museum": -2.6}]
calls = []


def server(request):
    body = json.loads(request.content)
    calls.append(body)
    tops = PARA if body.get("echo") else RAG
    lp = {"tokens": ANCHOR, "token_logprobs": [t.get(a) for a, t in zip(ANCHOR, tops)], "top_logprobs": tops}
    return httpx.Response(200, json={"choices": [{"text": "".join(ANCHOR), "logprobs": lp}]})


client = httpx.Client(transport=httpx.MockTransport(server))
backend = HttpBackend("http://stub", "demo-model", t_len=3, client=client)
case = QueryCase("q1", prompt="Which landmark?", passages=["Paris has the Eiffel Tower."])

out = backend.dual_pass(case)
print("requests:", len(calls), "| echo flags:", [c.get("echo", False) for c in calls])
print("projected vocabulary:", out.meta["vocab"])
print("Z =", round(score_output(out).total, 4), "| warnings:", out.warnings)
