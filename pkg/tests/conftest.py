import json
import os

import httpx
import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

ANCHOR = ["Paris", " is", " nice"]
RAG_TOPS = [
    {"Paris": -0.05, "Lyon": -3.2, "Rome": -4.0},
    {" is": -0.02, " was": -4.1},
    {" nice": -0.4, " big": -1.3, " old": -3.0},
]
PARA_TOPS = [
    {"Rome": -0.3, "Paris": -1.6, "Nice": -3.5},
    {" is": -0.1, " has": -2.6},
    {" big": -0.5, " nice": -1.1},
]


class MockCompletions:
    """Counting mock of a legacy completions endpoint.

    Non-echo requests return the greedy anchor with ``RAG_TOPS``; echo
    requests return a two-token prompt followed by the anchor with
    ``para_tops`` (``RAG_TOPS`` when ``identical``).
    """

    def __init__(self, identical=False, para_tops=None, drop_logprobs=False, status=200, delay_exc=None):
        self.requests = []
        self.identical = identical
        self.para_tops = para_tops or PARA_TOPS
        self.drop_logprobs = drop_logprobs
        self.status = status
        self.delay_exc = delay_exc

    def __call__(self, request):
        body = json.loads(request.content)
        self.requests.append(body)
        if self.delay_exc is not None:
            raise self.delay_exc("simulated", request=request)
        if self.status != 200:
            return httpx.Response(self.status, text="nope")
        if body.get("echo"):
            tops = RAG_TOPS if self.identical else self.para_tops
            tokens = ["Q", ":"] + ANCHOR
            top_lp = [None, {":": -0.01}] + tops
        else:
            tokens, top_lp = list(ANCHOR), RAG_TOPS
        block = {
            "tokens": tokens,
            "token_logprobs": [None if t is None else t.get(tok) for tok, t in zip(tokens, top_lp)],
            "top_logprobs": top_lp,
        }
        choice = {"text": "".join(tokens)}
        if not self.drop_logprobs:
            choice["logprobs"] = block
        return httpx.Response(200, json={"choices": [choice]})


@pytest.fixture
def fixture_path():
    return lambda name: os.path.join(FIXTURES, name)


def make_http(mock, **kw):
    from repcs.backends import HttpBackend

    client = httpx.Client(transport=httpx.MockTransport(mock))
    return HttpBackend("http://mock", "test-model", t_len=len(ANCHOR), client=client, **kw)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
