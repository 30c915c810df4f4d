import json
import os
from pathlib import Path

import httpx
import pytest

from narrlens.corpus import Article
from narrlens.llm import (
    MAX_WORDS, ChatBackendConfig, LLMError, MockChatBackend, RefinementError, RemoteChatBackend,
    assign_subnarratives, build_react_prompt, build_stage1_prompt, build_stage2_prompt,
    echo_response, extract_conclusion, generate_explanation, make_chat_backend, parse_labels,
    prompt_fingerprint, refine, refine_narratives, truncate_words,
)
from narrlens.retrieval import RetrievedEvidence
from narrlens.taxonomy import OTHER, TaxonomyError, load_taxonomy
from narrlens import data_path

GOLDEN = Path(__file__).parent / "golden"
ART = Article("EN_t", "EN", "CC", "Secret groups plan everything. The climate agenda hides motives.")

HIDDEN = "CC: Hidden plots by secret schemes of powerful groups"
MOTIVES = "CC: Hidden plots by secret schemes of powerful groups: The climate agenda has hidden motives"


class Scripted:
    """Backend returning canned replies in order and recording the messages."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.seen = []

    def complete(self, messages):
        self.seen.append(messages)
        return self.replies.pop(0)


def evidence(n):
    return [RetrievedEvidence(f"Sentence {i}.", i, 0.5, "pass1", "N1") for i in range(n)]


def check_golden(name, text):
    path = GOLDEN / name
    if os.environ.get("NARRLENS_UPDATE_GOLDEN"):
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


def test_stage1_prompt_golden(tiny_tax):
    b = build_stage1_prompt(ART, ["N1", "N2"], tiny_tax)
    assert b.stage == "narrative_refine" and b.injected_labels == ("N1", "N2")
    assert b.user.count("Definition: First narrative definition.") == 1
    assert b.user.count("Definition: Second narrative definition.") == 1
    assert b.user.count("LABELS: none") == 1
    assert "S1a" not in b.user
    check_golden("stage1.txt", b.system + "\n---\n" + b.user)
    assert build_stage1_prompt(ART, ["N1", "N2"], tiny_tax) == b


def test_stage1_prompt_unknown_candidate(tiny_tax):
    with pytest.raises(TaxonomyError):
        build_stage1_prompt(ART, ["N1", "NX"], tiny_tax)
    with pytest.raises(ValueError):
        build_stage1_prompt(ART, [], tiny_tax)


def test_stage2_prompt_only_children(tiny_tax):
    b = build_stage2_prompt(ART, "N1", tiny_tax)
    assert b.injected_labels == ("S1a", "S1b")
    assert "Sub a of N1." in b.user and "S2a" not in b.user
    check_golden("stage2.txt", b.system + "\n---\n" + b.user)


def test_react_prompt_golden(tiny_tax):
    b = build_react_prompt(evidence(5)[::-1], "N1", ["S1a"], tiny_tax)
    for section in ("Thought:", "Action:", "Observation:", "Conclusion:"):
        assert section in b.user
    observed = b.user.split("Observation:\n")[1].split("\n\n")[0].splitlines()
    assert observed == [f"{i + 1}. Sentence {i}." for i in range(5)]
    action = b.user.split("Action:")[1].split("Observation:")[0]
    assert "First narrative definition." in action and "Sub a of N1." in action
    assert "(1)" in b.user and "(2)" in b.user and "(3)" in b.user
    check_golden("react.txt", b.system + "\n---\n" + b.user)
    assert build_react_prompt(evidence(5)[::-1], "N1", ["S1a"], tiny_tax) == b


def test_react_prompt_named_labels_in_action():
    tax = load_taxonomy(data_path("mini", "taxonomy_cc.tsv"), "CC")
    b = build_react_prompt(evidence(2), HIDDEN, [MOTIVES], tax)
    action = b.user.split("Action:")[1].split("Observation:")[0]
    assert tax.main_entry(HIDDEN).main_definition in action
    assert tax.sub_entry(MOTIVES).sub_definition in action


def test_react_prompt_errors(tiny_tax):
    with pytest.raises(ValueError):
        build_react_prompt([], "N1", [], tiny_tax)
    with pytest.raises(TaxonomyError):
        build_react_prompt(evidence(1), "NX", [], tiny_tax)


def test_parse_labels():
    assert parse_labels("thinking\nLABELS: N1; N2") == ["N1", "N2"]
    assert parse_labels("LABELS: none") == []
    assert parse_labels("labels:  N1 ;N1 ") == ["N1"]
    assert parse_labels("LABELS: N2\nmore\nLABELS: N1") == ["N1"]
    assert parse_labels("no contract here") is None


def test_refine_filter(tiny_tax):
    b = build_stage1_prompt(ART, ["N1", "N2"], tiny_tax)
    assert refine_narratives(Scripted("Branches...\nLABELS: N1"), b, ["N1", "N2"]) == ["N1"]
    assert refine_narratives(Scripted("LABELS: none"), b, ["N1", "N2"]) == []


def test_refine_retry_then_error(tiny_tax):
    b = build_stage1_prompt(ART, ["N1", "N2"], tiny_tax)
    be = Scripted("LABELS: N3", "LABELS: N1")
    assert refine_narratives(be, b, ["N1", "N2"]) == ["N1"]
    assert len(be.seen[1]) == 4 and "not allowed: N3" in be.seen[1][-1]["content"]
    with pytest.raises(RefinementError, match="after retry"):
        refine_narratives(Scripted("LABELS: N3", "LABELS: N3"), b, ["N1", "N2"])
    with pytest.raises(RefinementError):
        refine_narratives(Scripted("no line", "still none"), b, ["N1", "N2"])
    with pytest.raises(ValueError):
        refine_narratives(Scripted(), build_stage2_prompt(ART, "N1", tiny_tax), ["N1"])


def test_assign_subnarratives(tiny_tax):
    r = assign_subnarratives(Scripted("LABELS: S1a; S1b"), ART, ["N1"], tiny_tax)
    assert (r.narratives, r.subs, r.retries_used) == (["N1"], ["S1a", "S1b"], 0)
    r = assign_subnarratives(Scripted("LABELS: S1b", "LABELS: S2a"), ART, ["N1", "N2"], tiny_tax)
    assert r.subs == ["S1b", "S2a"] and len(r.raw_responses) == 2


def test_assign_orphan_retry_then_error(tiny_tax):
    with pytest.raises(RefinementError):
        assign_subnarratives(Scripted("LABELS: S2a", "LABELS: S2a"), ART, ["N1"], tiny_tax)
    r = assign_subnarratives(Scripted("LABELS: S2a", "LABELS: S1a"), ART, ["N1"], tiny_tax)
    assert r.subs == ["S1a"] and r.retries_used == 1


def test_assign_empty_is_other(tiny_tax):
    r = assign_subnarratives(Scripted(), ART, [], tiny_tax)
    assert (r.narratives, r.subs) == ([OTHER], [OTHER])


def test_refine_none_maps_to_other(tiny_tax):
    kept, r = refine(Scripted("LABELS: none"), ART, ["N1"], tiny_tax)
    assert kept == [] and (r.narratives, r.subs) == ([OTHER], [OTHER])


def test_refine_keeps_reply_order(tiny_tax):
    kept, r = refine(Scripted("LABELS: N2; N1", "LABELS: S2a", "LABELS: S1a"), ART, ["N1", "N2"], tiny_tax)
    assert kept == ["N2", "N1"] and r.subs == ["S2a", "S1a"]
    assert tiny_tax.validate_labelset(r.narratives, r.subs) == []


def words(n, end="."):
    return " ".join(f"w{i}" for i in range(n - 1)) + f" last{end}"


def test_explanation_short(tiny_tax):
    b = build_react_prompt(evidence(3), "N1", [], tiny_tax)
    ex = generate_explanation(Scripted("Thought: x\nConclusion: " + words(42)), b, evidence(3))
    assert (ex.word_count, ex.retries_used, ex.dominant) == (42, 0, "N1")
    assert len(ex.evidence_used) == 3


def test_explanation_shorten_retry(tiny_tax):
    b = build_react_prompt(evidence(1), "N1", [], tiny_tax)
    be = Scripted("Conclusion: " + words(95), "Conclusion: " + words(70))
    ex = generate_explanation(be, b)
    assert (ex.word_count, ex.retries_used) == (70, 1)
    assert "Shorten" in be.seen[1][-1]["content"]


def test_explanation_forced_truncation(tiny_tax):
    b = build_react_prompt(evidence(1), "N1", [], tiny_tax)
    long_text = " ".join(["Alpha beta gamma delta."] * 24)  # 96 words
    ex = generate_explanation(Scripted("Conclusion: " + long_text, "Conclusion: " + long_text), b)
    assert ex.word_count <= MAX_WORDS and ex.word_count == 80
    assert ex.text.endswith(".")
    ex = generate_explanation(Scripted("Conclusion: " + words(95, ""), "Conclusion: " + words(95, "")), b)
    assert ex.word_count == 80


def test_truncate_words_boundary():
    text = "One two three. " + " ".join(["x"] * 90)
    assert truncate_words(text) == "One two three."
    assert truncate_words("a b c", 5) == "a b c"


def test_explanation_errors(tiny_tax):
    b = build_react_prompt(evidence(1), "N1", [], tiny_tax)
    with pytest.raises(LLMError):
        generate_explanation(Scripted("Conclusion:   "), b)
    with pytest.raises(ValueError):
        generate_explanation(Scripted(), build_stage1_prompt(ART, ["N1"], tiny_tax))
    assert extract_conclusion("Thought: a\nConclusion: b c") == "b c"
    assert extract_conclusion("plain reply") == "plain reply"


def test_mock_backend_script_and_fallbacks(tmp_path, tiny_tax):
    b = build_stage1_prompt(ART, ["N1", "N2"], tiny_tax)
    fp = prompt_fingerprint(b.messages())
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"responses": [{"fingerprint": fp, "response": "LABELS: N2"},
                                                {"fingerprint": fp, "response": "LABELS: N1"}],
                                  "fallback": "error"}))
    be = MockChatBackend.from_script(script)
    assert be.complete(b.messages()) == "LABELS: N2"
    assert be.complete(b.messages()) == "LABELS: N1"
    with pytest.raises(LLMError):
        be.complete(b.messages())
    echo = MockChatBackend()
    assert echo.complete(b.messages()) == "LABELS: N1; N2"
    assert echo.calls == [fp]
    cfg = ChatBackendConfig(mock_script=str(script))
    assert isinstance(make_chat_backend(cfg), MockChatBackend)


def test_echo_explanation_reply(tiny_tax):
    b = build_react_prompt(evidence(2), "N1", [], tiny_tax)
    reply = echo_response(b.messages())
    assert extract_conclusion(reply).endswith("Sentence 0. Sentence 1.")


def test_remote_chat_backend(monkeypatch):
    monkeypatch.setenv("NARRLENS_API_KEY", "k")
    bodies = []

    def handler(request):
        bodies.append((request.headers["authorization"], json.loads(request.content)))
        if len(bodies) == 1:
            return httpx.Response(429)
        return httpx.Response(200, json={"choices": [{"message": {"content": "LABELS: none"}}]})

    cfg = ChatBackendConfig(endpoint="https://chat.test/v1", model_name="m", retries=1)
    be = RemoteChatBackend(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)), backoff=0)
    assert be.complete([{"role": "user", "content": "hi"}]) == "LABELS: none"
    auth, body = bodies[-1]
    assert auth == "Bearer k"
    assert body == {"model": "m", "messages": [{"role": "user", "content": "hi"}],
                    "temperature": 0.0, "max_tokens": 512}


def test_offline_and_missing_endpoint():
    assert isinstance(make_chat_backend(ChatBackendConfig(endpoint="https://x"), offline=True), MockChatBackend)
    with pytest.raises(LLMError):
        make_chat_backend(ChatBackendConfig())
