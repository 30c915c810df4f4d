"""Chat backends, prompt templates, label refinement and ReACT explanations."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .corpus import Article
from .embedding import API_KEY_ENV
from .retrieval import RetrievedEvidence
from .taxonomy import OTHER, Taxonomy, TaxonomyError

log = logging.getLogger(__name__)

MAX_WORDS = 80
LABELS_RE = re.compile(r"^\s*LABELS:\s*(.*?)\s*$", re.IGNORECASE)
ALLOWED_PREFIX = "Allowed labels: "
_CONCLUSION_RE = re.compile(r"conclusion\s*:", re.IGNORECASE)
_SENTENCE_END = (".", "!", "?", "।")


class LLMError(RuntimeError):
    pass


class RefinementError(LLMError):
    pass


@dataclass
class ChatBackendConfig:
    endpoint: str = ""
    model_name: str = "gpt-4o"
    temperature: float = 0.0
    max_output_tokens: int = 512
    timeout: float = 60.0
    retries: int = 3
    max_parallel: int = 4
    mock_script: str | None = None

    def __post_init__(self):
        if self.temperature < 0 or self.retries < 0 or self.max_parallel < 1:
            raise ValueError(f"invalid chat backend config: {self}")


class ChatBackend(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


def prompt_fingerprint(messages: Sequence[dict]) -> str:
    blob = json.dumps(list(messages), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class RemoteChatBackend:
    """Client for a chat-completions endpoint with bounded in-flight requests."""

    def __init__(self, cfg: ChatBackendConfig, client: httpx.Client | None = None,
                 backoff: float = 1.0):
        if not cfg.endpoint:
            raise LLMError("remote chat backend requires an endpoint")
        self.cfg = cfg
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._slots = threading.BoundedSemaphore(cfg.max_parallel)
        key = os.environ.get(API_KEY_ENV)
        self._headers = {"Authorization": f"Bearer {key}"} if key else {}

    def complete(self, messages: list[dict]) -> str:
        payload = {
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }
        last_exc = None
        with self._slots:
            for attempt in range(self.cfg.retries + 1):
                try:
                    resp = self._client.post(self.cfg.endpoint, json=payload, headers=self._headers)
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"]
                except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                    last_exc = exc
                    if attempt < self.cfg.retries:
                        time.sleep(self.backoff * 2**attempt)
        raise LLMError(f"chat request failed after {self.cfg.retries + 1} attempts: {last_exc}")


class MockChatBackend:
    """Offline backend answering from a script keyed by prompt fingerprint.

    Script file (JSON)::

        {"responses": [{"fingerprint": "<sha256>", "response": "..."}, ...],
         "fallback": "echo"}

    Responses sharing a fingerprint are returned in file order. Unscripted
    prompts get the ``fallback`` policy: ``"echo"`` keeps every allowed
    label (or summarizes the observed sentences for explanation prompts),
    ``"error"`` raises.
    """

    def __init__(self, responses: Sequence[tuple[str, str]] = (), fallback: str = "echo"):
        if fallback not in ("echo", "error"):
            raise ValueError(f"unknown fallback policy {fallback!r}")
        self.fallback = fallback
        self._queues: dict[str, deque] = {}
        for fp, text in responses:
            self._queues.setdefault(fp, deque()).append(text)
        self._lock = threading.Lock()
        self.calls: list[str] = []

    @classmethod
    def from_script(cls, path: str | Path) -> "MockChatBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        pairs = [(r["fingerprint"], r["response"]) for r in raw.get("responses", [])]
        return cls(pairs, raw.get("fallback", "echo"))

    def complete(self, messages: list[dict]) -> str:
        fp = prompt_fingerprint(messages)
        with self._lock:
            self.calls.append(fp)
            queue = self._queues.get(fp)
            if queue:
                return queue.popleft()
        if self.fallback == "error":
            raise LLMError(f"no scripted response for prompt {fp[:12]}")
        return echo_response(messages)


def echo_response(messages: Sequence[dict]) -> str:
    first_user = next(m["content"] for m in messages if m["role"] == "user")
    for line in first_user.splitlines():
        if line.startswith(ALLOWED_PREFIX):
            return "LABELS: " + line[len(ALLOWED_PREFIX):]
    sentences = re.findall(r"^\d+\. (.*)$", first_user, flags=re.MULTILINE)
    words = " ".join(sentences).split()[:60]
    return "Thought: echo.\nConclusion: The article supports the narrative: " + " ".join(words)


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    stage: str  # "narrative_refine" | "sub_assign" | "explain"
    injected_labels: tuple[str, ...]

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system},
                {"role": "user", "content": self.user}]


@dataclass
class RefinementResult:
    narratives: list[str]
    subs: list[str]
    raw_responses: list[str] = field(default_factory=list)
    retries_used: int = 0


@dataclass
class Explanation:
    text: str
    word_count: int
    evidence_used: list[RetrievedEvidence]
    dominant: str
    retries_used: int = 0


SYSTEM_ANALYST = (
    "You are a media analyst who recognizes the storylines and framing devices "
    "used in news articles. Follow the requested output format exactly."
)

_LABEL_CONTRACT = (
    "Finish with one final line of the form\n"
    "LABELS: <label>; <label>\n"
    "using only allowed labels, copied exactly, or\n"
    "LABELS: none\n"
    "if no allowed label applies."
)


def _article_block(article: Article) -> str:
    return f'Article ({article.language}):\n"""\n{article.text.strip()}\n"""'


def build_stage1_prompt(article: Article, candidates: Sequence[str], taxonomy: Taxonomy) -> PromptBundle:
    if not candidates:
        raise ValueError("stage-1 prompt needs at least one candidate")
    block = taxonomy.render_block(candidates, "main")
    user = "\n\n".join([
        "Decide which candidate narratives are really present in the article. "
        "The candidates come from a high-recall classifier and include false "
        "positives. Remove candidates the article does not support and keep "
        "every candidate it does support. Never add a label that is not a candidate.",
        "Reason as a tree: for each candidate open two branches, one collecting "
        "evidence for the narrative and one collecting evidence against it. "
        "Evaluate both branches, prune the weaker one, and keep the label only "
        "when the supporting branch survives.",
        "Candidate narratives:\n" + block,
        ALLOWED_PREFIX + "; ".join(candidates),
        _article_block(article),
        _LABEL_CONTRACT,
    ])
    return PromptBundle(SYSTEM_ANALYST, user, "narrative_refine", tuple(candidates))


def build_stage2_prompt(article: Article, narrative: str, taxonomy: Taxonomy) -> PromptBundle:
    subs = list(taxonomy.narrative_index.get(narrative, ()))
    if not subs:
        raise TaxonomyError(f"narrative {narrative!r} has no sub-narratives")
    user = "\n\n".join([
        f"The article below has been confirmed to carry the narrative \"{narrative}\". "
        "Assign every sub-narrative of it that the article supports.",
        "Reason as a tree: for each sub-narrative weigh the supporting and "
        "contradicting evidence as separate branches before deciding.",
        "Sub-narratives:\n" + taxonomy.render_block(subs, "sub"),
        ALLOWED_PREFIX + "; ".join(subs),
        _article_block(article),
        _LABEL_CONTRACT,
    ])
    return PromptBundle(SYSTEM_ANALYST, user, "sub_assign", tuple(subs))


def parse_labels(reply: str) -> list[str] | None:
    """Labels on the last ``LABELS:`` line; ``None`` when there is no such line."""
    for line in reversed(reply.strip().splitlines()):
        m = LABELS_RE.match(line)
        if m:
            body = m.group(1).strip()
            if body.lower() in ("none", ""):
                return []
            return list(dict.fromkeys(s.strip() for s in body.split(";") if s.strip()))
    return None


def _ask_labels(backend: ChatBackend, bundle: PromptBundle, allowed: Sequence[str]):
    allowed_set = set(allowed)
    messages = bundle.messages()
    raw = []
    for attempt in range(2):
        reply = backend.complete(messages)
        raw.append(reply)
        labels = parse_labels(reply)
        if labels is None:
            problem = "no final LABELS: line was found"
        else:
            stray = [lab for lab in labels if lab not in allowed_set]
            if not stray:
                return labels, raw, attempt
            problem = "these labels are not allowed: " + "; ".join(stray)
        if attempt == 0:
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"Your answer could not be used: {problem}. "
                                            + _LABEL_CONTRACT},
            ]
    raise RefinementError(f"{bundle.stage}: {problem} (after retry)")


def refine_narratives(backend: ChatBackend, bundle: PromptBundle, candidates: Sequence[str]) -> list[str]:
    """Stage 1: filter the classifier candidates. Never adds labels.

    Kept labels come back in the order the model listed them.
    """
    if bundle.stage != "narrative_refine":
        raise ValueError(f"expected a narrative_refine prompt, got {bundle.stage!r}")
    labels, _, _ = _ask_labels(backend, bundle, candidates)
    return labels


def assign_subnarratives(backend: ChatBackend, article: Article, narratives: Sequence[str],
                         taxonomy: Taxonomy) -> RefinementResult:
    """Stage 2: one prompt per confirmed narrative, restricted to its children."""
    narratives = list(dict.fromkeys(narratives))
    if not narratives:
        return RefinementResult([OTHER], [OTHER])
    bad = [n for n in narratives if n != OTHER and not taxonomy.has_narrative(n)]
    if bad:
        raise TaxonomyError(f"unknown narratives: {bad}")
    subs: list[str] = []
    raw: list[str] = []
    retries = 0
    for narrative in narratives:
        if narrative == OTHER and not taxonomy.has_narrative(OTHER):
            subs.append(OTHER)
            continue
        bundle = build_stage2_prompt(article, narrative, taxonomy)
        labels, replies, used = _ask_labels(backend, bundle, bundle.injected_labels)
        raw += replies
        retries += used
        subs += [s for s in labels if s not in subs]
    result = RefinementResult(narratives, subs, raw, retries)
    violations = taxonomy.validate_labelset(result.narratives, result.subs)
    if violations:
        raise RefinementError("hierarchy violations: " + "; ".join(map(str, violations)))
    return result


def refine(backend: ChatBackend, article: Article, candidates: Sequence[str],
           taxonomy: Taxonomy) -> tuple[list[str], RefinementResult]:
    """Run both refinement stages; returns (stage-1 output, final result)."""
    bundle = build_stage1_prompt(article, candidates, taxonomy)
    kept = refine_narratives(backend, bundle, candidates)
    return kept, assign_subnarratives(backend, article, kept, taxonomy)


def build_react_prompt(evidence: Sequence[RetrievedEvidence], dominant: str, subs: Sequence[str],
                       taxonomy: Taxonomy) -> PromptBundle:
    if not evidence:
        raise ValueError("ReACT prompt needs at least one evidence sentence")
    main_block = taxonomy.render_block([dominant], "main")
    sub_block = taxonomy.render_block(list(subs), "sub") if subs else ""
    observed = "\n".join(
        f"{n}. {ev.sentence}" for n, ev in enumerate(sorted(evidence, key=lambda e: e.article_index), 1)
    )
    sub_names = "; ".join(subs) if subs else "(none given)"
    steps = (
        "Proceed in order: (1) pull out the core assertions of the observed "
        "sentences, (2) argue from them for the dominant narrative, then "
        "(3) argue for the sub-narrative the same way."
    )
    user = "\n\n".join([
        f"Dominant narrative: {dominant}\nSub-narratives: {sub_names}",
        steps,
        "Thought:\nList the main assertions in the Observation sentences and "
        "who is said to be behind the events they describe.",
        "Action:\nLook up the taxonomy entries below and compare each claim "
        "with their definitions and examples.\n\n" + main_block
        + (f"\n\n{sub_block}" if sub_block else ""),
        "Observation:\n" + observed,
        f"Conclusion:\nWrite a single justification of at most {MAX_WORDS} words "
        f"explaining why the article supports \"{dominant}\". Use only claims found "
        "in the Observation sentences. Begin the final answer with \"Conclusion:\".",
    ])
    return PromptBundle(SYSTEM_ANALYST, user, "explain", (dominant, *subs))


def extract_conclusion(reply: str) -> str:
    parts = _CONCLUSION_RE.split(reply)
    text = parts[-1] if len(parts) > 1 else reply
    return " ".join(text.split())


def truncate_words(text: str, limit: int = MAX_WORDS) -> str:
    """Keep at most ``limit`` words, ending on a sentence boundary when possible."""
    words = text.split()
    if len(words) <= limit:
        return " ".join(words)
    head = words[:limit]
    for i in range(len(head) - 1, -1, -1):
        if head[i].endswith(_SENTENCE_END):
            return " ".join(head[: i + 1])
    return " ".join(head)


def generate_explanation(backend: ChatBackend, bundle: PromptBundle,
                         evidence: Sequence[RetrievedEvidence] = ()) -> Explanation:
    if bundle.stage != "explain":
        raise ValueError(f"expected an explain prompt, got {bundle.stage!r}")
    messages = bundle.messages()
    reply = backend.complete(messages)
    text = extract_conclusion(reply)
    retries = 0
    if len(text.split()) > MAX_WORDS:
        retries = 1
        messages = messages + [
            {"role": "assistant", "content": reply},
            {"role": "user", "content": f"Shorten the conclusion to at most {MAX_WORDS} words. "
                                        "Begin with \"Conclusion:\"."},
        ]
        text = extract_conclusion(backend.complete(messages))
        if len(text.split()) > MAX_WORDS:
            text = truncate_words(text)
    if not text:
        raise LLMError("empty conclusion in model reply")
    return Explanation(text, len(text.split()), list(evidence), bundle.injected_labels[0], retries)


def make_chat_backend(cfg: ChatBackendConfig, offline: bool = False) -> ChatBackend:
    if cfg.mock_script:
        return MockChatBackend.from_script(cfg.mock_script)
    if offline:
        return MockChatBackend()
    if not cfg.endpoint:
        raise LLMError("no chat endpoint configured (set chat.endpoint or use --offline)")
    return RemoteChatBackend(cfg)
