"""
Two-stage retrieve-then-generate pipeline.

A query is embedded, the top-k patents are pulled from the vector index,
rendered into a character-budgeted numbered context block, and handed to a
generator. The context always precedes the question in the prompt.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import requests

from .corpus import PatentRecord
from .errors import ConfigError, EmptyContext, GeneratorUnavailable, UnknownDocId
from .index import SearchHit, VectorIndex

log = logging.getLogger(__name__)

GENERATOR_KEY_ENV = "GENERATOR_API_KEY"
DEFAULT_K = 5
DEFAULT_BUDGET_CHARS = 2048  # ~512 tokens at 4 chars/token
SYSTEM_INSTRUCTION = "Answer using only the numbered patent context; cite as [n]"

_CITE_RE = re.compile(r"\[(\d+)\]")


@dataclass(frozen=True)
class GeneratorConfig:
    provider: str = "local_template"
    model_name: str = "gpt-3.5-turbo-0125"
    endpoint_url: Optional[str] = None
    temperature: float = 0.0
    timeout_ms: int = 60_000
    max_retries: int = 3
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.provider not in ("remote", "local_template"):
            raise ConfigError(f"unknown generator provider {self.provider!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.provider == "remote" and not self.endpoint_url:
            raise ConfigError("remote generator requires endpoint_url")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Snippet:
    doc_id: str
    text: str
    truncated: bool
    title: str = ""


@dataclass(frozen=True)
class RetrievalContext:
    query: str
    hits: list[SearchHit]
    snippets: list[Snippet]
    budget_chars: int

    @property
    def rendered(self) -> str:
        return "\n".join(s.text for s in self.snippets)


@dataclass
class RagAnswer:
    answer_text: str
    cited_doc_ids: list[str]
    retrieval_scores: list[float]
    retrieval_ms: int = 0
    generation_ms: int = 0
    retrieved_doc_ids: list[str] = field(default_factory=list)

    def to_dict(self, timings: bool = True) -> dict:
        return {
            "answer_text": self.answer_text,
            "cited_doc_ids": self.cited_doc_ids,
            "retrieved_doc_ids": self.retrieved_doc_ids,
            "retrieval_scores": self.retrieval_scores,
            "retrieval_ms": self.retrieval_ms if timings else 0,
            "generation_ms": self.generation_ms if timings else 0,
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), ensure_ascii=False, sort_keys=True)


def retrieve(query: str, embedder, index: VectorIndex, k: int = DEFAULT_K,
             nprobe: Optional[int] = None) -> list[SearchHit]:
    """Embed ``query`` and return the top-``k`` hits (IVF if ``nprobe`` set)."""
    qvec = embedder.embed(query)
    return index.search(qvec, k, nprobe)


def _snippet_text(hit: SearchHit, record: PatentRecord) -> str:
    return f"[{hit.rank}] {hit.doc_id} | {record.title} | {record.abstract}"


def assemble_context(query: str, hits: Sequence[SearchHit], records: Mapping[str, PatentRecord],
                     budget_chars: int = DEFAULT_BUDGET_CHARS) -> RetrievalContext:
    """Render hits as numbered snippets within ``budget_chars``.

    The budget covers the snippets joined by newlines. Each snippet may use an
    equal share of whatever budget is still unspent, so room left over by a
    short snippet is spread over the ones after it.
    """
    hits = sorted(hits, key=lambda h: h.rank)
    for h in hits:
        if h.doc_id not in records:
            raise UnknownDocId(h.doc_id)
    n = len(hits)
    if n and budget_chars < n - 1:
        raise ValueError(f"budget_chars={budget_chars} cannot hold {n} snippets")
    remaining = budget_chars - max(n - 1, 0)
    snippets = []
    for i, h in enumerate(hits):
        rec = records[h.doc_id]
        full = _snippet_text(h, rec)
        allowance = remaining // (n - i)
        text = full[:allowance]
        remaining -= len(text)
        snippets.append(Snippet(h.doc_id, text, len(full) > allowance, rec.title))
    return RetrievalContext(query, list(hits), snippets, budget_chars)


def build_messages(context: RetrievalContext) -> list[dict]:
    user = f"Context:\n{context.rendered}\n\nQuestion: {context.query}"
    return [
        {"role": "system", "content": SYSTEM_INSTRUCTION},
        {"role": "user", "content": user},
    ]


def template_answer(context: RetrievalContext) -> str:
    top = context.snippets[0].title
    text = f"Top match: {top} [1]"
    if len(context.snippets) > 1:
        refs = ", ".join(f"[{i}]" for i in range(2, len(context.snippets) + 1))
        text += f"; also relevant: {refs}"
    return text


def cited_ids(answer_text: str, hits: Sequence[SearchHit]) -> list[str]:
    """Doc ids for ``[n]`` markers that point at a retrieved rank, in rank order."""
    by_rank = {h.rank: h.doc_id for h in hits}
    ranks = sorted({int(m) for m in _CITE_RE.findall(answer_text)} & by_rank.keys())
    return [by_rank[r] for r in ranks]


class RemoteGenerator:
    """Chat-completions style client: ``{model, messages, temperature}`` ->
    ``{choices: [{message: {content}}]}``."""

    RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}

    def __init__(self, config: GeneratorConfig, api_key: Optional[str] = None,
                 session: Optional[requests.Session] = None):
        self.config = config
        self._api_key = api_key if api_key is not None else os.environ.get(GENERATOR_KEY_ENV)
        if not self._api_key:
            raise ConfigError(f"remote generator needs an API key in ${GENERATOR_KEY_ENV}")
        self._session = session or requests.Session()

    def complete(self, messages: list[dict]) -> str:
        cfg = self.config
        body = {"model": cfg.model_name, "messages": messages, "temperature": cfg.temperature}
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._session.post(cfg.endpoint_url, json=body, headers=headers,
                                          timeout=cfg.timeout_ms / 1000)
            except requests.RequestException as exc:
                last = type(exc).__name__
                log.warning("generator request failed (%s), attempt %d", last, attempt + 1)
                continue
            if resp.status_code in self.RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise GeneratorUnavailable(f"generator returned HTTP {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GeneratorUnavailable(f"malformed generator response: {exc!r}") from exc
        raise GeneratorUnavailable(f"generator unavailable after {cfg.max_retries + 1} attempts ({last})")


def generate_answer(context: RetrievalContext, config: GeneratorConfig,
                    generator: Optional[RemoteGenerator] = None,
                    clock: Callable[[], float] = time.perf_counter) -> RagAnswer:
    if not context.hits:
        raise EmptyContext("no retrieved documents to generate from")
    start = clock()
    if config.provider == "local_template":
        text = template_answer(context)
        cited = [h.doc_id for h in context.hits]
    else:
        generator = generator or RemoteGenerator(config)
        text = generator.complete(build_messages(context))
        cited = cited_ids(text, context.hits)
    elapsed = clock() - start
    return RagAnswer(
        answer_text=text,
        cited_doc_ids=cited,
        retrieval_scores=[h.score for h in context.hits],
        generation_ms=int(elapsed * 1000),
        retrieved_doc_ids=[h.doc_id for h in context.hits],
    )


class RagPipeline:
    """Bundles an embedder, an index snapshot and the corpus records."""

    def __init__(self, embedder, index: VectorIndex, records: Mapping[str, PatentRecord],
                 generator_config: Optional[GeneratorConfig] = None, k: int = DEFAULT_K,
                 budget_chars: int = DEFAULT_BUDGET_CHARS, nprobe: Optional[int] = None,
                 generator: Optional[RemoteGenerator] = None):
        self.embedder = embedder
        self.index = index
        self.records = records
        self.generator_config = generator_config or GeneratorConfig()
        self.k = k
        self.budget_chars = budget_chars
        self.nprobe = nprobe
        self._generator = generator
        if self._generator is None and self.generator_config.provider == "remote":
            self._generator = RemoteGenerator(self.generator_config)

    def retrieve(self, query: str, k: Optional[int] = None) -> list[SearchHit]:
        return retrieve(query, self.embedder, self.index, k or self.k, self.nprobe)

    def answer(self, query: str, k: Optional[int] = None) -> RagAnswer:
        t0 = time.perf_counter()
        hits = self.retrieve(query, k)
        retrieval_ms = int((time.perf_counter() - t0) * 1000)
        context = assemble_context(query, hits, self.records, self.budget_chars)
        ans = generate_answer(context, self.generator_config, self._generator)
        ans.retrieval_ms = retrieval_ms
        return ans
