"""Exact cosine nearest-neighbor indexes over script definitions.

Three indexes are built from a script: user example utterances, rendered
flows, and bot utterances. Corpora are small (hundreds of items), so the
scan is exhaustive and exact, using plain sequential float arithmetic so
rankings (including tie-breaks) are bit-reproducible. Results order by
score descending, id ascending.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .colang import Script, format_flow
from .embeddings import EmbeddingVector, dot_product, embed_text, l2_norm


@dataclass(frozen=True)
class RetrievalConfig:
    k_examples: int = 5
    similarity_threshold: float = 0.6
    max_per_form: int | None = None  # cap on indexed samples per form (all when None)

    def __post_init__(self):
        if self.k_examples < 1:
            raise ValueError("k_examples must be >= 1")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [0, 1]")
        if self.max_per_form is not None and self.max_per_form < 1:
            raise ValueError("max_per_form must be >= 1 when set")


@dataclass(frozen=True)
class IndexedItem:
    id: int
    kind: str  # user_example | flow | bot_example
    text: str
    payload: str  # canonical form or flow name
    vector: EmbeddingVector


class Index:
    """Immutable after construction; safe for concurrent readers."""

    def __init__(self, items: list[IndexedItem]):
        self.items = list(items)
        self._norms = [l2_norm(item.vector.values) for item in self.items]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class IndexSet:
    user_examples: Index
    flows: Index
    bot_examples: Index
    provider: object = field(compare=False, default=None)


def build_indexes(script: Script, provider, retrieval: RetrievalConfig | None = None) -> IndexSet:
    """Embed and index a script's definitions.

    When `max_per_form` is set, only the first N examples per canonical
    form (in definition order) are indexed.
    """
    cap = retrieval.max_per_form if retrieval else None

    user_entries: list[tuple[str, str]] = []
    for d in script.user_defs:
        examples = d.examples[:cap] if cap else d.examples
        user_entries.extend((e, d.canonical_form) for e in examples)

    flow_entries = [(format_flow(f), f.name) for f in script.flows]

    bot_entries: list[tuple[str, str]] = []
    for d in script.bot_defs:
        utterances = d.utterances[:cap] if cap else d.utterances
        bot_entries.extend((u, d.canonical_form) for u in utterances)

    return IndexSet(
        user_examples=_build_one("user_example", user_entries, provider),
        flows=_build_one("flow", flow_entries, provider),
        bot_examples=_build_one("bot_example", bot_entries, provider),
        provider=provider,
    )


def _build_one(kind: str, entries: list[tuple[str, str]], provider) -> Index:
    if not entries:
        return Index([])
    vectors = provider.embed_batch([text for text, _ in entries])
    items = [
        IndexedItem(
            id=i,
            kind=kind,
            text=text,
            payload=payload,
            vector=EmbeddingVector(tuple(float(v) for v in vectors[i]), provider.dim),
        )
        for i, (text, payload) in enumerate(entries)
    ]
    return Index(items)


def knn(
    index: Index,
    query_text: str,
    k: int,
    provider,
    exclude_ids: frozenset[int] | set[int] = frozenset(),
) -> list[tuple[IndexedItem, float]]:
    """Top-k items by cosine score, ties broken by ascending id.

    `exclude_ids` removes items from consideration (used to hold out an
    evaluated record from its own few-shot pool).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return []
    query = embed_text(provider, query_text)
    q_values = query.values
    q_norm = l2_norm(q_values)
    scored: list[tuple[float, int, IndexedItem]] = []
    for item, norm in zip(index.items, index._norms):
        if item.id in exclude_ids:
            continue
        score = dot_product(item.vector.values, q_values) / (norm * q_norm)
        scored.append((score, item.id, item))
    scored.sort(key=lambda entry: (-entry[0], entry[1]))
    return [(item, score) for score, _item_id, item in scored[:k]]


def similarity_match(
    candidate_form: str,
    defined_forms: list[str],
    threshold: float,
    provider,
) -> str | None:
    """Resolve a generated form against the defined ones.

    An exact string match short-circuits without touching the provider.
    Otherwise the argmax-similarity form is returned iff its score meets
    the threshold (inclusive); argmax ties go to definition order.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    if not defined_forms:
        return None
    if candidate_form in defined_forms:
        return candidate_form
    vectors = provider.embed_batch([candidate_form] + list(defined_forms))
    cand = tuple(float(v) for v in vectors[0])
    cand_norm = l2_norm(cand)
    best_form: str | None = None
    best_score = -2.0
    for form, values in zip(defined_forms, vectors[1:]):
        v = tuple(float(x) for x in values)
        score = dot_product(cand, v) / (cand_norm * l2_norm(v))
        if score > best_score:
            best_form, best_score = form, score
    if best_score >= threshold:
        return best_form
    return None
