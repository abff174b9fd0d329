"""Registry wiring for built-in actions.

Rail actions adapt the rail checks to the flow contract: they read their
inputs from the conversation context, record the full verdict on the
turn trace, and return the `allowed` flag for the flow's condition.
"""

from __future__ import annotations

from . import rails as railmod
from .index import Index, knn
from .runtime import ActionContext, ActionRegistry


def build_registry(config, gateway, embed_provider, extra=None) -> ActionRegistry:
    registry = ActionRegistry()
    templates = dict(getattr(config.rails, "templates", {}) or {})
    hallu_cfg = config.rails.hallucination

    def check_jailbreak(ctx: ActionContext):
        user_input = ctx.get("last_user_message")
        if not user_input:
            raise ValueError("no user message to check")
        verdict = railmod.check_jailbreak(
            gateway, user_input, template=templates.get("jailbreak"), state=ctx._state
        )
        ctx.record_verdict(verdict)
        return verdict.allowed

    def output_moderation(ctx: ActionContext):
        bot_response = ctx.get("last_bot_message")
        if not bot_response:
            raise ValueError("no bot message to moderate")
        verdict = railmod.output_moderation(
            gateway, bot_response, template=templates.get("output_moderation"), state=ctx._state
        )
        ctx.record_verdict(verdict)
        return verdict.allowed

    def check_facts(ctx: ActionContext, evidence=None):
        evidence = evidence or ctx.get("relevant_chunks")
        bot_response = ctx.get("last_bot_message")
        if not evidence or not bot_response:
            raise ValueError("fact check requires evidence and a bot message")
        verdict = railmod.check_facts(
            gateway, evidence, bot_response, template=templates.get("fact_check"), state=ctx._state
        )
        ctx.record_verdict(verdict)
        return verdict.allowed

    def check_hallucination(ctx: ActionContext):
        bot_response = ctx.get("last_bot_message")
        if not bot_response:
            raise ValueError("no bot message to check")
        # Resample from the prompt that produced the answer when we have
        # it; a predefined message had no prompt, so use the user text.
        prompt = ctx.get("last_bot_prompt") or ctx.get("last_user_message")
        verdict = railmod.check_hallucination(
            gateway,
            prompt,
            bot_response,
            cfg=hallu_cfg,
            template=templates.get("hallucination"),
            state=ctx._state,
        )
        ctx.record_verdict(verdict)
        return verdict.allowed

    registry.register("check_jailbreak", check_jailbreak)
    registry.register("output_moderation", output_moderation)
    registry.register("check_facts", check_facts)
    registry.register("check_hallucination", check_hallucination)
    registry.register(
        "retrieve_relevant_chunks",
        make_retrieval_action(config.knowledge_base or [], embed_provider),
    )
    registry.register("wolfram_alpha_request", wolfram_alpha_request)

    for name, action in (extra or {}).items():
        registry.register(name, action)
    return registry


def make_retrieval_action(chunks: list[str], embed_provider, top_k: int = 3):
    """Build the knowledge-base retrieval action over the config's chunks."""
    from .embeddings import EmbeddingVector
    from .index import IndexedItem

    items = []
    if chunks:
        vectors = embed_provider.embed_batch(list(chunks))
        items = [
            IndexedItem(
                id=i,
                kind="user_example",
                text=chunk,
                payload="kb",
                vector=EmbeddingVector(tuple(float(v) for v in vectors[i]), embed_provider.dim),
            )
            for i, chunk in enumerate(chunks)
        ]
    index = Index(items)

    def retrieve_relevant_chunks(ctx: ActionContext, query=None):
        query = query or ctx.get("last_user_message")
        if not query or len(index) == 0:
            return ""
        hits = knn(index, query, top_k, embed_provider)
        return "\n".join(item.text for item, _ in hits)

    return retrieve_relevant_chunks


def wolfram_alpha_request(ctx: ActionContext, query=None):
    """Stand-in for the external computation engine; same signature.

    Returns a fixed answer so example apps run offline. Register a real
    implementation under the same name to integrate the actual API.
    """
    return "42"
