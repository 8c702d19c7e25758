"""Pseudo-references for dialogues without human summaries.

Several prompted generations are produced per dialogue and the one with the
highest ROUGE-L F1 against the rendered dialogue is kept.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from faithkit.corpus import Dialogue, LabeledSummary, render_dialogue
from faithkit.lexical import rouge_l, tokenize
from faithkit.models.interfaces import PromptTemplate, SamplingConfig, ValidatedGenerator, as_template

DEFAULT_PROMPTS = (
    PromptTemplate("summarize", "{source}\n\nSummarize the conversation above."),
    PromptTemplate("tldr", "{source}\n\nTL;DR:"),
    PromptTemplate("what-happened", "{source}\n\nWhat happened in this dialogue?"),
    PromptTemplate("brief", "Write a brief summary of this chat: {source}"),
    PromptTemplate("gist", "{source}\n\nGiven the chat above, what is its gist?"),
)


@dataclass(frozen=True)
class PseudoReference:
    text: str
    chosen_prompt: str
    rouge_l_vs_source: float
    candidates: tuple[tuple[str, str, float], ...] = ()  # (prompt id, text, score)

    def to_summary(self, dialogue_id: str) -> LabeledSummary:
        return LabeledSummary(id=f"{dialogue_id}-pseudo-ref", dialogue_id=dialogue_id,
                              system="pseudo-ref", text=self.text, label="positive")


def generate_pseudo_reference(dialogue: Dialogue, generator, prompts: Sequence = DEFAULT_PROMPTS,
                              sampling: SamplingConfig = SamplingConfig()) -> PseudoReference:
    if not prompts:
        raise ValueError("at least one prompt is required")
    if not isinstance(generator, ValidatedGenerator):
        generator = ValidatedGenerator(generator)
    source = render_dialogue(dialogue)
    src_tokens = tokenize(source)
    scored = []
    for prompt in map(as_template, prompts):
        text = generator.generate(source, prompt, sampling)
        toks = tokenize(text)
        if not toks:
            continue
        scored.append((prompt.id, text, rouge_l(toks, src_tokens).f1))
    if not scored:
        raise ValueError(f"every candidate for dialogue {dialogue.id!r} was empty")
    best = scored[0]
    for cand in scored[1:]:
        if cand[2] > best[2]:
            best = cand
    return PseudoReference(best[1], best[0], best[2], tuple(scored))
