"""Multiple-choice question files and prompt rendering.

A question file is line-delimited JSON with items:

    {"id": "q1", "question": "...", "choices": ["...", "...", ...],
     "answer_index": 2}

The number of choices must match the job's candidate token list; choice k is
labelled with candidate token k in the rendered prompt.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .job import JobError


@dataclass
class MCQAItem:
    id: str
    question: str
    choices: list[str]
    answer_index: int


def load_items(path, n_choices: int, limit: int | None = None) -> list[MCQAItem]:
    items: list[MCQAItem] = []
    seen: set[str] = set()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise JobError(f"cannot read dataset {path}: {e}") from e
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise JobError(f"{path} line {i}: malformed JSON: {e}") from e
        try:
            item = MCQAItem(
                id=str(obj["id"]),
                question=str(obj["question"]),
                choices=[str(c) for c in obj["choices"]],
                answer_index=int(obj["answer_index"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise JobError(f"{path} line {i}: bad item: {e}") from e
        if item.id in seen:
            raise JobError(f"{path} line {i}: duplicate id {item.id!r}")
        seen.add(item.id)
        if len(item.choices) != n_choices:
            raise JobError(
                f"{path} line {i}: {len(item.choices)} choices but job has {n_choices} candidates"
            )
        if not (0 <= item.answer_index < n_choices):
            raise JobError(f"{path} line {i}: answer_index {item.answer_index} out of range")
        items.append(item)
        if limit is not None and len(items) >= limit:
            break
    if not items:
        raise JobError(f"dataset {path} contains no items")
    return items


def render_prompt(item: MCQAItem, candidates: list[str], template: str) -> str:
    choices = "\n".join(f"{c}. {text}" for c, text in zip(candidates, item.choices))
    return template.format(question=item.question, choices=choices)
