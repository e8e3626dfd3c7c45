"""Extraction job specification.

A job is a JSON file naming the models, the question file, the candidate
answer tokens, and which internal layers to dump. Layer indices follow the
hidden-state convention: 0 is the embedding output, j is the output of
block j, and the final block is always dumped as the last row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class JobError(Exception):
    pass


@dataclass
class ExtractionJob:
    small_model: str
    dataset: str
    output: str
    large_model: str | None = None
    candidate_tokens: list[str] = field(default_factory=lambda: ["A", "B", "C", "D"])
    layers: object = "every_4th"  # "every_4th" | explicit list of block indices
    embedding: str = "small_mean_hidden"  # input-only representation source
    prompt_template: str = "{question}\n{choices}\nAnswer:"
    device: str = "cpu"
    limit: int | None = None

    def validate(self) -> None:
        if not self.small_model:
            raise JobError("small_model is required")
        if not self.dataset:
            raise JobError("dataset is required")
        if not self.output:
            raise JobError("output is required")
        if len(self.candidate_tokens) < 2:
            raise JobError("need at least 2 candidate tokens")
        if len(set(self.candidate_tokens)) != len(self.candidate_tokens):
            raise JobError("candidate tokens must be distinct")
        if isinstance(self.layers, str):
            if self.layers != "every_4th":
                raise JobError(f"unknown layer selection {self.layers!r}")
        else:
            sel = list(self.layers)
            if sorted(set(sel)) != sel:
                raise JobError("explicit layer list must be strictly increasing")
        if self.embedding != "small_mean_hidden":
            raise JobError(f"unknown embedding source {self.embedding!r}")


def load_job(path) -> ExtractionJob:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise JobError(f"cannot read job file {path}: {e}") from e
    known = {f for f in ExtractionJob.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise JobError(f"unknown job fields: {', '.join(sorted(unknown))}")
    job = ExtractionJob(**obj)
    job.validate()
    return job
