"""Feature extraction from causal LMs into the cascadekit record format.

For each question the small model runs once with hidden states captured;
the model's own output head (final norm + unembedding) is applied to every
selected layer's hidden state at the answer position, keeping only the
candidate-token logits. The large model, when present, contributes its
final-layer candidate distribution, and the input embedding is the mean of
the small model's final hidden states over the prompt tokens (input-only).
Greedy, no-grad, eval-mode extraction is idempotent: re-running a job
reproduces identical records.
"""

from __future__ import annotations

import json

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

from .job import ExtractionJob, JobError
from .mcqa import MCQAItem, load_items, render_prompt

# final pre-head normalization per architecture family
_NORM_PATHS = (
    ("transformer", "ln_f"),  # gpt2
    ("model", "norm"),  # llama, mistral
    ("gpt_neox", "final_layer_norm"),
    ("model", "decoder", "final_layer_norm"),  # opt
    ("transformer", "norm_f"),  # mpt
)


def _find_final_norm(model) -> torch.nn.Module:
    for path in _NORM_PATHS:
        obj = model
        for attr in path:
            obj = getattr(obj, attr, None)
            if obj is None:
                break
        if obj is not None:
            return obj
    raise JobError(
        "cannot locate the model's final normalization layer; "
        f"tried {['.'.join(p) for p in _NORM_PATHS]}"
    )


def candidate_token_ids(tokenizer, candidates: list[str]) -> list[int]:
    """One vocabulary id per candidate; multi-token candidates reduce to
    their first token, and the resulting ids must stay distinct."""
    ids = []
    for text in candidates:
        toks = tokenizer.encode(text, add_special_tokens=False)
        if len(toks) == 0:
            raise JobError(f"candidate {text!r} produced no tokens")
        ids.append(int(toks[0]))
    if len(set(ids)) != len(ids):
        raise JobError(f"candidates {candidates} do not map to distinct token ids")
    return ids


def select_layers(selection, n_blocks: int) -> list[int]:
    """Hidden-state indices to dump; the final block is appended as the last
    entry when not already selected."""
    if isinstance(selection, str):
        chosen = list(range(0, n_blocks, 4))
    else:
        chosen = [int(j) for j in selection]
        bad = [j for j in chosen if not (0 <= j <= n_blocks)]
        if bad:
            raise JobError(f"layer indices {bad} outside [0, {n_blocks}]")
    if not chosen or chosen[-1] != n_blocks:
        chosen = [j for j in chosen if j < n_blocks] + [n_blocks]
    return chosen


class ModelWrapper:
    """A loaded causal LM plus the pieces extraction needs."""

    def __init__(self, name_or_path: str, device: str):
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModelForCausalLM.from_pretrained(name_or_path)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.head = self.model.get_output_embeddings()
        if self.head is None:
            raise JobError(f"{name_or_path} has no output embedding head")
        self.norm = _find_final_norm(self.model)
        self.n_blocks = int(self.model.config.num_hidden_layers)

    @torch.no_grad()
    def forward_hidden(self, prompt: str):
        """(hidden_states tuple, prompt token count) for one prompt."""
        enc = self.tokenizer(prompt, return_tensors="pt").to(self.device)
        out = self.model(**enc, output_hidden_states=True)
        return out.hidden_states, int(enc["input_ids"].shape[1])

    @torch.no_grad()
    def candidate_logits(self, hidden, cand_ids: list[int], apply_norm: bool) -> np.ndarray:
        """Apply the model's own output head to one hidden-state vector and
        keep the candidate logits. The final entry of the hidden-state tuple
        is already normalized by the model, so only intermediate layers need
        the final norm applied first."""
        if apply_norm:
            hidden = self.norm(hidden)
        logits = self.head(hidden)
        return logits[cand_ids].to(torch.float64).cpu().numpy()


def extract_record(
    item: MCQAItem,
    job: ExtractionJob,
    small: ModelWrapper,
    large: ModelWrapper | None,
    small_cand: list[int],
    large_cand: list[int] | None,
    layer_ids: list[int],
) -> dict:
    prompt = render_prompt(item, job.candidate_tokens, job.prompt_template)
    hidden, n_tokens = small.forward_hidden(prompt)
    rows = []
    n_layers = len(hidden) - 1
    for j in layer_ids:
        rows.append(small.candidate_logits(hidden[j][0, -1], small_cand, apply_norm=j != n_layers))
    embedding = hidden[-1][0].mean(dim=0).to(torch.float64).cpu().numpy()

    record = {
        "id": item.id,
        "n_labels": len(job.candidate_tokens),
        "true_label": item.answer_index,
        "layer_ids": layer_ids,
        "small_layer_logits": [row.tolist() for row in rows],
        "input_embedding": embedding.tolist(),
        "prompt_length": n_tokens,
    }
    if large is not None and large_cand is not None:
        lhidden, _ = large.forward_hidden(prompt)
        llogits = large.candidate_logits(lhidden[-1][0, -1], large_cand, apply_norm=False)
        shifted = llogits - llogits.max()
        probs = np.exp(shifted)
        probs /= probs.sum()
        record["large_final_probs"] = probs.tolist()
    return record


def run_job(job: ExtractionJob, limit: int | None = None) -> dict:
    """Run extraction and write one record per question to ``job.output``."""
    job.validate()
    limit = limit if limit is not None else job.limit
    items = load_items(job.dataset, len(job.candidate_tokens), limit)
    small = ModelWrapper(job.small_model, job.device)
    small_cand = candidate_token_ids(small.tokenizer, job.candidate_tokens)
    layer_ids = select_layers(job.layers, small.n_blocks)
    large = large_cand = None
    if job.large_model:
        large = ModelWrapper(job.large_model, job.device)
        large_cand = candidate_token_ids(large.tokenizer, job.candidate_tokens)

    with open(job.output, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            record = extract_record(item, job, small, large, small_cand, large_cand, layer_ids)
            fh.write(json.dumps(record, separators=(",", ":")))
            fh.write("\n")
    return {
        "output": job.output,
        "n_records": len(items),
        "n_labels": len(job.candidate_tokens),
        "layer_ids": layer_ids,
        "embedding_dim": int(small.model.config.hidden_size),
        "with_large": large is not None,
    }
