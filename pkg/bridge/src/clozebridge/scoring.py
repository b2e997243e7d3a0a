"""Candidate scoring recipes for masked, seq2seq and causal models.

All recipes return one finite log-likelihood per candidate, aligned with the
request's candidate order; candidates the tokenizer cannot represent get a
large-negative sentinel and a note. Scoring is temperature-free and
deterministic for a fixed checkpoint.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from transformers import (
    AutoModelForCausalLM,
    AutoModelForMaskedLM,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
)

from .config import UNREPRESENTABLE_SCORE, BridgeConfig

_MODEL_CLASSES = {
    "masked": AutoModelForMaskedLM,
    "seq2seq": AutoModelForSeq2SeqLM,
    "causal": AutoModelForCausalLM,
}


class PassageTable:
    """Static retrieval lookup: substring match on the prompt, file order."""

    def __init__(self, path: str):
        self.entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                self.entries.append(json.loads(line))

    def lookup(self, prompt: str, n: int) -> list[dict]:
        out: list[dict] = []
        for entry in self.entries:
            if entry["match"] in prompt:
                out.extend(entry["passages"])
            if len(out) >= n:
                break
        return out[:n]


class BridgeScorer:
    def __init__(self, config: BridgeConfig):
        config.validate()
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model_path)
        self.model = _MODEL_CLASSES[config.family].from_pretrained(config.model_path)
        self.model.to(config.device)
        self.model.eval()
        self.passages = PassageTable(config.passages_path) if config.passages_path else None

    # -- request entry point -------------------------------------------------

    def score_request(self, request: dict) -> dict:
        rid = request.get("request_id", "<missing>")
        try:
            prompt = request["prompt"]
            candidates = list(request["candidates"])
        except (KeyError, TypeError) as exc:
            return {"request_id": rid, "error": f"malformed request: {exc}"}
        if not candidates:
            return {"request_id": rid, "error": "empty candidate list"}

        forced = request.get("forced_passages")
        passages = None
        if forced is not None:
            passages = forced
        elif request.get("want_retrieval") and self.passages is not None:
            passages = self.passages.lookup(prompt, int(request.get("n_passages", 20)))

        context = ""
        if passages and self.config.passages_as_context:
            context = " ".join(p["text"] for p in passages) + " "

        scores, notes = self._score(context + prompt, candidates)
        response: dict = {"request_id": rid, "scores": scores}
        if passages is not None:
            response["passages"] = passages
        if forced is not None:
            response["forced_passages_applied"] = True
        if notes:
            response["notes"] = notes
        free = self._free_generation(context + prompt)
        if free is not None:
            response["free_generation"] = free
        if request.get("want_retrieval"):
            response["query_embedding"] = self._embed(prompt)
        return response

    # -- shared helpers --------------------------------------------------------

    def _candidate_ids(self, candidate: str) -> list[int] | None:
        ids = self.tokenizer(candidate, add_special_tokens=False)["input_ids"]
        if not ids or self.tokenizer.unk_token_id in ids:
            return None
        return ids

    def _encode(self, text: str, **kw) -> dict:
        return self.tokenizer(
            text, return_tensors="pt", truncation=True, max_length=self.config.max_length, **kw
        ).to(self.config.device)

    def _score(self, prompt: str, candidates: list[str]) -> tuple[list[float], dict]:
        recipe = {
            "masked": self._score_masked,
            "seq2seq": self._score_seq2seq,
            "causal": self._score_causal,
        }[self.config.family]
        notes: dict = {}
        with torch.no_grad():
            scores = recipe(prompt, candidates, notes)
        return scores, notes

    # -- masked -----------------------------------------------------------------

    def _mask_logprobs(self, prompt: str, k: int) -> torch.Tensor | None:
        """Log-softmax rows at the k mask positions, or None if masks got truncated."""
        marker = self.config.mask_marker
        if marker not in prompt:
            return None
        text = prompt.replace(marker, " ".join([self.tokenizer.mask_token] * k), 1)
        enc = self._encode(text)
        positions = (enc["input_ids"][0] == self.tokenizer.mask_token_id).nonzero().flatten()
        if len(positions) != k:
            return None
        logits = self.model(**enc).logits[0]
        return torch.log_softmax(logits[positions], dim=-1)

    def _score_masked(self, prompt: str, candidates: list[str], notes: dict) -> list[float]:
        by_len: dict[int, torch.Tensor | None] = {}
        scores = []
        for cand in candidates:
            ids = self._candidate_ids(cand)
            if ids is None:
                notes[cand] = "unrepresentable"
                scores.append(UNREPRESENTABLE_SCORE)
                continue
            k = len(ids)
            if k not in by_len:
                by_len[k] = self._mask_logprobs(prompt, k)
            rows = by_len[k]
            if rows is None:
                notes[cand] = "mask slot lost to truncation"
                scores.append(UNREPRESENTABLE_SCORE)
                continue
            total = sum(rows[i, tid].item() for i, tid in enumerate(ids))
            scores.append(total / k if self.config.length_normalize else total)
        return scores

    # -- seq2seq ------------------------------------------------------------------

    def _score_seq2seq(self, prompt: str, candidates: list[str], notes: dict) -> list[float]:
        source = prompt.replace(self.config.mask_marker, self.config.sentinel, 1)
        enc = self._encode(source)
        scores = []
        for cand in candidates:
            ids = self._candidate_ids(cand)
            if ids is None:
                notes[cand] = "unrepresentable"
                scores.append(UNREPRESENTABLE_SCORE)
                continue
            target = self.tokenizer(
                f"{self.config.sentinel} {cand}", add_special_tokens=False, return_tensors="pt"
            )["input_ids"].to(self.config.device)
            logits = self.model(input_ids=enc["input_ids"], labels=target).logits[0]
            logp = torch.log_softmax(logits, dim=-1)
            total = sum(logp[i, tid].item() for i, tid in enumerate(target[0]))
            scores.append(total / len(ids) if self.config.length_normalize else total)
        return scores

    # -- causal ---------------------------------------------------------------------

    def _score_causal(self, prompt: str, candidates: list[str], notes: dict) -> list[float]:
        scores = []
        for cand in candidates:
            ids = self._candidate_ids(cand)
            if ids is None:
                notes[cand] = "unrepresentable"
                scores.append(UNREPRESENTABLE_SCORE)
                continue
            sentence = prompt.replace(self.config.mask_marker, cand, 1)
            enc = self._encode(sentence)
            input_ids = enc["input_ids"]
            logits = self.model(**enc).logits[0]
            logp = torch.log_softmax(logits, dim=-1)
            # score the full rendered sentence: every token given its prefix
            total = sum(
                logp[t - 1, input_ids[0, t]].item() for t in range(1, input_ids.shape[1])
            )
            scores.append(total / len(ids) if self.config.length_normalize else total)
        return scores

    # -- free generation ---------------------------------------------------------------

    def _free_generation(self, prompt: str) -> str | None:
        with torch.no_grad():
            if self.config.family == "masked":
                rows = self._mask_logprobs(prompt, 1)
                if rows is None:
                    return None
                logits = rows[0].clone()
                logits[self.tokenizer.all_special_ids] = float("-inf")
                return self.tokenizer.decode([int(logits.argmax())]).strip()
            if self.config.family == "seq2seq":
                source = prompt.replace(self.config.mask_marker, self.config.sentinel, 1)
                enc = self._encode(source)
                out = self.model.generate(
                    input_ids=enc["input_ids"], max_new_tokens=3, do_sample=False
                )
                text = self.tokenizer.decode(out[0], skip_special_tokens=True).strip()
                return text.split()[0] if text.split() else None
            # causal: only meaningful when the answer slot ends the sentence
            marker = self.config.mask_marker
            if marker not in prompt:
                return None
            head, tail = prompt.split(marker, 1)
            if tail.strip(" .") != "":
                return None
            enc = self.tokenizer(
                head.rstrip(), return_tensors="pt", add_special_tokens=False,
                truncation=True, max_length=self.config.max_length,
            ).to(self.config.device)
            if enc["input_ids"].shape[1] == 0:
                return None
            out = self.model.generate(
                input_ids=enc["input_ids"],
                max_new_tokens=2,
                do_sample=False,
                pad_token_id=self.tokenizer.pad_token_id or 0,
            )
            cont = out[0, enc["input_ids"].shape[1] :]
            text = self.tokenizer.decode(cont, skip_special_tokens=True).strip()
            return text.split()[0] if text.split() else None

    # -- query embedding ------------------------------------------------------------------

    def _embed(self, prompt: str) -> list[float]:
        enc = self._encode(prompt)
        with torch.no_grad():
            if self.config.family == "seq2seq":
                hidden = self.model.get_encoder()(**enc).last_hidden_state[0]
            else:
                hidden = self.model(**enc, output_hidden_states=True).hidden_states[-1][0]
        return [round(v, 6) for v in hidden.mean(dim=0).tolist()]
