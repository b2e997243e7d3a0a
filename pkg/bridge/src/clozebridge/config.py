"""Bridge configuration: which model, which scoring recipe, which extras."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

FAMILIES = ("masked", "seq2seq", "causal")

UNREPRESENTABLE_SCORE = -1e9


@dataclass
class BridgeConfig:
    model_path: str
    family: str
    device: str = "cpu"
    mask_marker: str = "[MASK]"
    sentinel: str = "<extra_id_0>"
    length_normalize: bool = False
    passages_path: str | None = None
    passages_as_context: bool = False
    max_length: int = 64

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not Path(self.model_path).exists():
            raise ValueError(f"model path does not exist: {self.model_path}")

    @property
    def identity(self) -> str:
        name = Path(self.model_path).name
        extras = []
        if self.length_normalize:
            extras.append("lennorm")
        if self.passages_as_context:
            extras.append("ctx")
        suffix = "+" + ",".join(extras) if extras else ""
        return f"bridge:{self.family}:{name}{suffix}"
