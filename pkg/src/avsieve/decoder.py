"""Causal decoder over the (possibly compressed) stream, plus task heads.

Retained tokens keep their original position triples, so the rotary encoding
sees the true temporal gaps of the sparse sequence. Classification heads read
the final text-token feature and train with softmax cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import init_block_params, stack_forward
from .rope import RopeConfig, rope_config
from .tensor import Node, Tape


@dataclass(frozen=True)
class DecoderConfig:
    m_layers: int = 8
    n_heads: int = 4
    head_dim: int = 32
    model_width: int = 128
    rope: RopeConfig = field(default_factory=lambda: rope_config(32))
    task_heads: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.n_heads * self.head_dim != self.model_width:
            raise ValueError(
                f"DecoderConfig: n_heads*head_dim {self.n_heads}*{self.head_dim} "
                f"!= model_width {self.model_width}"
            )
        if self.rope.schedule.d != self.head_dim:
            raise ValueError("DecoderConfig: rope schedule dimension must match head_dim")

    @property
    def heads(self) -> dict[str, int]:
        return dict(self.task_heads)


def init_decoder_params(config: DecoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for i in range(config.m_layers):
        params.update(init_block_params(rng, f"decoder/layer{i}/", config.model_width))
    for task, n_classes in config.task_heads:
        params[f"head/{task}/w"] = rng.normal(0.0, config.model_width ** -0.5,
                                              (config.model_width, n_classes))
        params[f"head/{task}/b"] = np.zeros(n_classes)
    return params


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def decoder_forward(tape: Tape, x: Node, positions: np.ndarray,
                    config: DecoderConfig, nodes: dict[str, Node]) -> Node:
    """Strictly causal pre-norm blocks; m_layers=0 is the identity."""
    if x.value.shape[1] != config.model_width:
        raise ValueError(
            f"decoder_forward: input width {x.value.shape[1]} != model width {config.model_width}"
        )
    allowed = causal_mask(x.value.shape[0]) if config.m_layers else None
    return stack_forward(tape, x, nodes, "decoder/", config.m_layers, config.n_heads,
                         positions, config.rope, allowed)


def task_loss(tape: Tape, features: Node, task: str, label: int,
              nodes: dict[str, Node]) -> tuple[Node, int]:
    """Cross-entropy of the final text-position readout; returns (loss, argmax)."""
    w_name, b_name = f"head/{task}/w", f"head/{task}/b"
    if w_name not in nodes:
        raise ValueError(f"task_loss: unknown task {task!r}")
    last = tape.gather(features, [features.value.shape[0] - 1])
    logits = tape.affine(last, nodes[w_name], nodes[b_name])
    loss = tape.cross_entropy(logits, int(label))
    prediction = int(np.argmax(logits.value))
    return loss, prediction
