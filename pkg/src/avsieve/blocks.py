"""Pre-norm transformer blocks shared by the sieve encoder and the decoder.

Each block is multi-head attention (rotary positions applied to queries and
keys) followed by a gelu feed-forward, both with residual connections. The
attention mask decides the variant: all-ones bidirectional, intra-modal
bidirectional, or causal.
"""

from __future__ import annotations

import numpy as np

from .rope import RopeConfig, position_angles
from .tensor import Node, Tape

FFN_MULT = 4


def leaf_params(tape: Tape, params: dict[str, np.ndarray]) -> dict[str, Node]:
    """Register every parameter array as a leaf on this tape."""
    return {name: tape.leaf(arr, name=name) for name, arr in params.items()}


def init_block_params(rng: np.random.Generator, prefix: str, width: int) -> dict[str, np.ndarray]:
    hidden = FFN_MULT * width
    p = {
        f"{prefix}ln1_g": np.ones(width),
        f"{prefix}ln1_b": np.zeros(width),
        f"{prefix}ln2_g": np.ones(width),
        f"{prefix}ln2_b": np.zeros(width),
        f"{prefix}w1": rng.normal(0.0, width ** -0.5, (width, hidden)),
        f"{prefix}b1": np.zeros(hidden),
        f"{prefix}w2": rng.normal(0.0, hidden ** -0.5, (hidden, width)),
        f"{prefix}b2": np.zeros(width),
    }
    for name in ("wq", "wk", "wv", "wo"):
        p[f"{prefix}{name}"] = rng.normal(0.0, width ** -0.5, (width, width))
    return p


def rope_angle_matrix(positions: np.ndarray, rope: RopeConfig, n_heads: int) -> np.ndarray:
    """Per-row rotation angles tiled across heads: (L, width/2)."""
    head_angles = position_angles(positions, rope.schedule, rope.partition)
    return np.tile(head_angles, (1, n_heads))


def block_forward(tape: Tape, x: Node, nodes: dict[str, Node], prefix: str,
                  n_heads: int, angles: np.ndarray, allowed: np.ndarray | None) -> Node:
    h = tape.layer_norm(x, nodes[f"{prefix}ln1_g"], nodes[f"{prefix}ln1_b"])
    q = tape.rotate_pairs(tape.matmul(h, nodes[f"{prefix}wq"]), angles)
    k = tape.rotate_pairs(tape.matmul(h, nodes[f"{prefix}wk"]), angles)
    v = tape.matmul(h, nodes[f"{prefix}wv"])
    att = tape.attention(q, k, v, n_heads, allowed=allowed)
    x = tape.add(x, tape.matmul(att, nodes[f"{prefix}wo"]))
    h2 = tape.layer_norm(x, nodes[f"{prefix}ln2_g"], nodes[f"{prefix}ln2_b"])
    f = tape.gelu(tape.affine(h2, nodes[f"{prefix}w1"], nodes[f"{prefix}b1"]))
    return tape.add(x, tape.affine(f, nodes[f"{prefix}w2"], nodes[f"{prefix}b2"]))


def stack_forward(tape: Tape, x: Node, nodes: dict[str, Node], prefix: str,
                  n_layers: int, n_heads: int, positions: np.ndarray,
                  rope: RopeConfig, allowed: np.ndarray | None) -> Node:
    if n_layers == 0:
        return x
    angles = rope_angle_matrix(positions, rope, n_heads)
    for i in range(n_layers):
        x = block_forward(tape, x, nodes, f"{prefix}layer{i}/", n_heads, angles, allowed)
    return x
