"""Cross-modal token sieve for joint audio-visual streams.

Subpackages: the float64 tape core (:mod:`avsieve.tensor`), multi-axis rotary
positions (:mod:`avsieve.rope`), interleaved stream and scene generation
(:mod:`avsieve.stream`), the sieve and its baselines (:mod:`avsieve.sieve`),
the causal decoder (:mod:`avsieve.decoder`), and the training/eval/benchmark
harness (:mod:`avsieve.harness`).
"""

__version__ = "0.1.0"
