"""Efficiency benchmark: analytic FLOPs, wall-clock medians, peak live values.

The FLOP model counts matmul work: attention costs 2*L^2*D for scores plus
2*L^2*D for value mixing per layer; projections and the feed-forward use
standard dense counts. Encoder FLOPs depend only on the full stream length,
so they are constant across budgets while the decoder shrinks quadratically.

Wall-clock numbers are medians over >= 20 timed trials after 3 warm-ups with
the pass split into encoder / selection / decoder phases; the total is the
sum of the component medians. Peak memory is the live-value count from the
tensor core on one metered pass.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from ..decoder import DecoderConfig
from ..sieve import SieveConfig, budget_k
from ..stream import assign_positions
from ..tensor import METER, Tape
from .pipeline import forward_scene, init_model_params

BENCH_TASK = "salient_recall"
FFN_MULT = 4


@dataclass(frozen=True)
class BenchRecord:
    budget_p: float
    lengths: tuple[int, int, int, int]       # (L_v, L_a, L_t, k)
    flops: tuple[int, int, int, int]         # encoder, selection, decoder, total
    wall_ms: tuple[float, float, float, float]
    peak_values: int


def layer_flops(length: int, width: int) -> int:
    attention = 4 * length * length * width
    dense = 2 * length * width * width * (3 + 1 + FFN_MULT + FFN_MULT)
    return attention + dense


def scorer_flops(n_av: int, width: int, hidden: int) -> int:
    return 2 * n_av * width * hidden + 2 * n_av * hidden * 1


def decoder_attention_flops(dec_cfg: DecoderConfig, length: int) -> int:
    return dec_cfg.m_layers * 4 * length * length * dec_cfg.model_width


def analytic_flops(sieve_cfg: SieveConfig, dec_cfg: DecoderConfig,
                   lengths: tuple[int, int, int], p: float) -> tuple[int, int, int, int]:
    l_v, l_a, l_t = lengths
    full = l_v + l_a + l_t
    k = budget_k(p, l_v + l_a)
    enc = sieve_cfg.n_layers * layer_flops(full, sieve_cfg.model_width)
    sel = scorer_flops(l_v + l_a, sieve_cfg.model_width, sieve_cfg.hidden)
    dec = dec_cfg.m_layers * layer_flops(k + l_t, dec_cfg.model_width)
    return (enc, sel, dec, enc + sel + dec)


def _pick_grid(l_v: int) -> tuple[int, int]:
    for grid in ((8, 8), (4, 4), (2, 2), (1, 1)):
        if l_v % (grid[0] * grid[1]) == 0:
            return grid
    return (1, 1)


def bench_stream(lengths: tuple[int, int, int], width: int, seed: int):
    """Random-content stream with the requested (L_v, L_a, L_t) shape."""
    l_v, l_a, l_t = lengths
    grid = _pick_grid(l_v)
    frames = l_v // (grid[0] * grid[1])
    duration = l_a / 25.0
    fps = frames / duration
    stream = assign_positions(duration, fps, grid, n_text=l_t)
    if stream.counts != (l_v, l_a, l_t):
        raise ValueError(f"bench_stream: got counts {stream.counts}, wanted {lengths}")
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(l_v + l_a, width))
    row = 0
    for tok in stream.tokens:
        if tok.modality != "text":
            tok.embedding = emb[row]
            row += 1
    return stream


def bench(sieve_cfg: SieveConfig, dec_cfg: DecoderConfig,
          lengths: tuple[int, int, int], budgets, trials: int = 20,
          warmup: int = 3, seed: int = 0) -> list[BenchRecord]:
    """One BenchRecord per budget; the sieve runs at every budget (p=1.0 keeps
    everything, giving the uncompressed reference with identical encoder work)."""
    l_v, l_a, l_t = lengths
    if min(l_v, l_a) < 1:
        raise ValueError("bench: lengths must be at least 1")
    stream = bench_stream(lengths, sieve_cfg.model_width, seed)
    params = init_model_params(sieve_cfg, dec_cfg, [BENCH_TASK], l_t, seed=seed)

    records = []
    for p in budgets:
        cfg = replace(sieve_cfg, budget_p=float(p))

        def one_pass(timers=None):
            tape = Tape()
            return forward_scene(tape, stream, BENCH_TASK, 0, cfg, dec_cfg, params,
                                 training=False, timers=timers)

        for _ in range(warmup):
            one_pass()
        phases = {"encoder": [], "selection": [], "decoder": []}
        for _ in range(trials):
            timers: dict = {}
            one_pass(timers)
            for key in phases:
                phases[key].append(timers[key] * 1e3)
        medians = {key: statistics.median(vals) for key, vals in phases.items()}
        wall = (medians["encoder"], medians["selection"], medians["decoder"],
                medians["encoder"] + medians["selection"] + medians["decoder"])

        with METER.measure() as meter:
            result = one_pass()
            peak = meter.peak
            del result

        k = budget_k(float(p), l_v + l_a)
        records.append(BenchRecord(float(p), (l_v, l_a, l_t, k),
                                   analytic_flops(cfg, dec_cfg, lengths, float(p)),
                                   wall, peak))
    return records


def bench_csv_rows(records: list[BenchRecord]) -> list[dict]:
    rows = []
    for r in records:
        rows.append({
            "budget_p": r.budget_p,
            "L_v": r.lengths[0], "L_a": r.lengths[1], "L_t": r.lengths[2], "k": r.lengths[3],
            "flops_encoder": r.flops[0], "flops_selection": r.flops[1],
            "flops_decoder": r.flops[2], "flops_total": r.flops[3],
            "wall_ms_encoder": round(r.wall_ms[0], 3),
            "wall_ms_selection": round(r.wall_ms[1], 3),
            "wall_ms_decoder": round(r.wall_ms[2], 3),
            "wall_ms_total": round(r.wall_ms[3], 3),
            "peak_values": r.peak_values,
        })
    return rows
