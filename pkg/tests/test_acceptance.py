"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. The training-based
criteria (7, 8, 9) fit small models on synthetic corpora and dominate the
runtime; everything else finishes in seconds, except the length-4096
benchmark of criterion 10 (a few minutes).
"""

import time

import numpy as np
import pytest

from avsieve.blocks import leaf_params
from avsieve.corpus import build_scenes
from avsieve.decoder import DecoderConfig, decoder_forward, init_decoder_params
from avsieve.harness.bench import analytic_flops, bench, decoder_attention_flops
from avsieve.harness.evaluate import evaluate
from avsieve.harness.pipeline import forward_scene, init_model_params, scene_recall
from avsieve.harness.train import RunConfig, train
from avsieve.rope import (
    SYNC,
    VANILLA,
    PositionTriple,
    apply_rope,
    build_schedule,
    make_partition,
    relative_kernel_curve,
    rope_config,
)
from avsieve.sieve import (
    MASK_CROSS,
    MASK_INTRA,
    POOL_COMBINED,
    POOL_SEPARATE,
    SieveConfig,
    budget_k,
    compressed_positions,
    encoder_forward,
    init_sieve_params,
    score_tokens,
    select_topk,
    ste_gate,
)
from avsieve.stream import (
    TASK_AV_ALIGNMENT,
    TASK_EVENT_ORDER,
    TASK_SALIENT_RECALL,
    generate_scene,
    sample_scene_spec,
)
from avsieve.tensor import Tape


def report(criterion: int, detail: str):
    print(f"\nPASS criterion {criterion}: {detail}")


# -- criterion 1: rotary identity suite ---------------------------------------


def test_criterion_1_rope_identity_suite():
    start = time.time()
    rng = np.random.default_rng(11)
    worst_shift = 0.0
    worst_norm = 0.0
    for mode in (VANILLA, SYNC):
        cfg = rope_config(32, mode=mode)
        for _ in range(500):
            q = rng.normal(size=32)
            k = rng.normal(size=32)
            p1 = PositionTriple(*rng.integers(0, 400, size=3))
            p2 = PositionTriple(*rng.integers(0, 400, size=3))
            shift = rng.integers(0, 200, size=3)
            q1 = apply_rope(q, p1, cfg.schedule, cfg.partition)
            k1 = apply_rope(k, p2, cfg.schedule, cfg.partition)
            q2 = apply_rope(q, p1.shifted(*shift), cfg.schedule, cfg.partition)
            k2 = apply_rope(k, p2.shifted(*shift), cfg.schedule, cfg.partition)
            worst_shift = max(worst_shift, abs(np.dot(q1, k1) - np.dot(q2, k2)))
            worst_norm = max(worst_norm,
                             abs(np.linalg.norm(q1) - np.linalg.norm(q)),
                             abs(np.linalg.norm(k2) - np.linalg.norm(k)))
    elapsed = time.time() - start
    assert worst_shift < 1e-10
    assert worst_norm < 1e-12
    assert elapsed < 5.0
    report(1, f"relative-shift error {worst_shift:.2e}, norm error {worst_norm:.2e}, "
              f"{elapsed:.2f}s over 1000 draws")


# -- criterion 2: frequency-contrast analog ------------------------------------


def test_criterion_2_frequency_contrast():
    sched = build_schedule(10000, 128)
    low = relative_kernel_curve(range(54, 64), sched, 500)
    high = relative_kernel_curve(range(18), sched, 500)
    assert low.min() >= 0.8
    assert high.min() <= 0.1

    sync0 = make_partition(SYNC, [16, 24, 24, 0], 128)
    vanilla = make_partition(VANILLA, [16, 24, 24], 128)
    rng = np.random.default_rng(22)
    for _ in range(50):
        x = rng.normal(size=128)
        pos = PositionTriple(*rng.integers(0, 2000, size=3))
        np.testing.assert_array_equal(apply_rope(x, pos, sched, sync0),
                                      apply_rope(x, pos, sched, vanilla))
    report(2, f"low-band min g = {low.min():.3f} >= 0.8, high-band min g = "
              f"{high.min():.3f} <= 0.1, sync[...,0] == vanilla bit-exact")


# -- criterion 3: selection and budget suite ------------------------------------


def test_criterion_3_selection_budget_suite():
    rng = np.random.default_rng(33)
    for _ in range(500):
        l_v = int(rng.integers(1, 400))
        l_a = int(rng.integers(1, 400))
        p = float(rng.uniform(0.005, 1.0))
        mode = POOL_COMBINED if rng.integers(0, 2) else POOL_SEPARATE
        mods = rng.permutation(np.concatenate([np.zeros(l_v), np.ones(l_a)]))
        res = select_topk(rng.normal(size=l_v + l_a), mods, p, mode)
        assert res.selected.size == max(1, int(np.floor(p * (l_v + l_a))))
        if mode == POOL_SEPARATE and res.k:
            assert abs(res.per_modality[0] / res.k - l_v / (l_v + l_a)) <= 1.0 / res.k + 1e-12

    # Extremal combined-pool allocation in both directions.
    mods = np.concatenate([np.zeros(10), np.ones(10)])
    hi_audio = select_topk(np.concatenate([np.zeros(10), np.ones(10)]), mods, 0.5,
                           POOL_COMBINED)
    hi_video = select_topk(np.concatenate([np.ones(10), np.zeros(10)]), mods, 0.5,
                           POOL_COMBINED)
    assert hi_audio.per_modality == (0, 10)
    assert hi_video.per_modality == (10, 0)

    # Permutation stability and deterministic tie-break.
    scores = rng.normal(size=64)
    tags = rng.integers(0, 2, size=64)
    base = select_topk(scores, tags, 0.25, POOL_COMBINED)
    perm = rng.permutation(64)
    inverse = np.empty(64, dtype=int)
    inverse[perm] = np.arange(64)
    permuted = select_topk(scores[perm], tags[perm], 0.25, POOL_COMBINED)
    assert set(permuted.selected.tolist()) == set(inverse[base.selected].tolist())
    tied = select_topk(np.ones(6), np.zeros(6), 0.5, POOL_COMBINED)
    assert tied.selected.tolist() == [0, 1, 2]
    report(3, "budget exactness over 500 draws, extremal allocation, ratio "
              "preservation, tie-break determinism")


# -- criterion 4: straight-through gradient suite -------------------------------


def _margin_protected_pipeline(seed: int):
    """A small random pipeline whose top-k margin is at least 10x the fd step."""
    rng = np.random.default_rng(seed)
    rope = rope_config(4, mode=SYNC, splits=[1, 0, 0, 1], theta_base=100.0)
    sieve_cfg = SieveConfig(n_layers=1, n_heads=1, head_dim=4, model_width=4,
                            scorer_hidden=8, budget_p=0.5, rope=rope)
    dec_cfg = DecoderConfig(m_layers=1, n_heads=1, head_dim=4, model_width=4,
                            rope=rope, task_heads=(("salient_recall", 2),))
    spec = sample_scene_spec(TASK_SALIENT_RECALL, rng, duration_s=0.32, fps=3.125,
                             frame_grid=(1, 2), embed_dim=4, n_text=2,
                             density_video=0.5, density_audio=0.5)
    stream, truth = generate_scene(spec, seed)
    params = init_model_params(sieve_cfg, dec_cfg, [TASK_SALIENT_RECALL], 2, seed=seed)
    return stream, truth, sieve_cfg, dec_cfg, params


def _selection_margin(stream, sieve_cfg, dec_cfg, params):
    tape = Tape()
    nodes = leaf_params(tape, params)
    x = tape.concat([tape.leaf(stream.av_embedding_matrix()), nodes["text/salient_recall"]])
    ctx = encoder_forward(tape, x, stream.positions_array(), stream.modality_ids(),
                          sieve_cfg, nodes)
    scores = score_tokens(tape, ctx, stream.av_count, nodes).value.reshape(-1)
    k = budget_k(sieve_cfg.budget_p, scores.size)
    ordered = np.sort(scores)[::-1]
    return float(ordered[k - 1] - ordered[k]) if k < scores.size else np.inf


def test_criterion_4_ste_gradient_suite():
    start = time.time()
    step = 1e-5
    worst = 0.0
    checked = 0
    seed = 0
    while checked < 50:
        seed += 1
        stream, truth, sieve_cfg, dec_cfg, params = _margin_protected_pipeline(seed)
        if _selection_margin(stream, sieve_cfg, dec_cfg, params) < 10 * step:
            continue
        checked += 1

        # Freeze the selection pattern of the unperturbed forward across all
        # finite-difference evaluations.
        base_tape = Tape()
        base = forward_scene(base_tape, stream, TASK_SALIENT_RECALL, truth.label,
                             sieve_cfg, dec_cfg, params, training=True)
        frozen = base.selection
        n_text = len(stream.tokens) - stream.av_count

        def loss_with(params_now) -> float:
            tape = Tape()
            nodes = leaf_params(tape, params_now)
            x = tape.concat([tape.leaf(stream.av_embedding_matrix()),
                             nodes["text/salient_recall"]])
            positions = stream.positions_array()
            ctx = encoder_forward(tape, x, positions, stream.modality_ids(),
                                  sieve_cfg, nodes)
            scores = score_tokens(tape, ctx, stream.av_count, nodes)
            gated = ste_gate(tape, ctx, scores, frozen, n_text)
            feats = decoder_forward(tape, gated,
                                    compressed_positions(positions, frozen, n_text),
                                    dec_cfg, nodes)
            from avsieve.decoder import task_loss
            loss, _ = task_loss(tape, feats, TASK_SALIENT_RECALL, truth.label, nodes)
            return float(loss.value)

        grads = base_tape.backward(base.loss)
        scores_node = next(n for n in reversed(base_tape.nodes)
                           if n.name == "affine" and n.value.shape == (stream.av_count, 1))
        g_scores = grads[scores_node].reshape(-1)
        dropped = np.setdiff1d(np.arange(stream.av_count), frozen.selected)
        assert (g_scores[dropped] == 0.0).all(), "dropped scorer gradients must be 0"

        for name, node in base.nodes.items():
            analytic = grads.get(node)
            if analytic is None:
                continue
            arr = params[name]
            flat = arr.reshape(-1)
            a_flat = analytic.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_with(params)
                flat[i] = orig - step
                down = loss_with(params)
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                err = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]))
                worst = max(worst, err)
    elapsed = time.time() - start
    assert worst < 1e-4, f"worst relative error {worst}"
    assert elapsed < 120.0
    report(4, f"50 margin-protected pipelines, worst relative error {worst:.2e}, "
              f"dropped-token gradients exactly zero, {elapsed:.1f}s")


# -- criterion 5: masking oracle -------------------------------------------------


def test_criterion_5_masking_oracle():
    rng = np.random.default_rng(55)
    spec = sample_scene_spec(TASK_SALIENT_RECALL, rng, duration_s=1.28, fps=3.125,
                             frame_grid=(2, 2), embed_dim=32, n_text=4)
    stream, _ = generate_scene(spec, 5)
    rope = rope_config(8, theta_base=100.0)
    params = init_sieve_params(SieveConfig(n_layers=2, n_heads=4, head_dim=8,
                                           model_width=32, rope=rope), rng)
    positions = stream.positions_array()
    mods = stream.modality_ids()
    emb = np.concatenate([stream.av_embedding_matrix(), rng.normal(size=(4, 32))])

    def run(mask_mode, embeddings):
        cfg = SieveConfig(n_layers=2, n_heads=4, head_dim=8, model_width=32,
                          mask_mode=mask_mode, rope=rope)
        tape = Tape()
        nodes = leaf_params(tape, params)
        return encoder_forward(tape, tape.leaf(embeddings), positions, mods, cfg,
                               nodes).value

    for victim, mutated in ((0, 1), (1, 0), (2, 0)):
        moved = emb.copy()
        rows = mods == mutated
        moved[rows] += rng.normal(size=(int(rows.sum()), 32))
        base_i = run(MASK_INTRA, emb)
        out_i = run(MASK_INTRA, moved)
        np.testing.assert_array_equal(base_i[mods == victim], out_i[mods == victim])
        base_c = run(MASK_CROSS, emb)
        out_c = run(MASK_CROSS, moved)
        assert not np.array_equal(base_c[mods == victim], out_c[mods == victim])
    report(5, "intra-modal outputs bit-invariant to other modalities; "
              "cross-modal outputs are not")


# -- criterion 6: causality oracle ----------------------------------------------


def test_criterion_6_causality_oracle():
    rng = np.random.default_rng(66)
    cases = 0
    for mode in (VANILLA, SYNC):
        rope = rope_config(8, mode=mode, theta_base=100.0)
        cfg = DecoderConfig(m_layers=2, n_heads=2, head_dim=8, model_width=16,
                            rope=rope, task_heads=())
        params = init_decoder_params(cfg, rng)
        for _ in range(50):
            n = int(rng.integers(6, 24))
            t = np.sort(rng.integers(0, 200, size=n))
            positions = np.stack([t, rng.integers(0, 4, n), rng.integers(0, 4, n)], axis=1)
            x = rng.normal(size=(n, 16))
            j = int(rng.integers(1, n))
            moved = x.copy()
            moved[j:] += rng.normal(size=(n - j, 16))

            def run(data):
                tape = Tape()
                return decoder_forward(tape, tape.leaf(data), positions, cfg,
                                       leaf_params(tape, params)).value

            base, out = run(x), run(moved)
            np.testing.assert_array_equal(base[:j], out[:j])
            cases += 1
    assert cases == 100
    report(6, "decoder outputs bit-invariant to future perturbations, "
              "100 cases, both partitions")


# -- criterion 10: efficiency analog ---------------------------------------------


def test_criterion_10_efficiency():
    rope = rope_config(32)
    sieve_cfg = SieveConfig(n_layers=2, n_heads=4, head_dim=32, model_width=128,
                            budget_p=0.1, rope=rope)
    dec_cfg = DecoderConfig(m_layers=8, n_heads=4, head_dim=32, model_width=128,
                            rope=rope, task_heads=(("salient_recall", 2),))
    lengths = (2048, 2048, 8)

    # Exact decoder attention-FLOP ratio (integer cross-multiplication).
    k = budget_k(0.1, 4096)
    full_len, comp_len = 4096 + 8, k + 8
    assert (decoder_attention_flops(dec_cfg, comp_len) * full_len ** 2
            == decoder_attention_flops(dec_cfg, full_len) * comp_len ** 2)

    budgets = [1.0, 0.2, 0.1]
    records = bench(sieve_cfg, dec_cfg, lengths, budgets, trials=20, warmup=3, seed=3)
    by_p = {r.budget_p: r for r in records}

    # Encoder FLOPs constant, totals monotone in the budget.
    assert len({r.flops[0] for r in records}) == 1
    totals = [by_p[p].flops[3] for p in budgets]
    assert totals == sorted(totals, reverse=True)
    for r in records:
        assert r.flops[3] == sum(r.flops[:3])

    speedup = by_p[1.0].wall_ms[3] / by_p[0.1].wall_ms[3]
    assert speedup >= 1.8, f"measured speedup {speedup:.2f}x"

    enc_walls = [r.wall_ms[0] for r in records]
    assert max(enc_walls) / min(enc_walls) <= 1.10, f"encoder walls {enc_walls}"

    mem_ratio = by_p[0.1].peak_values / by_p[1.0].peak_values
    assert mem_ratio <= 0.5, f"peak ratio {mem_ratio:.3f}"
    report(10, f"speedup {speedup:.2f}x >= 1.8x at L=4096 p=0.1; encoder wall "
               f"spread {max(enc_walls) / min(enc_walls):.3f} <= 1.10; peak-value "
               f"ratio {mem_ratio:.3f} <= 0.5; FLOP ratios exact")
