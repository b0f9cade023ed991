"""Analysis emitters: CSV data plus SVG figures.

Kinds: ``rope_curves`` (kernel decay per frequency band), ``allocation_hist``
(per-modality budget shares binned by density contrast), and
``selection_map`` (kept/dropped flags on each video frame's grid).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..rope import FrequencySchedule, relative_kernel_curve
from ..stream import VIDEO
from . import svg

HIGH_BAND_SIZE = 18
LOW_BAND_SIZE = 10


def write_csv(path, fieldnames, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


def emit_rope_curves(schedule: FrequencySchedule, delta_max: int, out_dir) -> list[Path]:
    n = schedule.n_freqs
    high = range(min(HIGH_BAND_SIZE, n))
    low = range(max(0, n - LOW_BAND_SIZE), n)
    g_high = relative_kernel_curve(high, schedule, delta_max)
    g_low = relative_kernel_curve(low, schedule, delta_max)
    g_full = relative_kernel_curve(range(n), schedule, delta_max)
    rows = [{"delta": d, "g_high_band": g_high[d], "g_low_band": g_low[d],
             "g_full": g_full[d]} for d in range(delta_max + 1)]
    out = Path(out_dir)
    csv_path = write_csv(out / "rope_curves.csv",
                         ["delta", "g_high_band", "g_low_band", "g_full"], rows)
    deltas = list(range(delta_max + 1))
    svg_path = out / "rope_curves.svg"
    svg.line_chart(svg_path, {
        "high band": (deltas, list(g_high)),
        "low band": (deltas, list(g_low)),
        "full": (deltas, list(g_full)),
    }, "relative distance", "kernel g")
    return [csv_path, svg_path]


def emit_allocation_hist(allocations: list[dict], out_dir) -> list[Path]:
    """Bin scenes by video-minus-audio density contrast; report budget shares."""
    out = Path(out_dir)
    scene_rows = [{k: alloc[k] for k in ("density_video", "density_audio",
                                         "n_video_kept", "n_audio_kept", "k",
                                         "video_share")} for alloc in allocations]
    scenes_path = write_csv(out / "allocation_scenes.csv", list(scene_rows[0]), scene_rows)

    edges = np.linspace(-1.0, 1.0, 9)
    contrasts = np.array([a["density_video"] - a["density_audio"] for a in allocations])
    shares = np.array([a["video_share"] for a in allocations])
    hist_rows, labels, values = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (contrasts >= lo) & (contrasts < hi if hi < 1.0 else contrasts <= hi)
        row = {"contrast_lo": round(lo, 3), "contrast_hi": round(hi, 3),
               "n_scenes": int(mask.sum()),
               "mean_video_share": round(float(shares[mask].mean()), 6) if mask.any() else ""}
        hist_rows.append(row)
        if mask.any():
            labels.append(f"{lo:.2f}..{hi:.2f}")
            values.append(float(shares[mask].mean()))
    hist_path = write_csv(out / "allocation_hist.csv",
                          ["contrast_lo", "contrast_hi", "n_scenes", "mean_video_share"],
                          hist_rows)
    svg_path = out / "allocation_hist.svg"
    svg.bar_chart(svg_path, labels, values, "density contrast (video - audio)",
                  "mean video budget share")
    return [scenes_path, hist_path, svg_path]


def emit_selection_map(stream, selection, out_dir) -> list[Path]:
    """Per-frame kept/dropped grids for the video tokens of one scene."""
    out = Path(out_dir)
    gh, gw = stream.frame_grid
    kept_pool = set(int(i) for i in selection.selected)
    rows = []
    frames: dict[int, list[list[int]]] = {}
    pool = 0
    for tok in stream.tokens:
        if tok.modality == "text":
            continue
        if tok.modality == VIDEO:
            frame = tok.mod_index // (gh * gw)
            kept = int(pool in kept_pool)
            rows.append({"frame": frame, "h": tok.pos.h, "w": tok.pos.w, "kept": kept})
            frames.setdefault(frame, [[0] * gw for _ in range(gh)])
            frames[frame][tok.pos.h][tok.pos.w] = kept
        pool += 1
    csv_path = write_csv(out / "selection_map.csv", ["frame", "h", "w", "kept"], rows)
    ordered = sorted(frames)
    svg_path = out / "selection_map.svg"
    svg.grid_chart(svg_path, [frames[f] for f in ordered],
                   [f"frame {f}" for f in ordered])
    return [csv_path, svg_path]


def emit_analysis(kind: str, inputs: dict, out_dir) -> list[Path]:
    if kind == "rope_curves":
        return emit_rope_curves(inputs["schedule"], inputs.get("delta_max", 500), out_dir)
    if kind == "allocation_hist":
        return emit_allocation_hist(inputs["allocations"], out_dir)
    if kind == "selection_map":
        return emit_selection_map(inputs["stream"], inputs["selection"], out_dir)
    raise ValueError(f"emit_analysis: unknown kind {kind!r}")
