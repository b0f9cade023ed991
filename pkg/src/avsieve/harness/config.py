"""Plain-text key=value run configuration, manifests, and config hashing."""

from __future__ import annotations

import hashlib
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..decoder import DecoderConfig
from ..rope import SYNC, VANILLA, rope_config
from ..sieve import MASK_CROSS, POOL_COMBINED, SieveConfig
from ..stream import DEFAULT_TEXT_TOKENS, TASKS
from .train import RunConfig

DEFAULTS = {
    "tasks": "salient_recall",
    "corpus": "",
    "width": "128",
    "head_dim": "32",
    "n_heads": "4",
    "encoder_layers": "4",
    "decoder_layers": "8",
    "scorer_hidden": "",
    "budget": "0.2",
    "mask_mode": MASK_CROSS,
    "pool_mode": POOL_COMBINED,
    "rope_mode": SYNC,
    "rope_splits": "",
    "theta_base": "10000",
    "steps": "2000",
    "batch": "16",
    "step_size": "3e-4",
    "seed": "0",
    "eval_interval": "50",
    "n_val": "32",
    "n_text": str(DEFAULT_TEXT_TOKENS),
    "out": "",
}


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def load_config(path=None, overrides: dict | None = None) -> dict[str, str]:
    resolved = dict(DEFAULTS)
    if path is not None:
        resolved.update(parse_config_text(Path(path).read_text()))
    for key, value in (overrides or {}).items():
        if value is not None:
            resolved[key] = str(value)
    return resolved


def parse_splits(text: str) -> list[int] | None:
    text = text.strip()
    if not text:
        return None
    return [int(part) for part in text.split(",")]


def build_model_configs(cfg: dict[str, str]) -> tuple[SieveConfig, DecoderConfig]:
    width = int(cfg["width"])
    head_dim = int(cfg["head_dim"])
    n_heads = int(cfg["n_heads"])
    splits = parse_splits(cfg["rope_splits"])
    rope = rope_config(head_dim, mode=cfg["rope_mode"], splits=splits,
                       theta_base=float(cfg["theta_base"]))
    scorer_hidden = int(cfg["scorer_hidden"]) if cfg["scorer_hidden"] else None
    sieve = SieveConfig(
        n_layers=int(cfg["encoder_layers"]), n_heads=n_heads, head_dim=head_dim,
        model_width=width, scorer_hidden=scorer_hidden, budget_p=float(cfg["budget"]),
        mask_mode=cfg["mask_mode"], pool_mode=cfg["pool_mode"], rope=rope,
    )
    tasks = tuple(t.strip() for t in cfg["tasks"].split(",") if t.strip())
    unknown = [t for t in tasks if t not in TASKS]
    if unknown:
        raise ValueError(f"unknown tasks {unknown}; available: {list(TASKS)}")
    decoder = DecoderConfig(
        m_layers=int(cfg["decoder_layers"]), n_heads=n_heads, head_dim=head_dim,
        model_width=width, rope=rope, task_heads=tuple((t, 2) for t in tasks),
    )
    return sieve, decoder


def build_run_config(cfg: dict[str, str]) -> RunConfig:
    sieve, decoder = build_model_configs(cfg)
    corpus_paths = tuple(p.strip() for p in cfg["corpus"].split(",") if p.strip())
    return RunConfig(
        sieve=sieve, decoder=decoder, corpus_paths=corpus_paths,
        steps=int(cfg["steps"]), batch_size=int(cfg["batch"]),
        step_size=float(cfg["step_size"]), seed=int(cfg["seed"]),
        eval_interval=int(cfg["eval_interval"]), n_val=int(cfg["n_val"]),
        out_dir=cfg["out"] or None,
    )


def config_hash(cfg: dict[str, str]) -> str:
    canon = "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out_dir, cfg: dict[str, str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"config_hash = {config_hash(cfg)}",
        f"seed = {cfg['seed']}",
        f"avsieve_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"python_version = {platform.python_version()}",
        "",
    ]
    lines += [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path
