"""Noise-sweep orchestration: synthesize -> train -> evaluate on clean val.

Every cell of the (kind x level x toggles x seed) grid is one row in an
append-only JSONL results file, written atomically so a killed sweep can
resume without recomputing finished cells. Evaluation is structurally
train-noisy / test-clean: only the clean validation dataset ever reaches
the evaluator.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dataset import DetDataset
from .detector import DetectorConfig
from .evaluate import evaluate_model
from .noise import NoiseSpec, inject
from .scenes import SceneConfig, build_dataset
from .train import train

logger = logging.getLogger(__name__)

VAL_INDEX_OFFSET = 1_000_000  # val scenes never overlap train scene indices


@dataclass(frozen=True)
class SweepSpec:
    kinds: tuple[str, ...] = ("missing", "extra", "class_shift", "box")
    levels: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4)
    toggle_sets: tuple[dict, ...] = (
        {"use_clc": False, "use_tlr": False, "use_rbr": False},
    )
    seeds: tuple[int, ...] = (0, 1, 2)
    n_train: int = 300
    n_val: int = 100
    scene: SceneConfig = field(default_factory=SceneConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)


def cell_key(kind: str, level: float, toggles: dict, seed: int) -> str:
    tg = "".join(
        name[4] for name in ("use_clc", "use_tlr", "use_rbr") if toggles.get(name)
    ) or "none"
    return f"{kind}:{level:.2f}:{tg}:{seed}"


def _load_done(results_path: Path) -> dict[str, dict]:
    done = {}
    if results_path.exists():
        for line in results_path.read_text().splitlines():
            if line.strip():
                row = json.loads(line)
                done[row["key"]] = row
    return done


def _append_row(results_path: Path, row: dict) -> None:
    # atomic append: write the full file to a temp and swap
    existing = results_path.read_text() if results_path.exists() else ""
    fd, tmp = tempfile.mkstemp(dir=results_path.parent, suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        f.write(existing + json.dumps(row) + "\n")
    os.replace(tmp, results_path)


def run_cell(
    clean_train: DetDataset,
    clean_val: DetDataset,
    kind: str,
    level: float,
    toggles: dict,
    seed: int,
    scene: SceneConfig,
    detector: DetectorConfig,
) -> dict:
    """One sweep cell; returns the metric row."""
    if level > 0 and kind != "none":
        if kind == "mixed":
            spec = NoiseSpec(kind="mixed", level_a=level, seed=seed,
                             mixed_components=(("class_shift", level), ("box", level)))
        else:
            spec = NoiseSpec(kind=kind, level_a=level, seed=seed)
        noisy_train, _ = inject(clean_train, spec)
    else:
        noisy_train = clean_train
    cfg = replace(detector, seed=seed, **toggles)
    result = train(noisy_train, scene, cfg)
    ev = evaluate_model(result.model, clean_val, scene, grid=result.grid)
    return {"metrics": ev.to_json_dict(), "train_metrics": result.metrics[-1]}


def run_sweep(spec: SweepSpec, out_dir) -> tuple[list[dict], int]:
    """Run (or resume) the full grid; returns (rows, n_failed)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.jsonl"
    done = _load_done(results_path)

    clean_train = build_dataset(spec.scene, spec.n_train)
    clean_val = build_dataset(spec.scene, spec.n_val, first_index=VAL_INDEX_OFFSET)

    rows = []
    n_failed = 0
    for kind in spec.kinds:
        levels = spec.levels if kind != "none" else (0.0,)
        for level in levels:
            for toggles in spec.toggle_sets:
                for seed in spec.seeds:
                    key = cell_key(kind, level, toggles, seed)
                    if key in done:
                        rows.append(done[key])
                        continue
                    row = {"key": key, "kind": kind, "level": level,
                           "toggles": toggles, "seed": seed}
                    try:
                        row.update(run_cell(
                            clean_train, clean_val, kind, level, toggles, seed,
                            spec.scene, spec.detector,
                        ))
                        row["status"] = "ok"
                    except Exception as e:  # cell failure must not kill the sweep
                        logger.exception("sweep cell %s failed", key)
                        row["status"] = "failed"
                        row["error"] = repr(e)
                        n_failed += 1
                    _append_row(results_path, row)
                    rows.append(row)
    return rows, n_failed


def write_csv(rows: list[dict], path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["key", "kind", "level", "toggles", "seed", "status", "mAP", "AP50", "AP75"])
        for r in rows:
            m = r.get("metrics", {})
            writer.writerow([
                r["key"], r["kind"], r["level"], json.dumps(r["toggles"]), r["seed"],
                r["status"], m.get("mAP", ""), m.get("AP50", ""), m.get("AP75", ""),
            ])
