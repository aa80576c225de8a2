"""Command-line entry points: synthesize, train, eval, sweep, plot.

Exit codes: 0 ok, 1 error, 2 partial sweep (some cells failed).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .dataset import load_dataset, save_dataset
from .detector import DetectorConfig
from .evaluate import evaluate_model
from .noise import NoiseSpec, inject, noise_report
from .scenes import SceneConfig
from .sweep import SweepSpec, run_sweep, write_csv
from .train import load_checkpoint, save_checkpoint, train


def _scene_config(path: str | None) -> SceneConfig:
    if path is None:
        return SceneConfig()
    d = json.loads(Path(path).read_text())
    for key in ("objects_per_image", "size_range", "class_frequency"):
        if key in d and d[key] is not None:
            d[key] = tuple(d[key])
    return SceneConfig(**d)


def _det_config(path: str | None, **overrides) -> DetectorConfig:
    d = {}
    if path is not None:
        d = json.loads(Path(path).read_text())
        for key in ("strides", "lr_decay_epochs"):
            if key in d:
                d[key] = tuple(d[key])
    d.update(overrides)
    return DetectorConfig(**d)


def cmd_synthesize(args) -> int:
    ds = load_dataset(args.infile)
    if args.kind == "mixed":
        components = tuple((k, args.level) for k in ("class_shift", "box"))
        spec = NoiseSpec(kind="mixed", level_a=args.level, seed=args.seed,
                         mixed_components=components)
    else:
        spec = NoiseSpec(kind=args.kind, level_a=args.level, seed=args.seed)
    noisy, _ = inject(ds, spec)
    save_dataset(noisy, args.outfile)
    report = noise_report(ds, noisy)
    print(report.table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json_dict(), indent=2))
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    scene = _scene_config(args.scene_config)
    cfg = _det_config(args.det_config, num_classes=len(ds.categories),
                      image_size=scene.image_size, use_clc=args.clc,
                      use_tlr=args.tlr, use_rbr=args.rbr, seed=args.seed)
    result = train(ds, scene, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result, cfg, out / "model.pt")
    with open(out / "metrics.jsonl", "w") as f:
        for row in result.metrics:
            f.write(json.dumps(row) + "\n")
    result.dcm.save(out / "dcm.json")
    result.registry.save(out / "registry.json")
    result.rbr.save(out / "rbr_targets.json")
    print(f"trained {cfg.epochs} epochs; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    val = load_dataset(args.data)
    scene = _scene_config(args.scene_config)
    result = evaluate_model(model, val, scene)
    print(json.dumps(result.to_json_dict(), indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_json_dict(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    if args.spec:
        d = json.loads(Path(args.spec).read_text())
        scene = SceneConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in d.pop("scene", {}).items()})
        det = _det_config(None, **{k: tuple(v) if isinstance(v, list) else v
                                   for k, v in d.pop("detector", {}).items()})
        for key in ("kinds", "levels", "seeds"):
            if key in d:
                d[key] = tuple(d[key])
        if "toggle_sets" in d:
            d["toggle_sets"] = tuple(d["toggle_sets"])
        spec = SweepSpec(scene=scene, detector=det, **d)
    else:
        spec = SweepSpec()
    rows, n_failed = run_sweep(spec, args.out)
    write_csv(rows, Path(args.out) / "results.csv")
    print(f"{len(rows)} cells, {n_failed} failed; results in {args.out}")
    return 2 if n_failed else 0


def cmd_plot(args) -> int:
    rows = [json.loads(line) for line in Path(args.results).read_text().splitlines() if line.strip()]
    from .plots import plot_report

    written = plot_report(rows, args.out)
    for p in written:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisydet")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="inject label noise into a dataset")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--out", dest="outfile", required=True)
    s.add_argument("--kind", required=True,
                   choices=["missing", "extra", "class_shift", "box", "mixed"])
    s.add_argument("--level", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", help="also write the noise report as JSON")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("train", help="train the detector on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--scene-config")
    s.add_argument("--det-config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--clc", action="store_true")
    s.add_argument("--tlr", action="store_true")
    s.add_argument("--rbr", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on clean annotations")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--scene-config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="run a noise/ablation sweep grid")
    s.add_argument("--spec", help="JSON sweep spec; defaults used if omitted")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("plot", help="emit figures from sweep results")
    s.add_argument("--results", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # CLI boundary: report, don't traceback
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
