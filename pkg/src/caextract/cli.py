"""Command-line interface: ``caextract <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from caextract import ca_objects, cnn, kernel_cluster, maca, metrics, pipeline, raster, synth
from caextract import shape_evolve as se


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_config_section(args) -> dict:
    if not args.config:
        return {}
    with open(args.config) as fh:
        return json.load(fh)


def _machine(args) -> maca.MacaMachine:
    if getattr(args, "machine", None):
        return maca.load_machine(args.machine)
    return maca.default_machine()


def cmd_synth(args):
    scene = synth.SCENES[args.kind](size=args.size, seed=args.seed, bands=args.bands,
                                    pixel_size=args.pixel_size)
    raster.save_mbr(_out(args, "scene.mbr"), scene.raster)
    raster.save_mask(_out(args, "reference.pgm"), scene.reference)
    print(f"wrote scene.mbr and reference.pgm to {args.out}")


def cmd_edges(args):
    r = raster.load_raster(args.input)
    template = cnn.load_template(args.template) if args.template else cnn.EDGE
    edges = cnn.detect_edges(r, template, threshold=args.threshold)
    raster.save_binary_mask(_out(args, "edges.pgm"), edges)
    print(f"{int(edges.sum())} edge pixels")


def cmd_cluster(args):
    r = raster.load_raster(args.input)
    feats = raster.window_features(r, args.window)
    labels, model = kernel_cluster.cluster_image(
        feats, args.k, M=args.ensemble, mu=args.mu, sample_size=args.sample_size, seed=args.seed)
    raster.save_mask(_out(args, "clusters.pgm"), labels)
    if not args.no_refine:
        params = kernel_cluster.SvrfParams(beta=args.beta, mu=args.mu, icm_iters=args.icm_iters)
        labels = kernel_cluster.svrf_refine(labels, feats, model.spectral, params,
                                            spatial_ensemble=model.spatial)
        raster.save_mask(_out(args, "refined.pgm"), labels)
    _print_json({"label_counts": np.bincount(labels.labels.ravel(), minlength=args.k).tolist()})


def cmd_grow(args):
    boundary = raster.load_mask(args.boundary, k=2).labels.astype(bool)
    grid = ca_objects.grow_regions(boundary, args.connectivity)
    raster.save_mask(_out(args, "regions.pgm"), raster.LabelGrid(grid.states.astype(np.int64), k=3))
    _print_json({"sweeps": grid.sweeps, "states": grid.counts()})


def cmd_extract(args):
    states = raster.load_mask(args.regions, k=3).labels
    grid = ca_objects.RegionGrid(states.astype(np.int8), 0)
    objects = ca_objects.extract_objects(grid, args.connectivity)
    records = [dict(o.to_record(args.pixel_size), area_km2=metrics.areal_extent(o, args.pixel_size))
               for o in objects]
    with open(_out(args, "objects.json"), "w") as fh:
        json.dump(records, fh, sort_keys=True)
    raster.save_binary_mask(_out(args, "objects.pgm"),
                            ca_objects.objects_mask(objects, states.shape))
    print(f"{len(objects)} objects")


def cmd_evolve(args):
    target = raster.load_mask(args.target, k=2).labels.astype(bool)
    seed_cfg = raster.load_mask(args.seed_config, k=2).labels.astype(bool)
    db = se.PatternDB(args.db) if args.db else None
    params = se.GaParams(population=args.pop, generations=args.gens, steps=args.steps,
                         seed=args.seed, db_guidance=not args.no_db_guidance)
    res = se.evolve_rule(seed_cfg, target, params, db)
    if db is not None:
        sig = se.shape_signature(target, _machine(args).n)
        db.store(se.PatternRecord(args.name, res.rule, seed_cfg, args.steps, sig, res.fitness))
    _print_json({"rule": str(res.rule), "fitness": res.fitness, "generations": res.generations})


def cmd_classify(args):
    machine = _machine(args)
    analysis = maca.analyze(machine)
    if os.path.exists(args.pattern):
        mask = raster.load_mask(args.pattern, k=2).labels.astype(bool)
        pattern = se.shape_signature(mask, machine.n)
    else:
        pattern = args.pattern
    cls, steps = maca.classify(machine, analysis, pattern, return_steps=True)
    _print_json({"pattern": pattern if isinstance(pattern, str) else str(pattern),
                 "class": cls, "steps": steps, "analysis": analysis.to_dict()})


def cmd_interpolate(args):
    mask = raster.load_mask(args.mask, k=2).labels.astype(bool)
    machine = _machine(args)
    db = se.PatternDB(args.db)
    info = se.interpolate_feature(mask, db, machine, maca.analyze(machine), args.max_steps,
                                  return_info=True)
    raster.save_binary_mask(_out(args, "interpolated.pgm"), info.mask)
    _print_json({"added": info.added, "steps": info.steps, "class": info.pattern_class,
                 "matched": info.match.record.name if info.match else None})


def cmd_metrics(args):
    ref = raster.load_mask(args.reference, k=args.k)
    pred = raster.load_mask(args.predicted, k=args.k)
    cm = metrics.confusion_from_masks(ref, pred, k=args.k, align=args.align)
    try:
        kap = metrics.kappa(cm)
    except metrics.UndefinedKappaError:
        kap = None
    _print_json({"kappa": kap, "overall_accuracy": metrics.overall_accuracy(cm),
                 "confusion": cm.to_list()})


def cmd_pipeline(args):
    data = _load_config_section(args)
    overrides = {"input": args.input, "reference": args.reference, "db": args.db}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.stages:
        data["stages"] = args.stages.split(",")
    if args.seed_given:
        data["seed"] = args.seed
    if args.out_given or "out" not in data:
        data["out"] = args.out
    cluster = data.setdefault("cluster", {})
    for key in ("k", "mu", "beta", "ensemble", "sample_size"):
        value = getattr(args, key)
        if value is not None:
            cluster[key] = value
    cfg = pipeline.PipelineConfig.from_dict(data)
    report = pipeline.run_pipeline(cfg)
    summary = {"objects": len(report.objects), "metrics": report.metrics,
               "report": os.path.join(cfg.out, "report.json")}
    _print_json(summary)


class _Tracked(argparse.Action):
    """Store the value and remember that the flag was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, f"{self.dest}_given", True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, action=_Tracked, help="master RNG seed")
    common.add_argument("--out", default="out", action=_Tracked, help="output directory")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="caextract",
                                     description="Cellular-automata feature extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic scene")
    p.add_argument("--kind", choices=sorted(synth.SCENES), default="two-texture")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("edges", parents=[common], help="CNN edge map of a raster")
    p.add_argument("input")
    p.add_argument("--template", help="template JSON (default: built-in edge template)")
    p.add_argument("--threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("cluster", parents=[common], help="kernel clustering plus SVRF refinement")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--ensemble", type=int, default=8)
    p.add_argument("--sample-size", type=int, default=2000)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--icm-iters", type=int, default=10)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("grow", parents=[common], help="CA region growing from a boundary mask")
    p.add_argument("boundary")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4)
    p.set_defaults(func=cmd_grow)

    p = sub.add_parser("extract", parents=[common], help="objects from a region-state mask")
    p.add_argument("regions")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4)
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evolve", parents=[common], help="evolve a growth rule")
    p.add_argument("--target", required=True)
    p.add_argument("--seed-config", required=True)
    p.add_argument("--pop", type=int, default=64)
    p.add_argument("--gens", type=int, default=200)
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--db", help="pattern DB (JSON lines); the result is appended")
    p.add_argument("--name", default="pattern")
    p.add_argument("--machine", help="MACA machine file used for the signature length")
    p.add_argument("--no-db-guidance", action="store_true")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("classify", parents=[common], help="MACA class of a mask or bit string")
    p.add_argument("pattern", help="mask file or bit string")
    p.add_argument("--machine", help="MACA machine file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("interpolate", parents=[common], help="fill gaps with a stored rule")
    p.add_argument("mask")
    p.add_argument("--db", required=True)
    p.add_argument("--machine")
    p.add_argument("--max-steps", type=int, default=4)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("metrics", parents=[common], help="kappa and overall accuracy")
    p.add_argument("reference")
    p.add_argument("predicted")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--align", action="store_true", help="relabel predictions optimally")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("pipeline", parents=[common], help="run the full pipeline")
    p.add_argument("--input")
    p.add_argument("--reference")
    p.add_argument("--db")
    p.add_argument("--stages", help="comma-separated stage list")
    p.add_argument("--k", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--ensemble", type=int)
    p.add_argument("--sample-size", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for flag in ("seed", "out"):
        if not hasattr(args, f"{flag}_given"):
            setattr(args, f"{flag}_given", False)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (pipeline.ConfigError, pipeline.PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
