"""End-to-end extraction pipeline.

Stages always run in the order

    edges -> cluster -> refine -> grow -> extract -> evolve -> classify
          -> interpolate -> report

Every stage derives its RNG seed from the master seed plus a fixed offset,
so a config and seed fully determine every output file. The report is
written even when a stage fails, with the failing stage recorded.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from caextract import ca_objects, cnn, coreset, kernel_cluster, maca, metrics, raster
from caextract import shape_evolve as se

logger = logging.getLogger(__name__)

STAGES = ("edges", "cluster", "refine", "grow", "extract", "evolve", "classify",
          "interpolate", "report")
STAGE_SEED_OFFSETS = {"cluster": 101, "refine": 202, "evolve": 303, "interpolate": 404}
_NEEDS = {
    "refine": ("cluster",),
    "extract": ("grow",),
    "evolve": ("extract",),
    "classify": ("extract",),
    "interpolate": ("extract",),
}


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class EdgeParams:
    threshold: float = 0.0
    h: float = 0.1
    tol: float = 1e-6
    t_max: float = 100.0
    template: str | None = None


@dataclass
class ClusterParams:
    k: int = 2
    mu: float = 0.5
    beta: float = 1.0
    ensemble: int = 8
    sample_size: int = 2000
    window: int = 3
    icm_iters: int = 10


@dataclass
class GrowParams:
    connectivity: int = 4
    # "auto" outlines the cluster labels when they exist, else uses the edge map
    boundary_source: str = "auto"


@dataclass
class EvolveParams:
    population: int = 64
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 1.0 / 18
    tournament: int = 3
    steps: int = 3
    db_seed_fraction: float = 0.25
    db_guidance: bool = True
    max_objects: int = 8
    eps: float = 0.1


@dataclass
class MacaParams:
    rules: list[int] | None = None


@dataclass
class InterpolateParams:
    max_steps: int = 4
    # growth is confined to each object's bbox padded by this many pixels
    margin: int = 2


@dataclass
class PipelineConfig:
    input: str | None = None
    stages: list[str] = field(default_factory=lambda: list(STAGES))
    out: str = "out"
    seed: int = 0
    reference: str | None = None
    pixel_size: float = 1.0
    db: str | None = None
    align: bool = True
    edges: EdgeParams = field(default_factory=EdgeParams)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    grow: GrowParams = field(default_factory=GrowParams)
    evolve: EvolveParams = field(default_factory=EvolveParams)
    maca: MacaParams = field(default_factory=MacaParams)
    interpolate: InterpolateParams = field(default_factory=InterpolateParams)

    _SECTIONS = {"edges": EdgeParams, "cluster": ClusterParams, "grow": GrowParams,
                 "evolve": EvolveParams, "maca": MacaParams,
                 "interpolate": InterpolateParams}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for name, section in cls._SECTIONS.items():
            if name in kwargs:
                try:
                    kwargs[name] = section(**kwargs[name])
                except TypeError as exc:
                    raise ConfigError(f"bad {name!r} section: {exc}") from None
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if not self.stages:
            raise ConfigError("no stages requested")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {STAGES}")
        if self.input is None:
            raise ConfigError("config has no input raster")
        if not os.path.exists(self.input):
            raise ConfigError(f"input {self.input!r} does not exist")
        if self.reference is not None and not os.path.exists(self.reference):
            raise ConfigError(f"reference {self.reference!r} does not exist")
        if self.db is not None and not os.path.exists(self.db):
            raise ConfigError(f"pattern DB {self.db!r} does not exist")
        if self.edges.template is not None and not os.path.exists(self.edges.template):
            raise ConfigError(f"template {self.edges.template!r} does not exist")
        requested = set(self.stages)
        for stage, needs in _NEEDS.items():
            for need in needs:
                if stage in requested and need not in requested:
                    raise ConfigError(f"stage {stage!r} needs {need!r}")
        if "grow" in requested:
            src = self.grow.boundary_source
            if src not in ("auto", "edges", "labels"):
                raise ConfigError(f"unknown boundary_source {src!r}")
            has_labels = "cluster" in requested
            if src == "labels" and not has_labels:
                raise ConfigError("boundary_source 'labels' needs the cluster stage")
            if src == "edges" or not has_labels:
                if "edges" not in requested:
                    raise ConfigError("stage 'grow' needs 'edges' or 'cluster'")
        if requested == {"report"}:
            raise ConfigError("stage 'report' needs at least one producing stage")
        if "interpolate" in requested and self.db is None and "evolve" not in requested:
            raise ConfigError("stage 'interpolate' needs a pattern DB or the evolve stage")
        if self.pixel_size <= 0:
            raise ConfigError("pixel_size must be positive")


def load_config(path: str | os.PathLike) -> PipelineConfig:
    with open(path) as fh:
        return PipelineConfig.from_dict(json.load(fh))


@dataclass
class Report:
    config: dict
    stages: list[str]
    outputs: dict[str, str] = field(default_factory=dict)
    objects: list[dict] = field(default_factory=list)
    metrics: dict | None = None
    areal: dict | None = None
    stage_results: dict[str, Any] = field(default_factory=dict)
    runtimes: dict[str, float] = field(default_factory=dict)
    error: dict | None = None

    def to_dict(self, include_runtimes: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not include_runtimes:
            d.pop("runtimes")
        return d

    def to_json(self, include_runtimes: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtimes), indent=2, sort_keys=True)


def background_label(labels: np.ndarray) -> int:
    """Most frequent label along the image frame (lowest id on ties)."""
    frame = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    return int(np.bincount(frame).argmax())


def _coreset_outline(boundary: np.ndarray, shape, eps: float) -> np.ndarray:
    """Rasterize the coreset of (row, col) boundary pixels as a seed configuration."""
    pts = boundary[:, ::-1].astype(float)
    if len(pts) > 1:
        pts = coreset.grid_coreset(pts, eps)
    seed = np.zeros(shape, dtype=bool)
    seed[pts[:, 1].astype(int), pts[:, 0].astype(int)] = True
    return seed


class _Run:
    """State shared by the stages of one pipeline run."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.report = Report(config=config.to_dict(), stages=list(config.stages))
        self.raster: raster.Raster | None = None
        self.edges: np.ndarray | None = None
        self.features = None
        self.labels: raster.LabelGrid | None = None
        self.model = None
        self.refined: raster.LabelGrid | None = None
        self.regions: ca_objects.RegionGrid | None = None
        self.objects: list[ca_objects.ExtractedObject] = []
        self.db: se.PatternDB | None = None
        self.machine: maca.MacaMachine | None = None
        self.analysis: maca.AttractorSet | None = None

    def path(self, name: str) -> str:
        return os.path.join(self.cfg.out, name)

    def write_mask(self, key: str, grid: raster.LabelGrid) -> None:
        name = f"{key}.pgm"
        raster.save_mask(self.path(name), grid)
        self.report.outputs[key] = name

    def seed(self, stage: str) -> int:
        return self.cfg.seed + STAGE_SEED_OFFSETS.get(stage, 0)

    # -- stages ---------------------------------------------------------------

    def edges_stage(self):
        p = self.cfg.edges
        template = cnn.load_template(p.template) if p.template else cnn.EDGE
        self.edges = cnn.detect_edges(self.raster, template, p.threshold, p.h, p.tol, p.t_max)
        self.write_mask("edges", raster.LabelGrid(self.edges.astype(np.int64), k=2))
        return {"template": template.name, "edge_pixels": int(self.edges.sum())}

    def cluster_stage(self):
        p = self.cfg.cluster
        self.features = raster.window_features(self.raster, p.window)
        self.labels, self.model = kernel_cluster.cluster_image(
            self.features, p.k, M=p.ensemble, mu=p.mu, sample_size=p.sample_size,
            seed=self.seed("cluster"))
        self.write_mask("clusters", self.labels)
        return {"sample_size": int(len(self.model.sample_index)),
                "label_counts": np.bincount(self.labels.labels.ravel(), minlength=p.k).tolist()}

    def refine_stage(self):
        p = self.cfg.cluster
        energies: list[float] = []
        params = kernel_cluster.SvrfParams(beta=p.beta, mu=p.mu, icm_iters=p.icm_iters)
        self.refined = kernel_cluster.svrf_refine(
            self.labels, self.features, self.model.spectral, params,
            spatial_ensemble=self.model.spatial, energies=energies)
        self.write_mask("refined", self.refined)
        changed = int(np.count_nonzero(self.refined.labels != self.labels.labels))
        return {"changed": changed, "sweeps": len(energies) - 1, "energy": energies}

    def _final_labels(self) -> raster.LabelGrid | None:
        return self.refined if self.refined is not None else self.labels

    def grow_stage(self):
        p = self.cfg.grow
        labels = self._final_labels()
        use_labels = labels is not None and p.boundary_source in ("auto", "labels")
        if use_labels:
            fg = labels.labels != background_label(labels.labels)
            boundary = cnn.detect_edges(fg.astype(np.float64), cnn.EDGE, self.cfg.edges.threshold,
                                        self.cfg.edges.h, self.cfg.edges.tol, self.cfg.edges.t_max)
        else:
            boundary = self.edges
        self.regions = ca_objects.grow_regions(boundary, p.connectivity)
        self.write_mask("regions", raster.LabelGrid(self.regions.states.astype(np.int64), k=3))
        return {"boundary_source": "labels" if use_labels else "edges",
                "sweeps": self.regions.sweeps, "states": self.regions.counts()}

    def extract_stage(self):
        self.objects = ca_objects.extract_objects(self.regions, self.cfg.grow.connectivity)
        shape = self.regions.states.shape
        self.write_mask("objects", raster.LabelGrid(
            ca_objects.objects_mask(self.objects, shape).astype(np.int64), k=2))
        ps = self.cfg.pixel_size
        self.report.objects = [
            dict(o.to_record(ps), area_km2=metrics.areal_extent(o, ps)) for o in self.objects
        ]
        with open(self.path("objects.json"), "w") as fh:
            json.dump(self.report.objects, fh, sort_keys=True)
        self.report.outputs["objects_json"] = "objects.json"
        return {"count": len(self.objects),
                "total_area_km2": sum(r["area_km2"] for r in self.report.objects)}

    def _ensure_db(self) -> se.PatternDB:
        if self.db is None:
            self.db = se.PatternDB()
            if self.cfg.db is not None:
                for rec in se.PatternDB(self.cfg.db):
                    self.db.store(rec)
        return self.db

    def _ensure_maca(self):
        if self.machine is None:
            rules = self.cfg.maca.rules
            self.machine = maca.MacaMachine(tuple(rules)) if rules else maca.default_machine()
            self.analysis = maca.analyze(self.machine)
        return self.machine, self.analysis

    def evolve_stage(self):
        p = self.cfg.evolve
        db = self._ensure_db()
        machine, _ = self._ensure_maca()
        results = []
        for obj in self.objects[: p.max_objects]:
            target = np.pad(obj.mask(), 1)
            offset = np.array(obj.bbox[:2]) - 1
            seed_cfg = _coreset_outline(obj.boundary_pixels - offset, target.shape, p.eps)
            ga = se.GaParams(population=p.population, generations=p.generations,
                             crossover_rate=p.crossover_rate, mutation_rate=p.mutation_rate,
                             tournament=p.tournament, steps=p.steps,
                             seed=self.seed("evolve") + obj.id,
                             db_seed_fraction=p.db_seed_fraction, db_guidance=p.db_guidance)
            res = se.evolve_rule(seed_cfg, target, ga, db)
            sig = se.shape_signature(target, machine.n, p.eps)
            db.store(se.PatternRecord(f"object-{obj.id}", res.rule, seed_cfg, p.steps, sig,
                                      res.fitness))
            results.append({"id": obj.id, "rule": str(res.rule), "fitness": res.fitness,
                            "generations": res.generations, "signature": sig,
                            "entropy": se.entropy_profile(target)})
        self._write_db()
        return results

    def _write_db(self):
        with open(self.path("patterns.jsonl"), "w") as fh:
            for rec in self.db:
                fh.write(rec.to_json() + "\n")
        self.report.outputs["patterns"] = "patterns.jsonl"

    def classify_stage(self):
        machine, analysis = self._ensure_maca()
        out = []
        for obj in self.objects:
            sig = se.shape_signature(obj.mask(), machine.n, self.cfg.evolve.eps)
            cls, steps = maca.classify(machine, analysis, sig, return_steps=True)
            out.append({"id": obj.id, "signature": sig, "class": cls, "steps": steps})
        return {"machine": machine.spec(), "depth": analysis.depth,
                "pef_positions": analysis.pef_positions,
                "exhaustive": analysis.exhaustive, "objects": out}

    def interpolate_stage(self):
        db = self._ensure_db()
        machine, analysis = self._ensure_maca()
        shape = self.regions.states.shape
        combined = np.zeros(shape, dtype=bool)
        out = []
        m = self.cfg.interpolate.margin
        for obj in self.objects:
            r0, c0, r1, c1 = obj.bbox
            r0, c0 = max(r0 - m, 0), max(c0 - m, 0)
            r1, c1 = min(r1 + m, shape[0] - 1), min(c1 + m, shape[1] - 1)
            window = obj.mask(shape)[r0 : r1 + 1, c0 : c1 + 1]
            info = se.interpolate_feature(window, db, machine, analysis,
                                          self.cfg.interpolate.max_steps,
                                          self.cfg.evolve.eps, return_info=True)
            combined[r0 : r1 + 1, c0 : c1 + 1] |= info.mask
            out.append({"id": obj.id, "added": info.added, "steps": info.steps,
                        "class": info.pattern_class,
                        "matched": info.match.record.name if info.match else None,
                        "similarity": info.match.similarity if info.match else None})
        self.write_mask("interpolated", raster.LabelGrid(combined.astype(np.int64), k=2))
        return out

    def report_stage(self):
        ps = self.cfg.pixel_size
        extracted_px = sum(o.area_px for o in self.objects)
        if self.cfg.reference is None:
            return {"extracted_area_km2": metrics.areal_extent(extracted_px, ps)}
        labels = self._final_labels()
        k = labels.k if labels is not None else 2
        ref = raster.load_mask(self.cfg.reference, k=k)
        if labels is not None:
            pred = labels
        else:
            pred = raster.LabelGrid(ca_objects.objects_mask(self.objects, ref.labels.shape)
                                    .astype(np.int64), k=2)
        cm = metrics.confusion_from_masks(ref, pred, k=k, align=self.cfg.align)
        try:
            kap = metrics.kappa(cm)
        except metrics.UndefinedKappaError:
            kap = None
        self.report.metrics = {"kappa": kap, "overall_accuracy": metrics.overall_accuracy(cm),
                               "confusion": cm.to_list()}
        ref_fg = int(np.count_nonzero(ref.labels != background_label(ref.labels)))
        self.report.areal = {
            "reference_area_km2": metrics.areal_extent(ref_fg, ps),
            "extracted_area_km2": metrics.areal_extent(extracted_px, ps),
        }
        return self.report.metrics


def run_pipeline(config: PipelineConfig) -> Report:
    """Validate ``config``, run its stages in canonical order and write ``report.json``.

    Raises:
        ConfigError: invalid configuration (nothing is written).
        PipelineError: a stage failed; the partial report is still written.
    """
    config.validate()
    os.makedirs(config.out, exist_ok=True)
    run = _Run(config)
    requested = set(config.stages)
    failure: PipelineError | None = None
    t0 = time.perf_counter()
    run.raster = raster.load_raster(config.input, pixel_size=config.pixel_size)
    run.report.runtimes["load"] = time.perf_counter() - t0
    for stage in STAGES:
        if stage not in requested:
            continue
        t0 = time.perf_counter()
        try:
            result = getattr(run, f"{stage}_stage")()
        except Exception as exc:  # noqa: BLE001 - recorded, then re-raised
            logger.exception("stage %s failed", stage)
            run.report.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
            failure = PipelineError(stage, exc)
            break
        finally:
            run.report.runtimes[stage] = time.perf_counter() - t0
        run.report.stage_results[stage] = result
        logger.info("stage %s done in %.2fs", stage, run.report.runtimes[stage])
    with open(run.path("report.json"), "w") as fh:
        fh.write(run.report.to_json())
    if failure is not None:
        raise failure from failure.cause
    return run.report
