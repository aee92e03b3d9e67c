"""Grid runner: generate, poison, detect, identify and evaluate each (mode, ratio, target, seed) cell.

Every cell writes one JSON artifact named by the hash of its configuration
and coordinates; JSON is written with sorted keys so re-running a cell with
the same seed reproduces the file byte for byte.  Wall-clock times go to a
separate ``timing.json``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..attacks import AttackConfig, AttackMode, choose_poisoned, dataset_sqr_series, measure_distortion, poisoned_pipeline
from ..csvio import ingest_csv
from ..dataset import Continuous, TimeSeriesDataset, generate_synthetic, weather_like_spec
from ..detectors import Detector, DetectorConfig
from ..errors import ConfigurationError, PoisonLabError
from ..identify import Reference, evaluate, feature_block, identify
from ..identify.metrics import confusion_f2
from ..ldp import LdpConfig, Mechanism, default_configs, perturb_dataset
from .config import ExperimentConfig

DIMENSIONS = ("attack_ratio", "epsilon", "window_length")
SWEEP_COLUMNS = ("x", "metric", "mode", "attribute", "seed", "value")


@dataclass(frozen=True)
class Cell:
    mode: str
    ratio: float
    target: int
    rep: int
    epsilon: float
    id_ell: int

    def coords(self) -> dict:
        return {"mode": self.mode, "ratio": self.ratio, "target": self.target, "rep": self.rep,
                "epsilon": self.epsilon, "id_ell": self.id_ell}


@dataclass
class RunArtifacts:
    output_dir: Path
    cells: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    paths: list = field(default_factory=list)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _seed_int(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint32)[0])


# --------------------------------------------------------------------------
# per-replicate context (dataset, configs, fitted detector), cached


class Context:
    def __init__(self, cfg: ExperimentConfig, rep: int, epsilon: float):
        self.cfg, self.rep, self.epsilon = cfg, rep, epsilon
        full = load_dataset(cfg, rep)
        h, m = cfg.dataset.history, cfg.dataset.monitor
        if full.T < h + m:
            raise ConfigurationError(f"dataset has {full.T} time steps, need history + monitor = {h + m}")
        self.history = full.slice_time(0, h)
        self.monitor = full.slice_time(h, h + m)
        self.ldp = ldp_configs(cfg, full, epsilon)
        self._detector: Detector | None = None
        self._clean = None
        self._refs: dict[int, Reference] = {}
        self.cache: dict = {}
        self.features: dict = {}

    @property
    def noise_seed(self) -> int:
        return _seed_int(self.cfg.seed, self.rep, 0x4C4450, int(round(self.epsilon * 1e6)))

    def detector(self) -> Detector:
        if self._detector is None:
            dcfg = self.cfg.detector
            det_cfg = DetectorConfig(**{**_fields(dcfg), "seed": _seed_int(self.cfg.seed, self.rep, 0xDE7)})
            self._detector = Detector(det_cfg, self.ldp).fit(self.history)
        return self._detector

    def reference(self, j: int) -> Reference:
        if j not in self._refs:
            hist_pert = perturb_dataset(self.history, self.ldp,
                                        np.random.default_rng(_seed_int(self.cfg.seed, self.rep, 0x5EF)))
            self._refs[j] = Reference.from_reports(hist_pert.values[:, j, :], self.history.kinds[j],
                                                   self.cfg.miner.bins)
        return self._refs[j]


def _fields(dc) -> dict:
    return {f: getattr(dc, f) for f in dc.__dataclass_fields__}


def load_dataset(cfg: ExperimentConfig, rep: int) -> TimeSeriesDataset:
    d = cfg.dataset
    if d.source == "csv":
        return ingest_csv(d.path)
    spec = weather_like_spec(n=d.n, T=d.history + d.monitor, discrete=d.discrete)
    return generate_synthetic(spec, _seed_int(cfg.seed, rep, 0xDA7A))


def ldp_configs(cfg: ExperimentConfig, ds: TimeSeriesDataset, epsilon: float) -> list[LdpConfig]:
    configs = default_configs(ds.kinds, epsilon, cfg.ldp.delta)
    for name, o in cfg.ldp.overrides.items():
        if name not in ds.names:
            raise ConfigurationError(f"LDP override for unknown attribute {name!r}")
        j = ds.names.index(name)
        c = configs[j]
        configs[j] = LdpConfig(Mechanism(o.get("mechanism", c.mechanism)), float(o.get("epsilon", epsilon)),
                               c.domain, c.delta)
    return configs


def resolve_target(target, names: Sequence[str]) -> int:
    if isinstance(target, str) and not target.isdigit():
        if target not in names:
            raise ConfigurationError(f"unknown target attribute {target!r}")
        return names.index(target)
    j = int(target)
    if not 0 <= j < len(names):
        raise ConfigurationError(f"target index {j} out of range")
    return j


# --------------------------------------------------------------------------
# one cell


def _round(x: float) -> float:
    return float(round(float(x), 12))


def run_cell(ctx: Context, cell: Cell) -> dict:
    cfg = ctx.cfg
    ss = np.random.SeedSequence([cfg.seed, cell.rep, list(AttackMode).index(AttackMode(cell.mode)),
                                 int(round(cell.ratio * 10000)), cell.target])
    m_seed, a_seed = ss.generate_state(2, dtype=np.uint32)
    n = ctx.monitor.n
    j = cell.target
    continuous = isinstance(ctx.monitor.kinds[j], Continuous)
    poisoned = choose_poisoned(n, cell.ratio, np.random.default_rng(int(m_seed)))
    attack = AttackConfig(AttackMode(cell.mode), j, poisoned, seed=int(a_seed),
                          **cfg.attack.mode_params(cell.mode, continuous))
    clean, pois, trace = poisoned_pipeline(ctx.monitor, attack, ctx.ldp, np.random.default_rng(ctx.noise_seed))

    det = ctx.detector()
    report = det.score(pois, ctx.cache, recompute=(j,))
    truth = {j} if poisoned else set()
    flagged = set(report.flagged)
    per_attr = {}
    for a, name in enumerate(ctx.monitor.names):
        tp = int(a in flagged and a in truth)
        fp = int(a in flagged and a not in truth)
        fn = int(a not in flagged and a in truth)
        per_attr[name] = {"tp": tp, "fp": fp, "fn": fn}
    tp, fp, fn = (sum(v[k] for v in per_attr.values()) for k in ("tp", "fp", "fn"))

    ident = identification_block(ctx, cell, pois, trace.labels, report.flagged)

    dist = measure_distortion(dataset_sqr_series(clean, ctx.ldp), dataset_sqr_series(pois, ctx.ldp),
                              j, len(poisoned) / n, ctx.ldp[j])
    return {
        "cell": cell.coords(),
        "attack": {"mode": cell.mode, "target": ctx.monitor.names[j], "target_kind": "continuous" if continuous else "discrete",
                   "mechanism": ctx.ldp[j].mechanism.value, "ratio": cell.ratio,
                   "realized_ratio": len(poisoned) / n, "poisoned": list(poisoned),
                   "magnitude_sup": _round(trace.magnitude_sup), "variation_sup": _round(trace.variation_sup)},
        "detection": {"flagged": [ctx.monitor.names[a] for a in report.flagged], "tp": tp, "fp": fp, "fn": fn,
                      "f2": confusion_f2(tp, fp, fn), "per_attribute": per_attr, "report": report.to_dict()},
        "identification": ident,
        "distortion": dist.to_dict(),
    }


def identification_block(ctx: Context, cell: Cell, pois: TimeSeriesDataset, labels: np.ndarray,
                         flagged: Sequence[int]) -> dict:
    cfg = ctx.cfg
    ids = cfg.identification
    if ids.attribute == "none":
        return {"attribute": None, "skipped": True}
    if ids.attribute == "target":
        attr = cell.target
    else:
        attr = cell.target if cell.target in flagged else (flagged[0] if flagged else None)
    out: dict = {"attribute": None if attr is None else pois.names[attr]}
    y = np.asarray(labels, dtype=np.int64)
    if attr is None or y.sum() == 0 or y.sum() == y.size:
        # Nothing to learn from: every device is reported clean.
        ev = evaluate(np.zeros_like(y), y)
        out.update(ev.to_dict(), model_hash=None, predicted=[])
        if ids.compare_baseline:
            out["baseline"] = ev.to_dict()
        return out
    spec = cfg.miner
    reports = pois.values[:, attr, :]
    kind = pois.kinds[attr]
    ref = ctx.reference(attr)
    # Cells that differ only in the identification window see the same reports.
    key = (cell.mode, cell.ratio, cell.target, attr, ids.fe)
    if key not in ctx.features:
        ctx.features[key] = feature_block(reports, kind, ids.fe, spec, ref, pois.device_ids)
    res = identify(reports, kind, y, ref, ell=cell.id_ell, spec=spec, params=cfg.classifier, fe=ids.fe,
                   train_fraction=ids.train_fraction, device_ids=pois.device_ids, block=ctx.features[key])
    out.update(res.evaluation.to_dict(), model_hash=res.model.model_hash(),
               predicted=[int(i) for i in np.flatnonzero(res.predictions)])
    if ids.compare_baseline:
        base = identify(reports, kind, y, ref, ell=cell.id_ell, spec=spec, params=cfg.classifier, fe=False,
                        train_fraction=ids.train_fraction, device_ids=pois.device_ids)
        out["baseline"] = base.evaluation.to_dict()
    return out


# --------------------------------------------------------------------------
# grids


def grid_cells(cfg: ExperimentConfig, names: Sequence[str], ratios=None, epsilons=None, id_ells=None) -> list[Cell]:
    ratios = cfg.attack.ratios if ratios is None else ratios
    epsilons = (cfg.ldp.epsilon,) if epsilons is None else epsilons
    id_ells = (cfg.identification.ell,) if id_ells is None else id_ells
    targets = [resolve_target(t, names) for t in cfg.attack.targets]
    return [Cell(m, float(r), t, rep, float(e), int(l))
            for rep in range(cfg.seeds) for e in epsilons for l in id_ells
            for m in cfg.attack.modes for r in ratios for t in targets]


def cell_hash(cfg: ExperimentConfig, cell: Cell) -> str:
    c = cfg.to_dict()
    for k in ("output_dir", "workers", "sweep"):
        c.pop(k, None)
    return _hash({"config": c, "cell": cell.coords()})[:20]


def _run_group(cfg: ExperimentConfig, cells: Sequence[Cell]) -> list[tuple[Cell, dict | None, str | None, float]]:
    out = []
    ctx = None
    for cell in cells:
        t0 = time.perf_counter()
        try:
            if ctx is None:
                ctx = Context(cfg, cell.rep, cell.epsilon)
            res, err = run_cell(ctx, cell), None
        except Exception as exc:  # recorded per cell; the grid keeps going
            res, err = None, f"{type(exc).__name__}: {exc}"
        out.append((cell, res, err, time.perf_counter() - t0))
    return out


def execute(cfg: ExperimentConfig, cells: Sequence[Cell]) -> RunArtifacts:
    outdir = Path(cfg.output_dir)
    (outdir / "cells").mkdir(parents=True, exist_ok=True)
    groups: dict = {}
    for c in cells:
        groups.setdefault((c.rep, c.epsilon), []).append(c)
    batches = list(groups.values())
    if cfg.workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = [r for batch in pool.map(_run_group, [cfg] * len(batches), batches) for r in batch]
    else:
        results = [r for batch in batches for r in _run_group(cfg, batch)]
    art = RunArtifacts(outdir)
    timing = {}
    for cell, res, err, secs in results:
        h = cell_hash(cfg, cell)
        doc = {"cell_id": h, "cell": cell.coords()}
        if err is None:
            doc.update(res, status="ok")
            art.cells.append(doc)
        else:
            doc.update(status="failed", error=err)
            art.failures.append(doc)
        path = outdir / "cells" / f"{h}.json"
        path.write_text(canonical_json(doc) + "\n", encoding="utf-8")
        art.paths.append(path)
        timing[h] = round(secs, 3)
    (outdir / "timing.json").write_text(json.dumps(timing, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    manifest = {"config": cfg.to_dict(), "cells": sorted(p.name for p in art.paths),
                "failed": sorted(d["cell_id"] for d in art.failures)}
    (outdir / "run.json").write_text(canonical_json(manifest) + "\n", encoding="utf-8")
    return art


def _names(cfg: ExperimentConfig) -> tuple[str, ...]:
    if cfg.dataset.source == "csv":
        return ingest_csv(cfg.dataset.path).names
    d = cfg.dataset
    return tuple(a.name for a in weather_like_spec(n=d.n, T=2, discrete=d.discrete).attributes)


def run_experiment(cfg: ExperimentConfig) -> RunArtifacts:
    return execute(cfg, grid_cells(cfg, _names(cfg)))


def sweep(cfg: ExperimentConfig, dimension: str) -> tuple[RunArtifacts, Path]:
    """Run one sweep and write ``sweep_<dimension>.csv`` with columns ``x,metric,mode,attribute,seed,value``."""
    if dimension not in DIMENSIONS:
        raise ConfigurationError(f"unknown sweep dimension {dimension!r}; choose from {', '.join(DIMENSIONS)}")
    names = _names(cfg)
    s = cfg.sweep
    if dimension == "attack_ratio":
        cells = grid_cells(cfg, names)
    elif dimension == "epsilon":
        cells = grid_cells(cfg, names, ratios=(s.ratio,), epsilons=s.epsilons)
    else:
        cells = grid_cells(cfg, names, ratios=(s.ratio,), id_ells=s.window_lengths)
    art = execute(cfg, cells)
    key = {"attack_ratio": "ratio", "epsilon": "epsilon", "window_length": "id_ell"}[dimension]
    rows = []
    for doc in sorted(art.cells, key=lambda d: (d["cell"][key], d["cell"]["mode"], d["attack"]["target"], d["cell"]["rep"])):
        c = doc["cell"]
        metrics = {"detection_f2": doc["detection"]["f2"]}
        if not doc["identification"].get("skipped"):
            metrics.update(identification_f2=doc["identification"]["f2"],
                           estimated_ratio=doc["identification"]["estimated_ratio"])
        if "baseline" in doc["identification"]:
            metrics["baseline_identification_f2"] = doc["identification"]["baseline"]["f2"]
        for name, value in metrics.items():
            rows.append((c[key], name, c["mode"], doc["attack"]["target"], c["rep"], repr(float(value))))
    path = Path(cfg.output_dir) / f"sweep_{dimension}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    return art, path


# --------------------------------------------------------------------------
# reporting


def _mean_sd(xs: Sequence[float]) -> tuple[float, float] | None:
    if not xs:
        return None
    a = np.asarray(xs, dtype=np.float64)
    return round(float(a.mean()), 6), round(float(a.std(ddof=1)) if a.size > 1 else 0.0, 6)


def load_cells(artifact_dir) -> list[dict]:
    d = Path(artifact_dir)
    cells_dir = d / "cells" if (d / "cells").is_dir() else d
    docs = []
    for p in sorted(cells_dir.glob("*.json")):
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
        if isinstance(doc, dict) and doc.get("status") == "ok":
            docs.append(doc)
    return docs


def summarize(docs: Iterable[dict]) -> dict:
    """Per (mode, mechanism, ratio): true vs estimated ratio and F2 means with sd over seeds."""
    groups: dict = {}
    for d in docs:
        a = d["attack"]
        groups.setdefault((a["mode"], a["mechanism"], a["ratio"]), []).append(d)
    rows = []
    for (mode, mech, ratio), ds in sorted(groups.items()):
        tp = sum(d["detection"]["tp"] for d in ds)
        fp = sum(d["detection"]["fp"] for d in ds)
        fn = sum(d["detection"]["fn"] for d in ds)
        ident = [d for d in ds if not d["identification"].get("skipped")]
        rows.append({
            "mode": mode, "mechanism": mech, "ratio": ratio, "seeds": len(ds),
            "true_ratio": _mean_sd([d["attack"]["realized_ratio"] for d in ds]),
            "estimated_ratio": _mean_sd([d["identification"]["estimated_ratio"] for d in ident]),
            "identification_f2": _mean_sd([d["identification"]["f2"] for d in ident]),
            "detection_f2": _mean_sd([d["detection"]["f2"] for d in ds]),
            "detection_f2_pooled": round(confusion_f2(tp, fp, fn), 6),
        })
    return {"rows": rows}


def format_table(summary: dict) -> str:
    head = ("mode", "mechanism", "ratio", "seeds", "true_ratio", "estimated_ratio", "identification_f2",
            "detection_f2", "detection_f2_pooled")
    lines = ["\t".join(head)]
    for r in summary["rows"]:
        cells = [r["mode"], r["mechanism"], repr(r["ratio"]), str(r["seeds"])]
        for k in head[4:8]:
            if r[k] is None:
                cells.append("-")
                continue
            m, s = r[k]
            cells.append(f"{m!r}±{s!r}")
        cells.append(repr(r["detection_f2_pooled"]))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def report(artifact_dir) -> dict:
    """Write ``report.json`` and ``report.txt`` into ``artifact_dir`` and return the summary."""
    d = Path(artifact_dir)
    if not d.is_dir():
        raise ConfigurationError(f"artifact directory {d} does not exist")
    summary = summarize(load_cells(d))
    (d / "report.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    (d / "report.txt").write_text(format_table(summary), encoding="utf-8")
    return summary
