"""Bag AUC, the resampling experiment, and AUC-vs-stability Pareto selection."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata

from . import __version__
from .data import (BagStandardizer, Dataset, SplitSpec, SynthConfig, derive_seed,
                   generate_synthetic, load_dataset, load_musk1, random_split,
                   resample_train_bags)
from .mil import CLASSIFIER_KINDS, make_classifier, predict_bags, predict_instances
from .stability import (mean_pairwise, measure_correlation, pairwise_matrix,
                        positiveness_histogram)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic with midranks.

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


# -- Pareto selection ----------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    name: str
    auc: float
    stability: float

    def dominates(self, other: "ParetoPoint") -> bool:
        return (self.auc >= other.auc and self.stability >= other.stability
                and (self.auc > other.auc or self.stability > other.stability))


@dataclass(frozen=True)
class ParetoResult:
    points: tuple
    frontier: tuple

    def on_frontier(self, point: ParetoPoint) -> bool:
        return point in self.frontier


def pareto_frontier(points: Sequence[ParetoPoint]) -> ParetoResult:
    """Non-dominated points when both AUC and stability are maximized.

    Duplicated points are all kept; the frontier preserves input order.
    """
    points = tuple(points)
    if not points:
        raise ValueError("no points given")
    # sweep by decreasing AUC, then decreasing stability
    order = sorted(range(len(points)), key=lambda i: (-points[i].auc, -points[i].stability))
    keep = set()
    best_stab = -math.inf
    k = 0
    while k < len(order):
        # points sharing one AUC value are resolved together
        group = [order[k]]
        while k + len(group) < len(order) and points[order[k + len(group)]].auc == points[order[k]].auc:
            group.append(order[k + len(group)])
        top = points[group[0]].stability
        if top > best_stab:
            keep.update(i for i in group if points[i].stability == top)
            best_stab = top
        k += len(group)
    return ParetoResult(points, tuple(p for i, p in enumerate(points) if i in keep))


def best_by(points: Sequence[ParetoPoint], criterion: str = "frontier") -> list[ParetoPoint]:
    """Select points by ``'auc'``, ``'stability'`` (all ties kept) or ``'frontier'``."""
    points = list(points)
    if not points:
        raise ValueError("no points given")
    if criterion == "frontier":
        return list(pareto_frontier(points).frontier)
    if criterion not in ("auc", "stability"):
        raise ValueError(f"unknown criterion {criterion!r}")
    top = max(getattr(p, criterion) for p in points)
    return [p for p in points if getattr(p, criterion) == top]


# -- experiment configuration -------------------------------------------

class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def build(self):
        return make_classifier(self.kind, **self.params)


@dataclass
class ExperimentConfig:
    dataset: dict
    classifiers: list
    split: dict = field(default_factory=lambda: {"test_fraction": 0.2, "seed": 0})
    repetitions: int = 10
    fraction: float = 0.8
    seed: int = 0
    standardize: bool = True
    n_jobs: int = 1
    base_dir: str = "."

    _KEYS = ("dataset", "classifiers", "split", "repetitions", "fraction", "seed",
             "standardize", "n_jobs")

    def __post_init__(self):
        if not isinstance(self.repetitions, int) or self.repetitions < 2:
            raise ConfigError("repetitions must be an integer R >= 2")
        if not isinstance(self.fraction, (int, float)) or not 0 < self.fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]")
        if not self.classifiers:
            raise ConfigError("at least one classifier is required")
        specs = []
        for entry in self.classifiers:
            if isinstance(entry, ClassifierSpec):
                specs.append(entry)
                continue
            if not isinstance(entry, dict) or "kind" not in entry:
                raise ConfigError(f"classifier entry needs a 'kind': {entry!r}")
            unknown = set(entry) - {"name", "kind", "params"}
            if unknown:
                raise ConfigError(f"unknown classifier keys {sorted(unknown)}")
            specs.append(ClassifierSpec(entry.get("name", entry["kind"]), entry["kind"],
                                        dict(entry.get("params", {}))))
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError("classifier names must be unique")
        for s in specs:
            if s.kind not in CLASSIFIER_KINDS:
                raise ConfigError(f"unknown classifier kind {s.kind!r}")
            try:
                s.build()
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"classifier {s.name!r}: {exc}") from None
        self.classifiers = specs
        if not isinstance(self.dataset, dict) or len(self.dataset) != 1 or \
                next(iter(self.dataset)) not in ("path", "builtin", "synthetic"):
            raise ConfigError("dataset must be one of {'path': ...}, {'builtin': 'musk1'}, "
                              "{'synthetic': {...}}")

    @classmethod
    def from_dict(cls, cfg: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(cfg) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("dataset", "classifiers"):
            if key not in cfg:
                raise ConfigError(f"missing config key {key!r}")
        return cls(**cfg, base_dir=str(base_dir))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(cfg, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "classifiers": [{"name": s.name, "kind": s.kind, "params": s.params}
                            for s in self.classifiers],
            "split": self.split,
            "repetitions": self.repetitions,
            "fraction": self.fraction,
            "seed": self.seed,
            "standardize": self.standardize,
        }

    def load_data(self) -> tuple[Dataset, dict | None]:
        (kind, value), = self.dataset.items()
        try:
            if kind == "path":
                path = Path(value)
                if not path.is_absolute():
                    path = Path(self.base_dir) / path
                return load_dataset(path), None
            if kind == "builtin":
                if value != "musk1":
                    raise ConfigError(f"unknown builtin dataset {value!r}")
                return load_musk1(), None
            ds, truth = generate_synthetic(SynthConfig.from_dict(value))
            return ds, truth
        except ConfigError:
            raise
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot load dataset: {exc}") from None

    def make_split(self, dataset: Dataset) -> SplitSpec:
        split = self.split
        try:
            if "train_bag_ids" in split or "test_bag_ids" in split:
                spec = SplitSpec(tuple(split["train_bag_ids"]), tuple(split["test_bag_ids"]),
                                 int(split.get("seed", 0)))
                known = set(dataset.ids)
                if not set(spec.train_bag_ids + spec.test_bag_ids) <= known:
                    raise ConfigError("split names bag ids absent from the dataset")
                return spec
            return random_split(dataset, float(split.get("test_fraction", 0.2)),
                                int(split.get("seed", 0)))
        except ConfigError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid split: {exc}") from None


# -- experiment ----------------------------------------------------------

def replicate_seed(master: int, classifier_index: int, replicate: int) -> int:
    """Sub-seed of one replicate; independent of the other classifiers in a run."""
    return derive_seed(master, classifier_index, replicate)


def _diagnostics(model) -> dict:
    out = {}
    if hasattr(model, "converged_"):
        out["n_iter"] = int(model.n_iter_)
        out["converged"] = bool(model.converged_)
    if hasattr(model, "sparsity_"):
        out["n_selected"] = int(len(model.selected_))
        out["sparsity"] = float(model.sparsity_)
        out["gamma"] = float(model.gamma_)
    if hasattr(model, "alphas_"):
        out["n_rounds"] = len(model.alphas_)
    return out


def _run_replicate(spec: ClassifierSpec, seed: int, train: Dataset, test: Dataset,
                   fraction: float, standardize: bool) -> dict:
    rec = {"seed": seed}
    try:
        ids = resample_train_bags(train.ids, train.labels, fraction, seed)
        rec["train_bag_ids"] = ids
        sub = train.subset(ids)
        X_train, X_test = sub.instances, test.instances
        if standardize:
            scaler = BagStandardizer().fit(X_train)
            X_train, X_test = scaler.transform(X_train), scaler.transform(X_test)
        model = spec.build().fit(X_train, sub.labels)
        bag_scores, _ = predict_bags(model, X_test)
        inst_scores, inst_labels = predict_instances(model, X_test)
        rec.update(status="ok", auc=auc(bag_scores, test.labels),
                   bag_scores=bag_scores.tolist(), instance_scores=inst_scores.tolist(),
                   instance_labels=inst_labels.tolist(), diagnostics=_diagnostics(model))
    except Exception as exc:  # recorded per replicate, never fatal
        rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return rec


def summarize_labelings(labelings: Sequence, aucs: Sequence[float]) -> dict:
    """Stability summary of R replicate labelings (R >= 2)."""
    m_s = pairwise_matrix(labelings, "s")
    m_sp = pairwise_matrix(labelings, "s+")
    counts, hist = positiveness_histogram(labelings)
    return {
        "mean_auc": float(np.mean(aucs)),
        "mean_s": mean_pairwise(m_s),
        "mean_s_plus": mean_pairwise(m_sp),
        "s_matrix": m_s.values.tolist(),
        "s_plus_matrix": m_sp.values.tolist(),
        "s_plus_degenerate": m_sp.degenerate.tolist(),
        "n_degenerate_s_plus_pairs": int(np.triu(m_sp.degenerate, k=1).sum()),
        "s_vs_s_plus_correlation": measure_correlation(m_s, m_sp),
        "positiveness_counts": counts.tolist(),
        "positiveness_histogram": hist.tolist(),
    }


def all_positive_baseline(test: Dataset, repetitions: int) -> dict:
    """Reference classifier that labels every instance positive."""
    n = test.n_instances
    labelings = [np.ones(n, dtype=int)] * repetitions
    summary = summarize_labelings(labelings, [auc(np.ones(len(test)), test.labels)])
    return {"name": "all_positive", "mean_auc": summary["mean_auc"],
            "mean_s": summary["mean_s"], "mean_s_plus": summary["mean_s_plus"]}


@dataclass
class StabilityReport:
    """Outcome of :func:`run_experiment`, serializable with :meth:`to_json`."""

    config: dict
    dataset: dict
    test_bag_ids: list
    test_bag_labels: list
    instance_index: list
    classifiers: list
    baseline: dict
    software: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [c["name"] for c in self.classifiers if c["status"] == "failed"]

    def classifier(self, name: str) -> dict:
        for c in self.classifiers:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def pareto_points(self, measure: str = "s+", include_baseline: bool = True) -> list[ParetoPoint]:
        key = {"s": "mean_s", "s+": "mean_s_plus"}[measure]
        rows = [c for c in self.classifiers if c["status"] == "ok"]
        if include_baseline:
            rows = rows + [self.baseline]
        return [ParetoPoint(r["name"], r["mean_auc"], r[key]) for r in rows]

    def to_dict(self) -> dict:
        return {
            "format": "milstab-report/1",
            "software": self.software,
            "config": self.config,
            "dataset": self.dataset,
            "test_bag_ids": self.test_bag_ids,
            "test_bag_labels": self.test_bag_labels,
            "instance_index": self.instance_index,
            "classifiers": self.classifiers,
            "baseline": self.baseline,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "StabilityReport":
        if d.get("format") != "milstab-report/1":
            raise ValueError("not a milstab report")
        return cls(d["config"], d["dataset"], d["test_bag_ids"], d["test_bag_labels"],
                   d["instance_index"], d["classifiers"], d["baseline"], d.get("software", {}))

    @classmethod
    def read(cls, path) -> "StabilityReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def run_experiment(cfg: ExperimentConfig, log=None) -> StabilityReport:
    """Train every classifier on R bag resamples and measure label stability.

    Replicate ``r`` of classifier ``c`` trains on a ``fraction`` resample of
    the training bags drawn with ``replicate_seed(seed, c, r)``; features
    are standardized on that resample when ``cfg.standardize`` is set.
    All replicates predict the same test bags. Replicates may run in
    parallel (``cfg.n_jobs``); results are gathered in (classifier,
    replicate) order, so the report does not depend on scheduling.
    """
    dataset, _ = cfg.load_data()
    split = cfg.make_split(dataset)
    train, test = dataset.subset(split.train_bag_ids), dataset.subset(split.test_bag_ids)
    if len(set(train.labels.tolist())) < 2:
        raise ConfigError("training split must contain both classes")
    if len(set(test.labels.tolist())) < 2:
        raise ConfigError("test split must contain both classes for bag AUC")

    tasks = [(ci, r, spec) for ci, spec in enumerate(cfg.classifiers)
             for r in range(cfg.repetitions)]
    t0 = time.perf_counter()
    jobs = [delayed(_run_replicate)(spec, replicate_seed(cfg.seed, ci, r), train, test,
                                    cfg.fraction, cfg.standardize) for ci, r, spec in tasks]
    if cfg.n_jobs == 1:
        results = [fn(*args, **kwargs) for fn, args, kwargs in jobs]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(jobs)
    if log:
        log(f"{len(tasks)} replicates in {time.perf_counter() - t0:.1f}s")

    entries = []
    for ci, spec in enumerate(cfg.classifiers):
        reps = results[ci * cfg.repetitions:(ci + 1) * cfg.repetitions]
        for r, rec in enumerate(reps):
            rec["replicate"] = r
        ok = [rec for rec in reps if rec["status"] == "ok"]
        entry = {"name": spec.name, "kind": spec.kind, "params": spec.params,
                 "n_ok": len(ok), "n_failed": len(reps) - len(ok)}
        if len(ok) >= 2:
            entry["status"] = "ok"
            entry.update(summarize_labelings([rec["instance_labels"] for rec in ok],
                                             [rec["auc"] for rec in ok]))
            entry["auc_per_replicate"] = [rec["auc"] for rec in ok]
        else:
            entry["status"] = "failed"
        entry["replicates"] = [_ordered_replicate(rec) for rec in reps]
        entries.append(entry)

    instance_index = [[b.id, k] for b in test.bags for k in range(len(b))]
    return StabilityReport(
        config=cfg.to_dict(),
        dataset=dataset.summary(),
        test_bag_ids=list(split.test_bag_ids),
        test_bag_labels=test.labels.tolist(),
        instance_index=instance_index,
        classifiers=entries,
        baseline=all_positive_baseline(test, cfg.repetitions),
        software={"milstab": __version__},
    )


def _ordered_replicate(rec: dict) -> dict:
    keys = ("replicate", "seed", "status", "error", "train_bag_ids", "auc", "diagnostics",
            "bag_scores", "instance_scores", "instance_labels")
    return {k: rec[k] for k in keys if k in rec}


# -- JSON with fixed float formatting -----------------------------------

def _format(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_format(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_format(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits; NaN as null."""
    return _format(obj)
