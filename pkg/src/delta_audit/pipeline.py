"""End-to-end audit orchestration.

``run_audit`` takes one declarative config and produces a ``DeltaReport``:
split the dataset, standardize on the training rows, train or attach the
two model versions, anchor every test sample to one reference class,
compute occlusion attributions under shared baselines, run the metric
suite on a stratified capped subset, and classify the update as benign,
behaviour-aligned, or risky.

Stage order is fixed; every stage failure is re-raised as an
:class:`AuditError` tagged with the stage name. Reports are deterministic:
rerunning the same config yields byte-identical JSON.
"""

from __future__ import annotations

import contextlib
import json
import math
import warnings as _warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import learners, scoring, suite
from .explainer import (
    Baseline,
    delta_attributions,
    grouped_occlusion_ratio,
    make_baseline,
    make_delta_closure,
    occlusion_attributions,
)
from .protocol import BridgeClient, BridgeProvider, BridgeTimeout, scaler_fingerprint

VERDICT_BENIGN = "benign"
VERDICT_BEHAVIOUR_ALIGNED = "behaviour_aligned"
VERDICT_RISKY = "risky"
VERDICT_UNCLASSIFIED = "unclassified"

STAGES = (
    "config",
    "dataset",
    "split",
    "standardize",
    "models",
    "anchors",
    "cap",
    "baselines",
    "attributions",
    "suite",
    "importance",
    "cohorts",
    "verdict",
)


class AuditError(RuntimeError):
    """An audit stage failed; ``stage`` names it, ``kind`` distinguishes
    bridge timeouts from everything else."""

    def __init__(self, stage: str, message: str, kind: str = "error"):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.kind = kind


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except AuditError:
        raise
    except BridgeTimeout as exc:
        raise AuditError(name, str(exc), kind="bridge-timeout") from exc
    except Exception as exc:
        raise AuditError(name, str(exc)) from exc


@dataclass(frozen=True)
class DatasetSource:
    kind: str  # embedded | csv
    name: str = ""
    path: str = ""
    label_column: str = "label"

    def load(self) -> data_mod.Dataset:
        if self.kind == "embedded":
            return data_mod.embedded_dataset(self.name)
        if self.kind == "csv":
            return data_mod.load_csv(self.path, self.label_column)
        raise AuditError("dataset", f"unknown dataset source kind {self.kind!r}")


@dataclass(frozen=True)
class ModelRef:
    kind: str  # builtin | bridge
    spec: learners.LearnerSpec | None = None
    command: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == "builtin":
            if self.spec is None:
                raise ValueError("builtin model reference needs a learner spec")
        elif self.kind == "bridge":
            if not self.command:
                raise ValueError("bridge model reference needs a command")
        else:
            raise ValueError(f"model kind must be builtin|bridge, got {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "builtin":
            return self.spec.family
        return "bridge"


@dataclass(frozen=True)
class VerdictThresholds:
    """Decision boundaries for the CI verdict.

    ``mag_q1``/``mag_median`` are absolute magnitude boundaries used when a
    single pair is audited; batch runs replace them with empirical
    quartiles over the batch.
    """

    bac_low: float = 0.2
    bac_high: float = 0.6
    rank_overlap_min: float = 0.9
    jsd_risky: float = 0.15
    dce_zero_tol: float = 1e-6
    mag_q1: float = 0.1
    mag_median: float = 1.0

    def __post_init__(self):
        if not self.bac_low < self.bac_high:
            raise ValueError("need bac_low < bac_high")
        for name in ("rank_overlap_min", "jsd_risky", "dce_zero_tol", "mag_q1", "mag_median"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AuditConfig:
    dataset: DatasetSource
    model_a: ModelRef
    model_b: ModelRef
    name: str = "audit"
    family: str = ""
    seed: int = 42
    test_fraction: float = 0.2
    sample_cap: int = 256
    baseline: str = "averaged"
    sigmas: tuple[float, ...] = (0.01, 0.05)
    stability_draws: int = 1
    group_k: int = 2
    group_mode: str = "scalar"
    top_k: int = 10
    perm_m: int = 10
    perm_repeats: int = 5
    anchor: str = "B"
    emit_s_vectors: bool = False
    bridge_timeout: float = 120.0
    thresholds: VerdictThresholds = field(default_factory=VerdictThresholds)

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")
        if self.baseline not in ("mean", "median", "averaged"):
            raise ValueError(f"baseline must be mean|median|averaged, got {self.baseline!r}")
        if self.anchor not in ("A", "B"):
            raise ValueError(f"anchor must be A or B, got {self.anchor!r}")
        if self.group_mode not in ("scalar", "revector"):
            raise ValueError(f"group_mode must be scalar|revector, got {self.group_mode!r}")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be positive")
        if min(self.group_k, self.top_k, self.perm_m, self.perm_repeats, self.stability_draws) < 1:
            raise ValueError("group_k, top_k, perm_m, perm_repeats, stability_draws must be >= 1")
        if not self.family:
            object.__setattr__(self, "family", self.model_b.label)


@dataclass
class DeltaReport:
    name: str
    family: str
    anchor: str
    config: dict
    n_train: int
    n_test: int
    n_capped: int
    accuracy_a: float
    accuracy_b: float
    fixes_count: int
    regressions_count: int
    metrics: suite.DeltaMetrics
    verdict: str
    verdict_context: dict
    model_tag_a: str
    model_tag_b: str
    top_features_b: list[int]
    test_predictions: dict
    per_sample: dict
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        m = self.metrics
        return {
            "name": self.name,
            "family": self.family,
            "anchor": self.anchor,
            "config": self.config,
            "split": {"n_train": self.n_train, "n_test": self.n_test, "n_capped": self.n_capped},
            "accuracy": {"a": self.accuracy_a, "b": self.accuracy_b},
            "cohorts": {"fixes": self.fixes_count, "regressions": self.regressions_count},
            "metrics": {
                "mag_l1": m.mag_l1,
                "topk10": m.topk10,
                "entropy": m.entropy,
                "rank_overlap10": m.rank_overlap10,
                "rank_overlap10_median": m.rank_overlap10_median,
                "jsd": m.jsd,
                "dce": m.dce,
                "bac": m.bac,
                "codf_fixes": m.codf_fixes,
                "codf_regressions": m.codf_regressions,
                "stability": {repr(s): v for s, v in m.stability.items()},
                "baseline_sensitivity": m.baseline_sensitivity,
                "group_ratio": m.group_ratio,
            },
            "verdict": self.verdict,
            "verdict_context": self.verdict_context,
            "model_tags": {"a": self.model_tag_a, "b": self.model_tag_b},
            "top_features_b": self.top_features_b,
            "test_predictions": self.test_predictions,
            "warnings": self.warnings,
        }


def stratified_cap(y: np.ndarray, cap: int) -> np.ndarray:
    """Positions of a stratified subset of at most ``cap`` rows, allocated
    proportionally per class (largest remainder, ties to the lower class)."""
    y = np.asarray(y)
    n = y.shape[0]
    if n <= cap:
        return np.arange(n)
    classes, counts = np.unique(y, return_counts=True)
    quotas = counts * cap / n
    base = np.floor(quotas).astype(int)
    frac = quotas - base
    leftover = cap - int(base.sum())
    order = np.lexsort((classes, -frac))
    for i in order[:leftover]:
        base[i] += 1
    keep: list[int] = []
    for cls, k in zip(classes, base):
        keep.extend(np.flatnonzero(y == cls)[:k].tolist())
    return np.array(sorted(keep))


def permutation_importance_scores(
    model: scoring.ScoreModel,
    X_test: np.ndarray,
    y_test: np.ndarray,
    repeats: int = 5,
    seed: int = 0,
) -> np.ndarray:
    """Per-feature mean accuracy drop when that column is permuted."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X_test, dtype=np.float64)
    y = np.asarray(y_test)
    n, d = X.shape
    base_acc = float((model.predict(X) == y).mean())
    children = np.random.SeedSequence(seed).spawn(repeats * d)
    importances = np.zeros(d)
    for j in range(d):
        drops = []
        for r in range(repeats):
            rng = np.random.default_rng(children[r * d + j])
            permuted = X.copy()
            permuted[:, j] = X[rng.permutation(n), j]
            drops.append(base_acc - float((model.predict(permuted) == y).mean()))
        importances[j] = math.fsum(drops) / repeats
    return importances


def permutation_importance(
    model: scoring.ScoreModel,
    X_test: np.ndarray,
    y_test: np.ndarray,
    m: int = 10,
    repeats: int = 5,
    seed: int = 0,
) -> list[int]:
    """Top-m features ranked by permutation importance; ties go to the
    lower feature index."""
    if m < 1:
        raise ValueError("m must be >= 1")
    importances = permutation_importance_scores(model, X_test, y_test, repeats, seed)
    d = importances.shape[0]
    order = np.lexsort((np.arange(d), -importances))
    return [int(j) for j in order[: min(m, d)]]


def cohorts(pred_a: np.ndarray, pred_b: np.ndarray, y_true: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Fixes: rows B newly classifies correctly. Regressions: rows B newly
    misclassifies."""
    pred_a = np.asarray(pred_a)
    pred_b = np.asarray(pred_b)
    y_true = np.asarray(y_true)
    if not (pred_a.shape == pred_b.shape == y_true.shape):
        raise ValueError("prediction and label arrays must align")
    fixes = np.flatnonzero((pred_b == y_true) & (pred_a != y_true))
    regressions = np.flatnonzero((pred_a == y_true) & (pred_b != y_true))
    return tuple(int(i) for i in fixes), tuple(int(i) for i in regressions)


def classify_verdict(
    metrics: suite.DeltaMetrics,
    thresholds: VerdictThresholds,
    mag_quartiles: tuple[float, float] | None = None,
) -> tuple[str, list[str]]:
    """Threshold verdict; risky takes precedence over benign over
    behaviour-aligned, so a contradictory profile fails safe."""
    q1, med = mag_quartiles if mag_quartiles is not None else (thresholds.mag_q1, thresholds.mag_median)
    notes: list[str] = []
    mag = metrics.mag_l1
    if metrics.jsd > thresholds.jsd_risky:
        return VERDICT_RISKY, notes
    if metrics.bac is None:
        # no behavioural variance: an update that changed nothing is benign,
        # anything else cannot be coupled to behaviour and stays unclassified
        if (
            mag <= thresholds.dce_zero_tol
            and metrics.rank_overlap10 > thresholds.rank_overlap_min
            and metrics.dce <= thresholds.dce_zero_tol
        ):
            return VERDICT_BENIGN, notes
        notes.append("bac undefined (zero variance in a series); verdict unclassified")
        return VERDICT_UNCLASSIFIED, notes
    if metrics.bac < thresholds.bac_low and mag >= med:
        return VERDICT_RISKY, notes
    if (
        metrics.bac < thresholds.bac_low
        and mag <= q1
        and metrics.rank_overlap10 > thresholds.rank_overlap_min
        and metrics.dce <= thresholds.dce_zero_tol
    ):
        return VERDICT_BENIGN, notes
    if metrics.bac > thresholds.bac_high and mag >= med:
        return VERDICT_BEHAVIOUR_ALIGNED, notes
    return VERDICT_UNCLASSIFIED, notes


def _attach_model(ref: ModelRef, X_train, y_train, standardizer, timeout, caught: list[str]):
    """Returns (score_model, client_or_None, tag)."""
    if ref.kind == "builtin":
        with _warnings.catch_warnings(record=True) as grabbed:
            _warnings.simplefilter("always")
            trained = learners.fit(ref.spec, X_train, y_train)
        caught.extend(str(w.message) for w in grabbed)
        return scoring.builtin_score_model(trained), None, ref.spec.family
    client = BridgeClient(list(ref.command), timeout=timeout)
    try:
        caps = client.handshake()
    except Exception:
        client.close()
        raise
    provider = BridgeProvider(client, standardizer=standardizer)
    return scoring.ScoreModel(provider), client, caps.model_tag


def run_audit(config: AuditConfig, config_echo: dict | None = None) -> DeltaReport:
    report_warnings: list[str] = []
    clients: list[BridgeClient] = []
    try:
        with _stage("dataset"):
            ds = config.dataset.load()
        with _stage("split"):
            split = data_mod.stratified_split(ds, config.test_fraction, config.seed)
        with _stage("standardize"):
            std = data_mod.fit_standardizer(ds, split)
            for j in std.constant_features:
                report_warnings.append(
                    f"feature {ds.feature_names[j]!r} is constant on the training split; std floored"
                )
            Z = std.transform(ds.X)
            train_idx = np.array(split.train)
            test_idx = np.array(split.test)
            Z_train, y_train = Z[train_idx], ds.y[train_idx]
            Z_test, y_test = Z[test_idx], ds.y[test_idx]
        with _stage("models"):
            model_a, client_a, tag_a = _attach_model(
                config.model_a, Z_train, y_train, std, config.bridge_timeout, report_warnings
            )
            if client_a is not None:
                clients.append(client_a)
            model_b, client_b, tag_b = _attach_model(
                config.model_b, Z_train, y_train, std, config.bridge_timeout, report_warnings
            )
            if client_b is not None:
                clients.append(client_b)
            fp_a, fp_b = scaler_fingerprint(tag_a), scaler_fingerprint(tag_b)
            if fp_a is not None and fp_b is not None and fp_a != fp_b:
                raise RuntimeError(
                    f"bridge endpoints disagree on preprocessing: scaler {fp_a} vs {fp_b}"
                )
        with _stage("anchors"):
            anchor_model = model_b if config.anchor == "B" else model_a
            anchors_test = scoring.anchor_classes(anchor_model, Z_test)
            pred_a = model_a.predict(Z_test)
            pred_b = model_b.predict(Z_test)
            accuracy_a = float((pred_a == y_test).mean())
            accuracy_b = float((pred_b == y_test).mean())
        with _stage("cap"):
            cap_pos = stratified_cap(y_test, config.sample_cap)
            Zc = Z_test[cap_pos]
            yc = y_test[cap_pos]
            anchors = anchors_test[cap_pos]
            pred_a_c = pred_a[cap_pos]
            pred_b_c = pred_b[cap_pos]
            if cap_pos.shape[0] < y_test.shape[0]:
                report_warnings.append(
                    f"suite metrics computed on a stratified {cap_pos.shape[0]}-row subset; "
                    f"accuracies use all {y_test.shape[0]} test rows"
                )
        with _stage("baselines"):
            kinds = {"mean", "median", config.baseline}
            baselines = {kind: make_baseline(Z_train, kind) for kind in kinds}
        with _stage("attributions"):
            attr = {
                kind: (
                    occlusion_attributions(model_a, Zc, anchors, baselines[kind]),
                    occlusion_attributions(model_b, Zc, anchors, baselines[kind]),
                )
                for kind in sorted(kinds)
            }
            deltas = {kind: delta_attributions(a, b) for kind, (a, b) in attr.items()}
            main_delta = deltas[config.baseline]
            attr_a_main, attr_b_main = attr[config.baseline]
            score_a = scoring.anchored_score(model_a, Zc, anchors)
            score_b = scoring.anchored_score(model_b, Zc, anchors)
            dfs = scoring.delta_f(score_a, score_b)
        with _stage("suite"):
            overlap_mean, overlap_median = suite.rank_overlap(attr_a_main, attr_b_main, config.top_k)
            stability = suite.delta_stability(
                make_delta_closure(model_a, model_b, anchors, baselines[config.baseline]),
                Zc,
                sigmas=config.sigmas,
                draws_per_sample=config.stability_draws,
                seed=config.seed,
            )
            group_ratio = grouped_occlusion_ratio(
                model_a,
                model_b,
                Zc,
                anchors,
                baselines[config.baseline],
                main_delta,
                k=config.group_k,
                mode=config.group_mode,
            )
        with _stage("importance"):
            top_features = permutation_importance(
                model_b, Zc, yc, m=config.perm_m, repeats=config.perm_repeats, seed=config.seed
            )
        with _stage("cohorts"):
            fixes, regressions = cohorts(pred_a_c, pred_b_c, yc)
            codf_fixes, codf_regressions = suite.codf(main_delta, top_features, fixes, regressions)
        metrics = suite.DeltaMetrics(
            mag_l1=suite.delta_magnitude(main_delta),
            topk10=suite.topk_concentration(main_delta, config.top_k),
            entropy=suite.delta_entropy(main_delta),
            rank_overlap10=overlap_mean,
            rank_overlap10_median=overlap_median,
            jsd=suite.jsd(attr_a_main, attr_b_main),
            dce=suite.dce(main_delta, dfs),
            bac=suite.bac(main_delta, dfs),
            codf_fixes=codf_fixes,
            codf_regressions=codf_regressions,
            stability=stability,
            baseline_sensitivity=suite.baseline_sensitivity(deltas["mean"], deltas["median"]),
            group_ratio=group_ratio,
        )
        with _stage("verdict"):
            verdict, notes = classify_verdict(metrics, config.thresholds)
            report_warnings.extend(notes)
        per_sample = {
            "position": list(range(len(cap_pos))),
            "dataset_row": [int(test_idx[p]) for p in cap_pos],
            "y_true": yc.tolist(),
            "anchor_class": anchors.tolist(),
            "pred_a": pred_a_c.tolist(),
            "pred_b": pred_b_c.tolist(),
            "delta_f": dfs.tolist(),
            "l1_delta": np.abs(main_delta.values).sum(axis=1).tolist(),
            "row_sum": [math.fsum(row) for row in main_delta.values],
            "rank_overlap": suite.rank_overlap_rows(attr_a_main, attr_b_main, config.top_k).tolist(),
            "is_fix": [int(i in set(fixes)) for i in range(len(cap_pos))],
            "is_regression": [int(i in set(regressions)) for i in range(len(cap_pos))],
        }
        if config.emit_s_vectors:
            mags = np.abs(main_delta.values)
            totals = mags.sum(axis=1, keepdims=True)
            s = np.divide(mags, totals, out=np.zeros_like(mags), where=totals > 0)
            for j in range(s.shape[1]):
                per_sample[f"s_{j}"] = s[:, j].tolist()
        return DeltaReport(
            name=config.name,
            family=config.family,
            anchor=config.anchor,
            config=config_echo if config_echo is not None else {},
            n_train=int(train_idx.shape[0]),
            n_test=int(test_idx.shape[0]),
            n_capped=int(cap_pos.shape[0]),
            accuracy_a=accuracy_a,
            accuracy_b=accuracy_b,
            fixes_count=len(fixes),
            regressions_count=len(regressions),
            metrics=metrics,
            verdict=verdict,
            verdict_context={
                "source": "config",
                "mag_q1": config.thresholds.mag_q1,
                "mag_median": config.thresholds.mag_median,
            },
            model_tag_a=tag_a,
            model_tag_b=tag_b,
            top_features_b=top_features,
            test_predictions={
                "y": y_test.tolist(),
                "a": pred_a.tolist(),
                "b": pred_b.tolist(),
            },
            per_sample=per_sample,
            warnings=report_warnings,
        )
    finally:
        for client in clients:
            client.close()


@dataclass
class BatchFailure:
    name: str
    stage: str
    kind: str
    message: str


@dataclass
class BatchResult:
    reports: list[DeltaReport]
    failures: list[BatchFailure]
    mag_quartiles: tuple[float, float] | None
    aggregate_rows: list[dict]


def run_batch(configs, config_echoes=None) -> BatchResult:
    """Run each audit, isolate failures, re-classify verdicts against the
    batch's magnitude quartiles, and aggregate mag/dce/bac per family."""
    configs = list(configs)
    if not configs:
        raise ValueError("need at least one audit config")
    echoes = list(config_echoes) if config_echoes is not None else [None] * len(configs)
    completed: list[tuple[AuditConfig, DeltaReport]] = []
    failures: list[BatchFailure] = []
    for cfg, echo in zip(configs, echoes):
        try:
            completed.append((cfg, run_audit(cfg, config_echo=echo)))
        except AuditError as exc:
            failures.append(BatchFailure(name=cfg.name, stage=exc.stage, kind=exc.kind, message=str(exc)))
    reports = [report for _, report in completed]
    quartiles = None
    if reports:
        mags = np.array([r.metrics.mag_l1 for r in reports])
        quartiles = (float(np.percentile(mags, 25)), float(np.percentile(mags, 50)))
        for cfg, report in completed:
            verdict, notes = classify_verdict(report.metrics, cfg.thresholds, mag_quartiles=quartiles)
            report.verdict = verdict
            report.verdict_context = {
                "source": "batch",
                "mag_q1": quartiles[0],
                "mag_median": quartiles[1],
            }
            for note in notes:
                if note not in report.warnings:
                    report.warnings.append(note)
    aggregate_rows = _aggregate_by_family(reports)
    return BatchResult(reports=reports, failures=failures, mag_quartiles=quartiles, aggregate_rows=aggregate_rows)


def _aggregate_by_family(reports) -> list[dict]:
    rows = []
    for family in sorted({r.family for r in reports}):
        group = [r for r in reports if r.family == family]
        mags = [r.metrics.mag_l1 for r in group]
        dces = [r.metrics.dce for r in group]
        bacs = [r.metrics.bac for r in group if r.metrics.bac is not None]
        row = {
            "family": family,
            "count": len(group),
            "mag_l1_mean": float(np.mean(mags)),
            "mag_l1_std": float(np.std(mags)),
            "dce_mean": float(np.mean(dces)),
            "dce_std": float(np.std(dces)),
            "bac_mean": float(np.mean(bacs)) if bacs else None,
            "bac_std": float(np.std(bacs)) if bacs else None,
        }
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

METRICS_CSV_COLUMNS = (
    "name",
    "family",
    "verdict",
    "accuracy_a",
    "accuracy_b",
    "n_test",
    "n_capped",
    "fixes",
    "regressions",
    "mag_l1",
    "topk10",
    "entropy",
    "rank_overlap10",
    "rank_overlap10_median",
    "jsd",
    "dce",
    "bac",
    "codf_fixes",
    "codf_regressions",
    "baseline_sensitivity",
    "group_ratio",
)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv_header(sigmas) -> list[str]:
    return list(METRICS_CSV_COLUMNS) + [f"stability_{repr(float(s))}" for s in sigmas]


def metrics_csv_row(report: DeltaReport) -> list[str]:
    m = report.metrics
    cells = [
        report.name,
        report.family,
        report.verdict,
        _csv_cell(report.accuracy_a),
        _csv_cell(report.accuracy_b),
        str(report.n_test),
        str(report.n_capped),
        str(report.fixes_count),
        str(report.regressions_count),
        _csv_cell(m.mag_l1),
        _csv_cell(m.topk10),
        _csv_cell(m.entropy),
        _csv_cell(m.rank_overlap10),
        _csv_cell(m.rank_overlap10_median),
        _csv_cell(m.jsd),
        _csv_cell(m.dce),
        _csv_cell(m.bac),
        _csv_cell(m.codf_fixes),
        _csv_cell(m.codf_regressions),
        _csv_cell(m.baseline_sensitivity),
        _csv_cell(m.group_ratio),
    ]
    cells.extend(_csv_cell(v) for v in m.stability.values())
    return cells


def write_report_files(report: DeltaReport, out_dir, overwrite: bool = False) -> dict[str, Path]:
    """Write report.json, metrics.csv, and per_sample.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "metrics": out / "metrics.csv",
        "per_sample": out / "per_sample.csv",
    }
    if not overwrite:
        existing = [str(p) for p in paths.values() if p.exists()]
        if existing:
            raise FileExistsError(f"refusing to overwrite {existing}; pass overwrite/--force")
    payload = report.to_json_dict()
    payload["files"] = {"metrics": "metrics.csv", "per_sample": "per_sample.csv"}
    paths["report"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    sigmas = list(report.metrics.stability.keys())
    lines = [",".join(metrics_csv_header(sigmas))]
    lines.append(",".join(metrics_csv_row(report)))
    paths["metrics"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    columns = list(report.per_sample.keys())
    rows = zip(*(report.per_sample[c] for c in columns))
    body = [",".join(columns)]
    for row in rows:
        body.append(",".join(_csv_cell(v) for v in row))
    paths["per_sample"].write_text("\n".join(body) + "\n", encoding="utf-8")
    return paths


def write_batch_files(result: BatchResult, out_dir, overwrite: bool = False) -> dict[str, Path]:
    """Write one metrics.csv row per audit plus aggregate_by_family.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    aggregate_path = out / "aggregate_by_family.csv"
    failures_path = out / "failures.csv"
    if not overwrite:
        existing = [str(p) for p in (metrics_path, aggregate_path) if p.exists()]
        if existing:
            raise FileExistsError(f"refusing to overwrite {existing}; pass overwrite/--force")
    paths = {"metrics": metrics_path, "aggregate": aggregate_path}
    if result.reports:
        sigmas = list(result.reports[0].metrics.stability.keys())
        lines = [",".join(metrics_csv_header(sigmas))]
        for report in result.reports:
            lines.append(",".join(metrics_csv_row(report)))
        metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    agg_columns = ("family", "count", "mag_l1_mean", "mag_l1_std", "dce_mean", "dce_std", "bac_mean", "bac_std")
    lines = [",".join(agg_columns)]
    for row in result.aggregate_rows:
        lines.append(",".join(_csv_cell(row[c]) for c in agg_columns))
    aggregate_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if result.failures:
        lines = ["name,stage,kind,message"]
        for f in result.failures:
            msg = f.message.replace(",", ";").replace("\n", " ")
            lines.append(f"{f.name},{f.stage},{f.kind},{msg}")
        failures_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths["failures"] = failures_path
    return paths
