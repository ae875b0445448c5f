"""Shipped A/B audit presets.

Twelve built-in presets cover the three update regimes per learner family
(regularization/size change, inductive-bias change, cosmetic change), plus
three kernel-SVM templates that run through an external bridge server.
Bridge templates assume the companion ``delta_audit_bridge`` package; export
the dataset it trains on first (see the template's dataset path).
"""

from __future__ import annotations

from dataclasses import dataclass

from .learners import LearnerSpec
from .pipeline import AuditConfig, DatasetSource, ModelRef

_EMBEDDED = DatasetSource(kind="embedded", name="three_class_interactions")


@dataclass(frozen=True)
class Preset:
    name: str
    family: str
    kind: str  # builtin | bridge-template
    knobs: str
    a_params: dict
    b_params: dict

    def build(self) -> AuditConfig:
        if self.kind == "builtin":
            return AuditConfig(
                name=self.name,
                family=self.family,
                dataset=_EMBEDDED,
                model_a=ModelRef(kind="builtin", spec=LearnerSpec(self.family, dict(self.a_params))),
                model_b=ModelRef(kind="builtin", spec=LearnerSpec(self.family, dict(self.b_params))),
            )
        return AuditConfig(
            name=self.name,
            family=self.family,
            dataset=DatasetSource(kind="csv", path="breast_cancer.csv", label_column="label"),
            model_a=ModelRef(kind="bridge", command=tuple(self.a_params["command"])),
            model_b=ModelRef(kind="bridge", command=tuple(self.b_params["command"])),
        )


def _svc_command(role: str, params_json: str) -> tuple[str, ...]:
    return (
        "python3",
        "-m",
        "delta_audit_bridge",
        "serve",
        "--family",
        "svc",
        "--params",
        params_json,
        "--dataset",
        "breast_cancer",
        "--role",
        role,
        "--scaler-sidecar",
        "scaler_sidecar.json",
    )


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset("logreg-P1", "logreg", "builtin", "L2 strength 1.0 -> 10.0 (tighter regularization)",
               {"l2_strength": 1.0}, {"l2_strength": 10.0}),
        Preset("logreg-P2", "logreg", "builtin", "L2 strength 1.0 -> 0.1 (looser regularization)",
               {"l2_strength": 1.0}, {"l2_strength": 0.1}),
        Preset("logreg-P3", "logreg", "builtin", "max_iterations 500 -> 800 (optimizer budget only)",
               {"max_iterations": 500}, {"max_iterations": 800}),
        Preset("knn-P1", "knn", "builtin", "k 5 -> 10 (wider neighbourhood)",
               {"k": 5}, {"k": 10}),
        Preset("knn-P2", "knn", "builtin", "uniform -> distance weighting (k=5)",
               {"k": 5, "weighting": "uniform"}, {"k": 5, "weighting": "distance"}),
        Preset("knn-P3", "knn", "builtin", "scan order forward -> reverse (cosmetic; predictions identical)",
               {"k": 5, "scan_order": "forward"}, {"k": 5, "scan_order": "reverse"}),
        Preset("forest-P1", "forest", "builtin", "n_trees 50 -> 150 (ensemble size)",
               {"n_trees": 50, "seed": 0}, {"n_trees": 150, "seed": 0}),
        Preset("forest-P2", "forest", "builtin", "max_depth none -> 1 (inductive bias)",
               {"n_trees": 60, "max_depth": None, "seed": 0}, {"n_trees": 60, "max_depth": 1, "seed": 0}),
        Preset("forest-P3", "forest", "builtin", "feature_rule sqrt -> log2 (split candidates)",
               {"n_trees": 60, "feature_rule": "sqrt", "seed": 0}, {"n_trees": 60, "feature_rule": "log2", "seed": 0}),
        Preset("gbstumps-P1", "gbstumps", "builtin", "learning_rate 0.1 -> 0.05 (n_rounds=60)",
               {"n_rounds": 60, "learning_rate": 0.1}, {"n_rounds": 60, "learning_rate": 0.05}),
        Preset("gbstumps-P2", "gbstumps", "builtin", "n_rounds 40 -> 80 (boosting budget)",
               {"n_rounds": 40}, {"n_rounds": 80}),
        Preset("gbstumps-P3", "gbstumps", "builtin", "max_depth 1 -> 2 (inductive bias)",
               {"n_rounds": 60, "max_depth": 1}, {"n_rounds": 60, "max_depth": 2}),
        Preset("svc-P1", "svc", "bridge-template", "rbf kernel -> linear kernel (C=1)",
               {"command": _svc_command("A", '{"kernel":"rbf","C":1.0,"gamma":"scale"}')},
               {"command": _svc_command("B", '{"kernel":"linear","C":1.0}')}),
        Preset("svc-P2", "svc", "bridge-template", "gamma scale -> auto (cosmetic on standardized data)",
               {"command": _svc_command("A", '{"kernel":"rbf","C":1.0,"gamma":"scale"}')},
               {"command": _svc_command("B", '{"kernel":"rbf","C":1.0,"gamma":"auto"}')}),
        Preset("svc-P3", "svc", "bridge-template", "poly(3) kernel -> rbf kernel (C=1)",
               {"command": _svc_command("A", '{"kernel":"poly","degree":3,"C":1.0}')},
               {"command": _svc_command("B", '{"kernel":"rbf","C":1.0,"gamma":"scale"}')}),
    ]
}


def builtin_presets() -> list[Preset]:
    return [p for p in PRESETS.values() if p.kind == "builtin"]


def bridge_templates() -> list[Preset]:
    return [p for p in PRESETS.values() if p.kind == "bridge-template"]
