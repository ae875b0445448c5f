"""Audit config files: a flat key/value format with sections.

Schema (INI syntax, all keys optional unless noted):

    [audit]
    name = logreg-P1          ; label used in reports
    family = logreg           ; aggregation label, defaults to model_b's family
    seed = 42
    test_fraction = 0.2
    sample_cap = 256
    baseline = averaged       ; mean | median | averaged
    sigmas = 0.01, 0.05
    stability_draws = 1
    group_k = 2
    group_mode = scalar       ; scalar | revector
    top_k = 10
    perm_m = 10
    perm_repeats = 5
    anchor = B                ; B | A
    emit_s_vectors = false
    bridge_timeout = 120

    [dataset]                 ; required
    source = embedded         ; embedded | csv
    name = two_class_linear   ; embedded source
    ;path = data.csv          ; csv source
    ;label_column = label

    [model_a]                 ; required, same shape as [model_b]
    kind = builtin            ; builtin | bridge
    family = logreg           ; builtin: learner family, other keys are
    l2_strength = 1.0         ; its hyperparameters
    ;command = python3 -m ... ; bridge: server command line (shlex-split)

    [thresholds]
    bac_low = 0.2
    bac_high = 0.6
    rank_overlap_min = 0.9
    jsd_risky = 0.15
    dce_zero_tol = 1e-6
    mag_q1 = 0.1              ; absolute magnitude boundaries for
    mag_median = 1.0          ; single-pair verdicts

Values parse as none/true/false, int, float, then string, in that order.
``--set section.key=value`` overrides any entry.
"""

from __future__ import annotations

import configparser
import shlex
from pathlib import Path

from .learners import LearnerSpec
from .pipeline import AuditConfig, DatasetSource, ModelRef, VerdictThresholds


class ConfigError(ValueError):
    """Unusable audit config file or override."""


def _parse_value(text: str):
    lowered = text.strip().lower()
    if lowered in ("none", "null"):
        return None
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text.strip()


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _model_ref(section: dict, label: str) -> ModelRef:
    kind = section.pop("kind", "builtin")
    if kind == "builtin":
        family = section.pop("family", None)
        if family is None:
            raise ConfigError(f"[{label}] builtin model needs a family")
        return ModelRef(kind="builtin", spec=LearnerSpec(family=str(family), params=section))
    if kind == "bridge":
        command = section.pop("command", None)
        if not command:
            raise ConfigError(f"[{label}] bridge model needs a command")
        if section:
            raise ConfigError(f"[{label}] unexpected keys for a bridge model: {sorted(section)}")
        return ModelRef(kind="bridge", command=tuple(shlex.split(str(command))))
    raise ConfigError(f"[{label}] kind must be builtin|bridge, got {kind!r}")


def parse_config(parser: configparser.ConfigParser) -> AuditConfig:
    sections = {name: {k: _parse_value(v) for k, v in parser[name].items()} for name in parser.sections()}
    if "dataset" not in sections:
        raise ConfigError("missing [dataset] section")
    for model_key in ("model_a", "model_b"):
        if model_key not in sections:
            raise ConfigError(f"missing [{model_key}] section")
    ds = sections["dataset"]
    source = ds.get("source", "embedded")
    dataset = DatasetSource(
        kind=str(source),
        name=str(ds.get("name", "")),
        path=str(ds.get("path", "")),
        label_column=str(ds.get("label_column", "label")),
    )
    model_a = _model_ref(dict(sections["model_a"]), "model_a")
    model_b = _model_ref(dict(sections["model_b"]), "model_b")
    audit = dict(sections.get("audit", {}))
    thresholds_kv = dict(sections.get("thresholds", {}))
    kwargs = {}
    if "sigmas" in audit:
        raw = audit.pop("sigmas")
        parts = [p for p in str(raw).split(",") if p.strip()]
        kwargs["sigmas"] = tuple(float(p) for p in parts)
    for key in (
        "name",
        "family",
        "seed",
        "test_fraction",
        "sample_cap",
        "baseline",
        "stability_draws",
        "group_k",
        "group_mode",
        "top_k",
        "perm_m",
        "perm_repeats",
        "anchor",
        "emit_s_vectors",
        "bridge_timeout",
    ):
        if key in audit:
            kwargs[key] = audit.pop(key)
    if audit:
        raise ConfigError(f"unknown [audit] keys: {sorted(audit)}")
    try:
        thresholds = VerdictThresholds(**thresholds_kv)
    except TypeError as exc:
        raise ConfigError(f"bad [thresholds] section: {exc}") from None
    try:
        return AuditConfig(dataset=dataset, model_a=model_a, model_b=model_b, thresholds=thresholds, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=()) -> AuditConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with path.open(encoding="utf-8") as fh:
        parser.read_file(fh)
    apply_overrides(parser, overrides)
    return parse_config(parser)


def apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override key {target!r} must be section.key")
        section, key = target.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), key.strip(), value.strip())


def config_to_sections(cfg: AuditConfig) -> dict[str, dict[str, str]]:
    audit = {
        "name": cfg.name,
        "family": cfg.family,
        "seed": cfg.seed,
        "test_fraction": cfg.test_fraction,
        "sample_cap": cfg.sample_cap,
        "baseline": cfg.baseline,
        "sigmas": ", ".join(repr(float(s)) for s in cfg.sigmas),
        "stability_draws": cfg.stability_draws,
        "group_k": cfg.group_k,
        "group_mode": cfg.group_mode,
        "top_k": cfg.top_k,
        "perm_m": cfg.perm_m,
        "perm_repeats": cfg.perm_repeats,
        "anchor": cfg.anchor,
        "emit_s_vectors": cfg.emit_s_vectors,
        "bridge_timeout": cfg.bridge_timeout,
    }
    dataset = {"source": cfg.dataset.kind}
    if cfg.dataset.kind == "embedded":
        dataset["name"] = cfg.dataset.name
    else:
        dataset["path"] = cfg.dataset.path
        dataset["label_column"] = cfg.dataset.label_column
    sections = {"audit": audit, "dataset": dataset}
    for key, ref in (("model_a", cfg.model_a), ("model_b", cfg.model_b)):
        if ref.kind == "builtin":
            entry = {"kind": "builtin", "family": ref.spec.family}
            entry.update(ref.spec.params)
        else:
            entry = {"kind": "bridge", "command": shlex.join(ref.command)}
        sections[key] = entry
    sections["thresholds"] = {
        "bac_low": cfg.thresholds.bac_low,
        "bac_high": cfg.thresholds.bac_high,
        "rank_overlap_min": cfg.thresholds.rank_overlap_min,
        "jsd_risky": cfg.thresholds.jsd_risky,
        "dce_zero_tol": cfg.thresholds.dce_zero_tol,
        "mag_q1": cfg.thresholds.mag_q1,
        "mag_median": cfg.thresholds.mag_median,
    }
    return {
        name: {k: _format_value(v) for k, v in body.items()}
        for name, body in sections.items()
    }


def save_config(cfg: AuditConfig, path) -> None:
    parser = configparser.ConfigParser()
    for name, body in config_to_sections(cfg).items():
        parser[name] = body
    with Path(path).open("w", encoding="utf-8") as fh:
        parser.write(fh)


def config_to_dict(cfg: AuditConfig) -> dict:
    """JSON-safe echo of the fully resolved config, as stored in reports."""
    sections = config_to_sections(cfg)
    return {name: dict(body) for name, body in sections.items()}
