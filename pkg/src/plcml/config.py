"""Experiment configuration: schema, defaults, overrides and validation.

A config is a JSON object with global keys (``seed``, ``output_dir``,
``threads``) and one section per experiment.  Missing keys take their
defaults; unknown keys and invalid values are reported together, each with
its dotted key path.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Field:
    default: object
    check: object  # value -> error message or None
    doc: str


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def integer(lo=None, hi=None):
    def check(v):
        if not _is_int(v):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None
    return check


def number(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if not _is_num(v):
            return "must be a number"
        if lo is not None and (v < lo or (lo_open and v == lo)):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v > hi or (hi_open and v == hi)):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None
    return check


def optional(inner):
    return lambda v: None if v is None else inner(v)


def choice(*options):
    return lambda v: None if v in options else f"must be one of {list(options)}"


def string(v):
    return None if isinstance(v, str) and v else "must be a non-empty string"


def listof(inner, min_len=0, max_len=None):
    def check(v):
        if not isinstance(v, list):
            return "must be a list"
        if len(v) < min_len or (max_len is not None and len(v) > max_len):
            return f"must have between {min_len} and {max_len or 'any'} entries"
        for item in v:
            err = inner(item)
            if err:
                return f"entries {err}"
        return None
    return check


def ordered_pair(inner):
    def check(v):
        err = listof(inner, 2, 2)(v)
        if err:
            return err
        return None if v[0] <= v[1] else "must be [low, high] with low <= high"
    return check


GLOBAL = {
    "seed": Field(0, integer(0, 2 ** 64 - 1), "root seed of every random stream"),
    "output_dir": Field("out", string, "artifacts go to <output_dir>/<subcommand>/"),
    "threads": Field(1, integer(1), "BLAS thread cap"),
}

SECTIONS = {
    "channel": {
        "source": Field("multipath", choice("multipath", "tl"), "top-down multipath or random-tree TL model"),
        "n_responses": Field(100, integer(1), "responses to generate"),
        "f_start": Field(2e6, number(0, lo_open=True), "first frequency bin (Hz)"),
        "f_stop": Field(86e6, number(0, lo_open=True), "last frequency bin (Hz)"),
        "n_bins": Field(256, integer(2), "frequency bins"),
        "n_nodes": Field(20, integer(2), "tl: nodes per random tree"),
        "area_side": Field(1000.0, number(0, lo_open=True), "tl: square side (m)"),
        "avg_edge_len": Field(None, optional(number(0, lo_open=True)), "tl: mean cable length (m); null keeps the geometric lengths"),
    },
    "noise-cluster": {
        "slots_per_class": Field(40, integer(2), "slots per planted noise environment"),
        "slot_len": Field(1024, integer(64), "samples per slot"),
        "sample_rate": Field(1e6, number(0, lo_open=True), "Hz"),
        "som_epochs": Field(50, integer(1), "SOM training epochs per grid size"),
        "freq_range": Field([50e3, 150e3], ordered_pair(number(0, lo_open=True)), "spectral feature band (Hz)"),
        "burg_order": Field(16, integer(1), "AR order of the Burg PSD"),
    },
    "gan": {
        "corpus_size": Field(1000, integer(1), "multipath responses in the training corpus"),
        "latent_dim": Field(16, integer(1), "generator input width"),
        "generator_hidden": Field([64, 64], listof(integer(1), 1), "generator hidden widths"),
        "discriminator_hidden": Field([64], listof(integer(1), 1), "discriminator hidden widths"),
        "epochs": Field(300, integer(0), "training epochs"),
        "batch_size": Field(64, integer(1), "minibatch size"),
        "lr_generator": Field(1e-4, number(0, lo_open=True), "generator Adam rate"),
        "lr_discriminator": Field(4e-4, number(0, lo_open=True), "discriminator Adam rate"),
        "n_generate": Field(1000, integer(1), "responses generated for the report"),
    },
    "ae-ser": {
        "m": Field(4, integer(2), "messages"),
        "n": Field(1, integer(1), "channel uses per message"),
        "encoder_hidden": Field([32], listof(integer(1)), "encoder hidden widths"),
        "decoder_hidden": Field([32], listof(integer(1)), "decoder hidden widths"),
        "channel_taps": Field([], listof(number()), "FIR channel taps; empty means AWGN only"),
        "normalization": Field("avg_power", choice("avg_power", "per_symbol"), "power constraint"),
        "train_ebn0_db": Field(8.0, number(), "training Eb/N0 (dB)"),
        "epochs": Field(40, integer(1), "training epochs"),
        "steps_per_epoch": Field(50, integer(1), "minibatches per epoch"),
        "batch_size": Field(256, integer(1), "minibatch size"),
        "learning_rate": Field(5e-3, number(0, lo_open=True), "Adam rate"),
        "ebn0_db": Field([0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0], listof(number(), 1), "evaluation points (dB)"),
        "trials": Field(100000, integer(1), "Monte-Carlo messages per point"),
    },
    "route": {
        "n_topologies": Field(100, integer(1), "training deployments"),
        "node_range": Field([100, 175], ordered_pair(integer(2)), "training node counts"),
        "problems_per_topology": Field(50, integer(1), "source/destination pairs per deployment"),
        "area_range": Field([800.0, 1200.0], ordered_pair(number(0, lo_open=True)), "square side range (m)"),
        "min_capacity": Field(100e6, number(0, lo_open=True), "per-hop capacity threshold (bit/s)"),
        "tx_psd_dbm_hz": Field(-80.0, number(), "transmit PSD (dBm/Hz)"),
        "hidden": Field([64, 64], listof(integer(1), 1), "hidden widths of both networks"),
        "dropout_rate": Field(0.5, number(0, 1, hi_open=True), "input dropout"),
        "epochs": Field(60, integer(1), "training epochs"),
        "batch_size": Field(64, integer(1), "minibatch size"),
        "learning_rate": Field(2e-3, number(0, lo_open=True), "Adam rate"),
        "test_topologies": Field(20, integer(1), "in-range test deployments"),
        "out_node_ranges": Field([[50, 99], [176, 250]], listof(ordered_pair(integer(2))), "out-of-range test node counts"),
        "out_topologies": Field(10, integer(1), "test deployments per out-of-range interval"),
        "training_fractions": Field([0.25, 0.5, 1.0], listof(number(0, 1, lo_open=True), 1), "training-set sizes for the size sweep"),
    },
    "diagnose": {
        "n_nodes": Field(20, integer(3), "grid nodes"),
        "avg_edge_len": Field(700.0, number(0, lo_open=True), "mean cable length (m)"),
        "n_realizations": Field(10000, integer(4), "perturbed-grid realizations"),
        "signal": Field("yin", choice("yin", "rho_in", "h"), "measured quantity"),
        "load_mode": Field("constant", choice("constant", "variable"), "2 kOhm loads or per-realization random loads"),
        "classes": Field([1, 2, 3, 4], listof(integer(1, 4), 2, 4), "anomaly classes in the dataset"),
        "subset_classes": Field([1, 2, 3], listof(integer(1, 4)), "reduced class set for the second evaluation"),
        "train_fraction": Field(0.5, number(0, 1, lo_open=True, hi_open=True), "training share of the stratified split"),
        "classifier": Field("mlp100", choice("mlp100", "svm_ovr", "knn"), "classifier"),
        "epochs": Field(150, integer(1), "MLP epochs"),
        "batch_size": Field(64, integer(1), "MLP minibatch size"),
        "learning_rate": Field(1e-3, number(0, lo_open=True), "MLP Adam rate"),
    },
}

# cross-field rules: (section, check(section_values) -> message or None, key)
RULES = (
    ("channel", lambda s: None if s["f_start"] < s["f_stop"] else "must exceed f_start", "f_stop"),
    ("noise-cluster", lambda s: None if s["freq_range"][1] <= s["sample_rate"] / 2
     else "upper edge must not exceed sample_rate/2", "freq_range"),
    ("noise-cluster", lambda s: None if s["burg_order"] < s["slot_len"] / 2
     else "must be below slot_len/2", "burg_order"),
    ("gan", lambda s: None if s["corpus_size"] >= 10 * s["batch_size"]
     else "must hold at least 10 batches", "corpus_size"),
    ("diagnose", lambda s: None if len(set(s["classes"])) == len(s["classes"])
     else "must not repeat a class", "classes"),
)


def defaults() -> dict:
    out = {k: copy.deepcopy(f.default) for k, f in GLOBAL.items()}
    for name, fields in SECTIONS.items():
        out[name] = {k: copy.deepcopy(f.default) for k, f in fields.items()}
    return out


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults; raise ConfigError listing every violation."""
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: must be a JSON object"])
    cfg = defaults()
    errors = []
    for key, value in raw.items():
        if key in GLOBAL:
            cfg[key] = value
        elif key in SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{key}: must be an object")
                continue
            for sub, v in value.items():
                if sub in SECTIONS[key]:
                    cfg[key][sub] = v
                else:
                    errors.append(f"{key}.{sub}: unknown key")
        else:
            errors.append(f"{key}: unknown key")
    for key, f in GLOBAL.items():
        err = f.check(cfg[key])
        if err:
            errors.append(f"{key}: {err}")
    field_errors = set()
    for name, fields in SECTIONS.items():
        for key, f in fields.items():
            err = f.check(cfg[name][key])
            if err:
                errors.append(f"{name}.{key}: {err}")
                field_errors.add(name)
    for name, rule, key in RULES:
        if name not in field_errors:
            err = rule(cfg[name])
            if err:
                errors.append(f"{name}.{key}: {err}")
    if errors:
        raise ConfigError(errors)
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``key.path=value`` strings; values parse as JSON, else as plain strings."""
    out = copy.deepcopy(raw)
    errors = []
    for item in assignments:
        if "=" not in item:
            errors.append(f"{item}: override must look like key.path=value")
            continue
        path, text = item.split("=", 1)
        parts = path.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errors.append(f"{path}: {p} is not a section")
                break
        else:
            node[parts[-1]] = _parse_value(text)
    if errors:
        raise ConfigError(errors)
    return out


def load(path) -> dict:
    """Read a config file (JSON); an empty file means all defaults."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {p}: {exc.strerror}"]) from None
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()


def describe() -> list:
    """(dotted key, default, doc) for every field."""
    rows = [(k, f.default, f.doc) for k, f in GLOBAL.items()]
    for name, fields in SECTIONS.items():
        rows += [(f"{name}.{k}", f.default, f.doc) for k, f in fields.items()]
    return rows
