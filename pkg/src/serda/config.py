"""Run configuration: one YAML file covering model, training, and data.

Every field has a default, unknown keys are rejected with their full dotted
path, and the effective (post-default, post-override) configuration is
echoed verbatim into the output directory of every run so experiments stay
reproducible from their artifacts alone.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .augment import AugmentConfig
from .corpus import (
    DEFAULT_SOURCE_RATIOS,
    TARGET_LABELED_RATIOS,
    TARGET_UNLABELED_RATIOS,
    ClassSpec,
    Corpus,
    DomainShift,
    Manifest,
    SynthSpec,
    generate_synthetic,
    split_manifest,
)
from .encoder import EncoderConfig
from .errors import ConfigError
from .trainer import TrainConfig

OUTPUT_ROOT_ENV = "SERDA_OUTPUT_ROOT"


@dataclass(frozen=True)
class DataConfig:
    """Where samples come from and how they are split."""

    manifest: str | None = None  # WAV/synth manifest; None generates in memory
    synth: SynthSpec = field(default_factory=SynthSpec)
    split_seed: int = 77
    source_ratios: dict = field(default_factory=lambda: dict(DEFAULT_SOURCE_RATIOS))
    target_labeled_ratios: dict = field(default_factory=lambda: dict(TARGET_LABELED_RATIOS))
    target_unlabeled_ratios: dict = field(default_factory=lambda: dict(TARGET_UNLABELED_RATIOS))


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    output_dir: str | None = None


_NESTED: dict[tuple[type, str], type] = {
    (RunConfig, "encoder"): EncoderConfig,
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "data"): DataConfig,
    (RunConfig, "augment"): AugmentConfig,
    (DataConfig, "synth"): SynthSpec,
    (SynthSpec, "shift"): DomainShift,
}


def _deep_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_deep_tuple(v) for v in value)
    return value


def _field_default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        return f.default_factory()  # type: ignore[misc]
    return None


def _build(cls: type, mapping: dict, path: str = ""):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping, got {type(mapping).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s) {unknown} under '{path or '<root>'}'")
    kwargs = {}
    for name, value in mapping.items():
        dotted = f"{path}.{name}" if path else name
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = _build(nested, value, dotted)
        elif cls is SynthSpec and name == "classes":
            if not isinstance(value, list):
                raise ConfigError(f"{dotted}: expected a list of class specs")
            kwargs[name] = tuple(_build(ClassSpec, v, f"{dotted}[{i}]") for i, v in enumerate(value))
        else:
            default = _field_default(known[name])
            kwargs[name] = _deep_tuple(value) if isinstance(default, tuple) or default is None else value
    return cls(**kwargs)


def set_by_path(mapping: dict, dotted: str, raw_value: str) -> None:
    """Apply one `section.key=value` override onto the raw YAML mapping."""
    *parents, leaf = dotted.split(".")
    node = mapping
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {part!r} in {dotted!r}")
    node[leaf] = yaml.safe_load(raw_value)


def load_run_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    """Load YAML (or start from defaults), apply overrides, validate."""
    mapping: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        mapping = loaded
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        set_by_path(mapping, key.strip(), value)
    cfg = _build(RunConfig, mapping)
    cfg.encoder.validate()
    cfg.train.validate()
    cfg.data.synth.validate()
    return cfg


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def config_to_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(_plain(cfg), sort_keys=True, default_flow_style=False)


def default_config_yaml() -> str:
    return config_to_yaml(RunConfig())


# ---------------------------------------------------------------------------
# corpus construction


def target_ratios(cfg: RunConfig, target_labeled: bool) -> dict:
    return cfg.data.target_labeled_ratios if target_labeled else cfg.data.target_unlabeled_ratios


def build_corpus(cfg: RunConfig, target_labeled: bool) -> Corpus:
    """Corpus for one mode: load the manifest if given, else synthesize.

    Splits already present in a manifest are respected; otherwise (or for a
    fresh synthetic corpus) the protocol ratios for the chosen mode are
    applied with the configured split seed.
    """
    if cfg.data.manifest is not None:
        corpus = Corpus.from_manifest(cfg.data.manifest, synth_spec=cfg.data.synth)
        has_splits = any(r.split != "train" for r in corpus.manifest.rows)
        if has_splits:
            return corpus
        manifest = corpus.manifest
        root = corpus.root_dir
    else:
        corpus = generate_synthetic(cfg.data.synth)
        manifest = corpus.manifest
        root = corpus.root_dir
    ratios = {
        "source": cfg.data.source_ratios,
        "target": target_ratios(cfg, target_labeled),
    }
    manifest = split_manifest(manifest, ratios, cfg.data.split_seed)
    return Corpus(manifest, synth_spec=cfg.data.synth, root_dir=root)


def resolve_output_dir(flag_value: str | None, cfg: RunConfig, default_name: str) -> str:
    """Precedence: --out flag, config output_dir, $SERDA_OUTPUT_ROOT, cwd."""
    if flag_value:
        return flag_value
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    return os.path.join(root, default_name)
