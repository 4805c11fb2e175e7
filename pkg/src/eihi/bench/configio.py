"""Config-file parsing: UTF-8 TOML or JSON documents into experiment
configs. The schema is documented in the README with examples."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from ..diffcore.backbone import BackboneSpec, ConvBlockSpec
from ..errors import ConfigError
from ..losses import LossConfig
from ..synthdata import DatasetSpec, ShiftConfig
from ..trainer import TrainConfig
from .experiments import (
    ExperimentConfig,
    desk_backbone,
    desk_disc_config,
    desk_erm_config,
    desk_stage_one_config,
)


def load_config_document(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(text.decode("utf-8"))
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text.decode("utf-8"))
    raise ConfigError(f"{path}: config must be .json or .toml")


def dataset_from_dict(d: dict) -> DatasetSpec:
    return DatasetSpec(**d)


def shift_from_dict(d: dict) -> ShiftConfig:
    ratio = d.get("secondary_ratio")
    return ShiftConfig.make(
        source=d["source_domains"],
        target=d["target_domains"],
        primary=d.get("primary_domain"),
        ratio=Fraction(ratio) if ratio is not None else None,
    )


def backbone_from_dict(d: dict) -> BackboneSpec:
    channels = d.get("channels")
    blocks = (
        tuple(ConvBlockSpec(int(c)) for c in channels)
        if channels is not None
        else tuple(ConvBlockSpec(**b) for b in d["blocks"])
    )
    return BackboneSpec(
        in_channels=int(d.get("in_channels", 3)),
        image_hw=tuple(d.get("image_hw", (16, 16))),
        blocks=blocks,
        head=d.get("head", "flatten"),
        dense=tuple(d.get("dense", (d.get("embedding_dim", 32),))),
    )


def train_from_dict(d: dict, default: TrainConfig) -> TrainConfig:
    loss_doc = d.pop("loss", None)
    loss = LossConfig(**loss_doc) if loss_doc is not None else default.loss
    merged = {
        "epochs": default.epochs,
        "batch_size": default.batch_size,
        "num_negatives": default.num_negatives,
        "learning_rate": default.learning_rate,
        "optimizer": default.optimizer,
        "momentum": default.momentum,
        "seed": default.seed,
        "probe_every": default.probe_every,
        "disc_hidden": default.disc_hidden,
    }
    merged.update(d)
    merged["disc_hidden"] = tuple(merged["disc_hidden"])
    return TrainConfig(loss=loss, **merged)


def experiment_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    doc = dict(doc)
    method = doc.get("method")
    if method is None:
        raise ConfigError("config needs a 'method'")

    if "dataset_path" in doc:
        dataset = doc["dataset_path"]
        if base_dir is not None and not Path(dataset).is_absolute():
            dataset = str(base_dir / dataset)
    elif "dataset" in doc:
        dataset = dataset_from_dict(doc["dataset"])
    else:
        raise ConfigError("config needs 'dataset' (a spec) or 'dataset_path'")

    split_mode = doc.get("split_mode", "domain_shift")
    shift = shift_from_dict(doc["shift"]) if doc.get("shift") else None

    backbone = backbone_from_dict(doc["backbone"]) if doc.get("backbone") else desk_backbone()
    train_default = desk_erm_config() if method == "erm" else desk_stage_one_config()
    train = train_from_dict(dict(doc.get("train", {})), train_default)
    disc = train_from_dict(dict(doc.get("disc", {})), desk_disc_config())

    guidance = doc.get("guidance")
    if (guidance is not None and guidance != "ground-truth"
            and base_dir is not None and not Path(guidance).is_absolute()):
        guidance = str(base_dir / guidance)

    return ExperimentConfig(
        name=doc.get("name", method),
        method=method,
        dataset=dataset,
        split_mode=split_mode,
        shift=shift,
        mixed_test_fraction=doc.get("mixed_test_fraction"),
        backbone=backbone,
        train=train,
        disc=disc,
        guidance=guidance,
        guidance_fill=float(doc.get("guidance_fill", 0.0)),
        seeds=tuple(doc.get("seeds", (0, 1, 2, 3, 4))),
        val_fraction=float(doc.get("val_fraction", 0.1)),
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return experiment_from_dict(load_config_document(path), base_dir=path.parent)
