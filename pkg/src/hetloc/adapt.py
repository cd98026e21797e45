"""
Deep-learning heterogeneity handling: output-layer transfer and multitask
training with per-device heads over a shared trunk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Dataset
from .netcore import (DEFAULT_HEAD, ConfigError, MlpConfig, MlpModel, fit_tasks,
                      forward, init_model, train_rng)


@dataclass
class TransferPlan:
    """Fine-tune the output layer of ``base_model`` on a small slave set.

    The fine-tuned head keeps the name ``head``. With ``copy_head`` the slave
    head starts from the master's weights instead of a fresh draw.
    """

    base_model: MlpModel
    slave_data: Dataset
    fine_tune_epochs: int = 100
    fine_tune_rate: float = 0.005
    head: str = DEFAULT_HEAD
    copy_head: bool = False
    seed: int | None = None
    master_count: int | None = None

    @property
    def counts(self) -> tuple[int | None, int]:
        return self.master_count, len(self.slave_data)


def transfer_fine_tune(plan: TransferPlan) -> MlpModel:
    """Freeze the trunk and retrain only the output head on ``plan.slave_data``.

    Dropout is off while fine-tuning. Returns a new model; the base model is
    left untouched.
    """
    data = plan.slave_data
    base = plan.base_model
    if len(data) == 0:
        raise ValueError("slave dataset is empty")
    if data.width != base.config.input_width:
        raise ValueError(f"slave features ({data.mode}, width {data.width}) do not "
                         f"match the model input width {base.config.input_width}")
    model = base.copy()
    if plan.fine_tune_epochs == 0:
        return model
    base.head(plan.head)
    seed = base.config.seed if plan.seed is None else plan.seed
    if plan.copy_head:
        model.heads[plan.head].W = base.heads[plan.head].W.copy()
        model.heads[plan.head].b = base.heads[plan.head].b.copy()
    else:
        model.add_head(plan.head, K=base.head(plan.head).K, seed=seed)
    trunk_mask = list(model.trainable)
    model.freeze_trunk()
    model.heads[plan.head].trainable = True
    fit_tasks(model, [(plan.head, data.X, data.labels)],
              epochs=plan.fine_tune_epochs, learning_rate=plan.fine_tune_rate,
              rng=train_rng(model, stream=2), dropout=False)
    model.trainable = trunk_mask
    model.meta = {**model.meta, "transfer": {"slave_samples": len(data),
                                             "master_samples": plan.master_count}}
    return model


@dataclass
class MultitaskPlan:
    datasets: dict[str, Dataset]
    schedule: str = "round_robin"
    fit_scaling: bool = True

    def validate(self):
        if len(self.datasets) < 1:
            raise ConfigError("multitask training needs at least one device")
        if self.schedule != "round_robin":
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        items = list(self.datasets.items())
        _, first = items[0]
        for dev, ds in items:
            if len(ds) == 0:
                raise ValueError(f"dataset for {dev!r} is empty")
            if ds.grid != first.grid:
                raise ConfigError(f"grid of {dev!r} differs from the others")
            if ds.inventory != first.inventory:
                raise ConfigError(f"tower inventory of {dev!r} differs")
            if ds.mode != first.mode:
                raise ConfigError(f"feature mode of {dev!r} ({ds.mode}) differs "
                                  f"from {first.mode}")


def multitask_train(plan: MultitaskPlan, config: MlpConfig, on_step=None) -> MlpModel:
    """Shared trunk plus one head per device, trained round-robin by batch.

    Heads are named by device id. With a single device this is exactly
    ``init_model`` followed by ``train`` on that device's data.
    """
    plan.validate()
    model = init_model(config)
    devices = list(plan.datasets)
    first = devices[0]
    # every head starts from the default head draw; with one device this is
    # exactly plain training
    model.heads = {first: model.heads.pop(DEFAULT_HEAD)}
    for dev in devices[1:]:
        model.add_head(dev, copy_from=first)
    if plan.fit_scaling:
        model.fit_input_scaling(np.concatenate([plan.datasets[d].X for d in devices]))
    fit_tasks(model, [(d, plan.datasets[d].X, plan.datasets[d].labels) for d in devices],
              on_step=on_step)
    model.meta = {**model.meta, "devices": devices}
    return model


def predict_for_device(model: MlpModel, device_id: str, x):
    """Class probabilities from the head registered for ``device_id``."""
    if device_id not in model.heads:
        raise KeyError(f"no head for device {device_id!r}; registered heads: "
                       f"{sorted(model.heads)}")
    return forward(model, x, device_id)[0]
