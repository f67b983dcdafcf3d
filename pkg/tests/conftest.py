"""Shared fixtures. The heavyweight ones (dataset, trained experts) are
session-scoped because several test modules and the acceptance suite reuse
them; first use pays the training cost once."""

import numpy as np
import pytest

from quadmimic.datagen import RobotState, Task, TaskSpec, build_dataset
from quadmimic.kinematics import QuadrupedModel
from quadmimic.retarget import (
    ExpertSet,
    TrainConfig,
    build_index,
    train_contact,
    train_retarget,
)

ACCEPT_SEED = 7
ACCEPT_STYLE = 1
ACCEPT_TASKS = [
    TaskSpec(Task.TILT_AT_STAND, 0.8),
    TaskSpec(Task.MANIP_AT_STAND, 0.8),
    TaskSpec(Task.TILT_AT_SIT, 0.8),
    TaskSpec(Task.MANIP_AT_SIT, 0.8),
    TaskSpec(Task.WALK_FORWARD, 1.0),
    TaskSpec(Task.TURN_LEFT, 0.8),
    TaskSpec(Task.TURN_RIGHT, 0.8),
]


@pytest.fixture(scope="session")
def model():
    return QuadrupedModel.default()


@pytest.fixture(scope="session")
def dataset(model):
    return build_dataset(ACCEPT_TASKS, 10, seed=ACCEPT_SEED, style_seed=ACCEPT_STYLE, pairs_per_task=522, model=model)


@pytest.fixture(scope="session")
def stand_retarget(dataset, model):
    """Full-budget stand mapper plus its training history."""
    return train_retarget(dataset, RobotState.STAND, TrainConfig(max_steps=5000), model)


@pytest.fixture(scope="session")
def walk_contact(dataset):
    return train_contact(dataset, RobotState.WALK, TrainConfig(max_steps=3000))


@pytest.fixture(scope="session")
def experts(dataset, model, stand_retarget, walk_contact):
    nets = {RobotState.STAND: stand_retarget[0]}
    cnets = {RobotState.WALK: walk_contact[0]}
    nets[RobotState.SIT], _ = train_retarget(dataset, RobotState.SIT, TrainConfig(max_steps=1500), model)
    nets[RobotState.WALK], _ = train_retarget(dataset, RobotState.WALK, TrainConfig(max_steps=2500), model)
    cnets[RobotState.STAND], _ = train_contact(dataset, RobotState.STAND, TrainConfig(max_steps=2500))
    cnets[RobotState.SIT], _ = train_contact(dataset, RobotState.SIT, TrainConfig(max_steps=1200))
    feats, states = build_index(dataset)
    return ExpertSet(nets, cnets, feats, states)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
