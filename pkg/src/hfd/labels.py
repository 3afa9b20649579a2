"""Label vocabularies and their stable integer encodings.

Human actions (7 classes)::

    0 idle  1 approach  2 transfer  3 retract  4 post_idle  5 not_released  6 dropped

Robot actions at annotation level (5 classes)::

    0 idle  1 approach  2 transfer  3 retract  4 post_idle

Robot actions as seen by the models (3 classes)::

    0 approach  1 transfer  2 retract

Outcomes (5 classes)::

    0 success  1 no_approach  2 no_grasp  3 drop  4 no_release
"""

from __future__ import annotations

from enum import Enum, IntEnum

import numpy as np

from .errors import SchemaError

_ALIASES = {
    "interact": "transfer",
    "postidle": "post_idle",
    "notreleased": "not_released",
    "drop": "dropped",
}


def _canon(text: str) -> str:
    return text.strip().lower().replace("-", "_").replace(" ", "_")


class _Vocab(IntEnum):
    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        key = _canon(str(value))
        if key.upper() in cls.__members__:
            return cls[key.upper()]
        alias = _ALIASES.get(key.replace("_", ""), _ALIASES.get(key))
        if alias is not None and alias.upper() in cls.__members__:
            return cls[alias.upper()]
        raise SchemaError(f"unknown {cls.__name__} label {value!r}")

    @classmethod
    def labels(cls) -> list[str]:
        return [m.label for m in cls]


class HumanAction(_Vocab):
    IDLE = 0
    APPROACH = 1
    TRANSFER = 2
    RETRACT = 3
    POST_IDLE = 4
    NOT_RELEASED = 5
    DROPPED = 6


class RobotActionFull(_Vocab):
    IDLE = 0
    APPROACH = 1
    TRANSFER = 2
    RETRACT = 3
    POST_IDLE = 4


class RobotActionModel(_Vocab):
    APPROACH = 0
    TRANSFER = 1
    RETRACT = 2


class OutcomeLabel(_Vocab):
    SUCCESS = 0
    NO_APPROACH = 1
    NO_GRASP = 2
    DROP = 3
    NO_RELEASE = 4

    @classmethod
    def parse(cls, value):
        # "drop" is an outcome, not the human action alias
        if isinstance(value, str) and _canon(value) in ("drop", "dropped"):
            return cls.DROP
        return super().parse(value)


class Task(str, Enum):
    R2H = "R2H"
    H2R = "H2R"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise SchemaError(f"unknown task {value!r}") from None


class Platform(str, Enum):
    HSR = "HSR"
    KINOVA_GEN3 = "KINOVA_GEN3"

    @classmethod
    def parse(cls, value) -> "Platform":
        if isinstance(value, cls):
            return value
        key = _canon(str(value)).upper()
        key = {"TOYOTA_HSR": "HSR", "KINOVA": "KINOVA_GEN3", "GEN3": "KINOVA_GEN3"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise SchemaError(f"unknown robot platform {value!r}") from None


N_HUMAN = len(HumanAction)
N_ROBOT_FULL = len(RobotActionFull)
N_ROBOT = len(RobotActionModel)
N_OUTCOME = len(OutcomeLabel)

ROBOT_ORDER = tuple(RobotActionFull)

# {idle, approach} -> approach, transfer -> transfer, {retract, post_idle} -> retract
FULL_TO_MODEL = np.array([0, 0, 1, 2, 2], dtype=np.int64)


def robot_to_model(track) -> np.ndarray:
    """Map an annotation-level robot track (5 classes) to the 3 model-facing classes."""
    return FULL_TO_MODEL[np.asarray(track, dtype=np.int64)]


def outcome_allowed(outcome: OutcomeLabel, task: Task) -> bool:
    if outcome == OutcomeLabel.NO_GRASP:
        return task == Task.R2H
    if outcome == OutcomeLabel.NO_RELEASE:
        return task == Task.H2R
    return True


def outcomes_for(task: Task) -> list[OutcomeLabel]:
    return [o for o in OutcomeLabel if outcome_allowed(o, task)]
