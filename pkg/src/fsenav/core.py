"""Small shared types: poses, the discrete action set, and error classes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum


class FseError(Exception):
    """Base class; ``kind`` is the machine-parsable error class printed by the CLI."""

    kind = "error"


class ConfigError(FseError):
    kind = "config"


class BoundsError(FseError):
    kind = "bounds"


class ObservationError(FseError):
    kind = "observation"


class ArgumentError(FseError, ValueError):
    kind = "argument"


class StateError(FseError):
    kind = "state"


class ProtocolError(FseError):
    kind = "protocol"


class GenerationError(FseError):
    kind = "generation"


class DataError(FseError):
    kind = "data"


class NoPathError(FseError):
    """The agent cell is not connected to the goal set (or already sits on it)."""

    kind = "no_path"


class Action(IntEnum):
    STOP = 0
    MOVE_FORWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


def wrap_angle(theta: float) -> float:
    """Map an angle onto [-pi, pi); angles already in range are returned unchanged."""
    if -math.pi <= theta < math.pi:
        return theta
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.theta]
