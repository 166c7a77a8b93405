"""Task bundle shared by the planning levels: object, environment, robot,
mechanics settings, start pose, and the goal region."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mechanics import MechanicsConfig
from .robot import RobotInterface
from .se3 import DistanceWeights, Pose, pose_distance
from .world import EnvironmentModel, ObjectModel, characteristic_length


@dataclass
class GoalRegion:
    center: Pose
    tolerance: float
    weights: DistanceWeights = field(default_factory=DistanceWeights)

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("goal tolerance must be > 0")

    def contains(self, x: Pose) -> bool:
        return pose_distance(x, self.center, self.weights) <= self.tolerance


@dataclass
class RrtParams:
    extend_length: float = 0.5
    p_sample: float = 0.5
    position_bounds: tuple = ((-5.0, -5.0, -5.0), (5.0, 5.0, 5.0))
    weights: DistanceWeights = field(default_factory=DistanceWeights)
    max_iters: int = 2000
    h_sub: float | None = None    # default extend_length / 10
    tol_proj: float | None = None  # default 1e-6 * object scale

    def __post_init__(self):
        if not 0.0 <= self.p_sample <= 1.0:
            raise ValueError("goal-bias probability must be in [0, 1]")
        if self.extend_length <= 0:
            raise ValueError("extend_length must be > 0")

    def substep(self) -> float:
        return self.h_sub if self.h_sub is not None else self.extend_length / 10.0

    def projection_tol(self, scale: float) -> float:
        return self.tol_proj if self.tol_proj is not None else 1e-6 * scale


@dataclass
class ManipulationTask:
    obj: ObjectModel
    env: EnvironmentModel
    robot: RobotInterface
    mechanics: MechanicsConfig
    x_start: Pose
    goal: GoalRegion
    rrt: RrtParams = field(default_factory=RrtParams)
    feasibility_option: int = 2      # 1 = tracked finger contacts, 2 = existential
    fingertip_goals: list | None = None  # per-finger reference world points
    eta1: float = 0.1
    eta2: float = 0.1
    caches: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.feasibility_option not in (1, 2):
            raise ValueError("feasibility option must be 1 or 2")
        if not self.obj.surface_points:
            raise ValueError("object needs sampled surface points for finger contacts")

    def scale(self) -> float:
        return characteristic_length(self.obj.shape)

    def gravity_load(self) -> np.ndarray:
        from .mechanics import gravity_wrench

        return gravity_wrench(self.obj.mass, self.mechanics.gravity)
