"""Object trajectory passed from the pose-level search to the contact
planner: per-step pose, cached environment contacts, and the mode governing
the motion leaving that step.

The final step carries the all-maintain mode of its own contacts (the object
holds still there), so a schedule must keep the object stable at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .modes import CsMode
from .se3 import Pose, DistanceWeights, pose_distance


@dataclass
class TrajStep:
    x: Pose
    contacts: list                    # env ContactPoints detected at x
    mode: CsMode                      # mode of the motion t -> t+1

    def mode_string(self) -> str:
        return str(self.mode)


@dataclass
class ContactSchedule:
    """Finger assignments per trajectory step.

    assignments[t] is a sorted tuple of (finger id, surface point index)
    active while the object moves from step t; relocations counts finger
    changes after the initial placement.
    """

    assignments: list
    relocations: int = 0

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass
class ObjectTrajectory:
    steps: list

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, t: int) -> TrajStep:
        return self.steps[t]

    def poses(self) -> list:
        return [s.x for s in self.steps]

    def travel_distance(self, weights: DistanceWeights | None = None) -> float:
        w = weights or DistanceWeights()
        return sum(pose_distance(a.x, b.x, w)
                   for a, b in zip(self.steps, self.steps[1:]))

    def mode_changes(self) -> int:
        return sum(str(a.mode) != str(b.mode)
                   for a, b in zip(self.steps, self.steps[1:]))


def trajectory_from_path(path) -> ObjectTrajectory:
    """Build a trajectory from [(pose, contacts, mode_from_parent)] triples.

    The incoming mode of node t+1 is the motion leaving node t; the last
    step gets the all-maintain mode over its own contacts.
    """
    steps = []
    for i, (x, contacts, _) in enumerate(path):
        if i + 1 < len(path):
            mode = path[i + 1][2]
        else:
            mode = CsMode.all_maintain(len(contacts))
        steps.append(TrajStep(x=x, contacts=list(contacts), mode=mode))
    return ObjectTrajectory(steps)
