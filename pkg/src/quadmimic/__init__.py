"""Human-to-quadruped motion control toolkit.

Two stages: supervised motion retargeting with consistency post-processing,
and motion-imitation reinforcement learning against a deterministic
surrogate plant, plus the analysis harnesses that compare their variants.
"""

from .kinematics import Pose, PoseRates, QuadrupedModel

__all__ = ["Pose", "PoseRates", "QuadrupedModel"]
