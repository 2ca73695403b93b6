"""Text-driven whole-body humanoid motion: shape fitting, retargeting,
primitive-based editing with vision-language agents, rendering and
locomotion command extraction."""

from .errors import (AgentError, AgentParseError, ConfigError, DegenerateDirectionError, ModelError,
                     NumericError, OptimizationError, WholeBodyError)
from .kinematics import (FrameTarget, Joint, KinematicModel, forward_kinematics, ik_step, jacobian,
                         load_model, save_model)
from .motion import JointTrajectory, SourceMotion, load_motion, load_trajectory
from .shapefit import ShapeParams, SourceSkeletonModel, fit_shape, load_skeleton

__version__ = "0.1.0"
