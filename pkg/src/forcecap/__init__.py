"""Task-space force and velocity capability polytopes for serial manipulators."""

from .geometry import (Degenerate, Ellipsoid, Polytope, contains, ellipsoid, hull, intersection_stacked,
                       minkowski_sum, support)
from .kinematics import (JointSpec, ModelError, RobotModel, TaskFrame, describe, forward_kinematics,
                         gravity_torque, jacobian, residual_limits)
from .loadshare import (CapacityExhausted, DualArmScenario, LoadShareTrace, lambda_policy, load_scenario,
                        max_directional_force, simulate)
from .vertex_search import (AlphaPartition, CapacityError, RankDeficient, SearchOptions, SearchStats,
                            SvdFactors, TorqueBox, VertexSet, canonicalize, decompose, face_bounds,
                            force_polytope_vertices, full_system_solve, oracle_halfspace_enum, solve_face,
                            velocity_polytope_vertices)

__version__ = "0.1.0"
