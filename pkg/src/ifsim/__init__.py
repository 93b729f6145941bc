"""Impulsive semiflow simulation and audit toolkit."""

from .config import ScenarioFile, load_scenario, resolve_scenario_path
from .errors import (ExprError, FlowDiverged, IfsimError, PartialMapError,
                     ScenarioInvalid, ZenoAbortError)
from .expr import parse_field
from .flow import BaseFlow
from .impulse import (ImpulseMap, ImpulseSurface, Knobs, Scenario, Trajectory,
                      build_trajectory, check_separation, first_hit, phi_batch,
                      sample_impulsive_set)
from .measure import (BoxPartition, DiscreteMeasure, RadiusPartition,
                      invariance_defect, kb_average, mass_near_D,
                      support_in_omega)
from .nonwandering import (OmegaEstimate, RecurrenceParams, audit_hypotheses,
                           continuity_report, estimate_omega, tau_d)
from .quotient import GluingGraph, class_of, conjugacy_residual, project, psi

__version__ = "0.1.0"
