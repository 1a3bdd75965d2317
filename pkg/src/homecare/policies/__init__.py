"""Daily decision rules behind a common interface."""
from .alp_policy import (ACCEPT, MAYBE, REJECT, AlpPolicy, alp_action, approximate_q,
                         classify_regions)
from .base import AcceptDivertAll, Policy, PolicyDecision, RejectAll, execute_day_one
from .calendar import Calendar, build_calendar, planning_horizon
from .myopic import MyopicPolicy, myopic_action
from .sb import SB_THRESHOLDS, SbConfig, SbPolicy, SbTuning, tune_sb_threshold

__all__ = ["ACCEPT", "MAYBE", "REJECT", "AcceptDivertAll", "AlpPolicy", "Calendar", "MyopicPolicy",
           "Policy", "PolicyDecision", "RejectAll", "SB_THRESHOLDS", "SbConfig", "SbPolicy", "SbTuning", "tune_sb_threshold",
           "alp_action", "approximate_q", "build_calendar", "classify_regions",
           "execute_day_one", "myopic_action", "planning_horizon"]
