"""Sectorized multi-cell massive MIMO downlink simulator.

Closed-form achievable-rate lower bounds for maximum-ratio and
zero-forcing precoding across omnidirectional, sectorized, and
coordinated multi-point settings, with uniform, network-wide max-min,
and per-cell max-min power control (centralized and decentralized),
plus a Monte Carlo fading oracle that validates the bounds.
"""

from .antenna import (IdealPattern, TabulatedPattern, load_pattern, make_irp,
                      read_pattern_file, resolve_pattern)
from .association import Association, associate
from .channel import (ReuseMap, cost231_hata_db, estimation_gains,
                      large_scale_coupling, reuse_sets)
from .geometry import (Layout, build_layout, drop_users, dump_layout,
                       min_image_vector)
from .linkrate import RateReport, SinrBreakdown, achievable_rate, sinr_breakdown
from .power import (MaxMinProblem, MaxMinResult, build_problem, dpa,
                    feasible_at, nmf, pmf, upa)
from .runner import (ExperimentResult, SummaryStats, emit_outputs,
                     run_experiment, summarize)
from .scenario import (ConfigError, FrameAccounting, LinkBudget, PathlossParams,
                       Scenario, ValidationError, derive_frame,
                       derive_link_budget, load_scenario, scenario_to_dict)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
