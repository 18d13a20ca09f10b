"""Planner and statistical simulator for pump-managed entanglement networks.

Reconfigurable entanglement distribution on a DWDM grid: multiple pump lasers
drive spontaneous four-wave mixing, the resulting channel-pair correlations
define a logical network topology, and time-sharing over pump configurations
realizes topologies a single configuration cannot. The package plans those
configuration schedules, models the photon statistics of every link, and
estimates the key rates a QKD overlay would achieve.
"""

from .grid import Channel, ChannelGrid, as_channel, channel_frequency, index_sum
from .sfwm import (CorrelationEdge, CorrelationGraph, ForbiddenSet, PumpConfig,
                   SfwmProcess, correlation_graph, distinct_sums,
                   enumerate_processes, forbidden_channels)
from .photon_stats import (DetectorModel, JsiMatrix, LinkStats, SourceModel,
                           channel_singles_rate, coincidence_count,
                           estimate_accidentals, link_stats_analytic,
                           link_stats_montecarlo, measure_jsi, simulate_timetags)
from .network import (Schedule, Topology, UserAllocation, accumulate,
                      induced_topology, timeshare_rates, user_pair)
from .planner import (Plan, PlanInfeasibleError, PlanProblem, candidate_configs,
                      even_allocation, plan_schedule, verify_plan)
from .qkd import (LinkSkr, NetworkSkrReport, QkdParams, SkrEstimate,
                  link_stats_for_plan, network_skr, sifted_rate, skr_estimate)
from .calibration import CalibrationResult, CalibrationTargets, LinkBudget, calibrate, load_defaults

__version__ = "0.1.0"
