"""Online load balancing on uniformly related machines with bounded migration."""
from .baseline import BaselineState, baseline_insert
from .core import (
    Event,
    Instance,
    InstanceError,
    Job,
    MachineSet,
    MachineState,
    MigrationLedger,
    ScheduleState,
    format_rational,
    load_of,
    max_load,
    parse_rational,
    rational,
)
from .engine import (
    AlgoParams,
    EngineInvariantError,
    Mode,
    OnlineScheduler,
    PresetKind,
    insert_arrival,
    new_state,
    preset,
)
from .generators import AdversarialKind, Geometric, PowerOfTwo, UniformInt, gen_adversarial, gen_random
from .harness import CLASSICAL, CheckConfig, InvariantViolation, MetricsReport, OptMode, fuzz, run_simulation
from .oracle import BudgetExhausted, OptResult, opt_exact, opt_lower_bound

__version__ = "0.1.0"

__all__ = [
    "AdversarialKind", "AlgoParams", "BaselineState", "BudgetExhausted", "CLASSICAL", "CheckConfig",
    "EngineInvariantError", "Event", "Geometric", "Instance", "InstanceError", "InvariantViolation", "Job",
    "MachineSet", "MachineState", "MetricsReport", "MigrationLedger", "Mode", "OnlineScheduler", "OptMode",
    "OptResult", "PowerOfTwo", "PresetKind", "ScheduleState", "UniformInt", "baseline_insert", "format_rational",
    "fuzz", "gen_adversarial", "gen_random", "insert_arrival", "load_of", "max_load", "new_state", "opt_exact",
    "opt_lower_bound", "parse_rational", "preset", "rational", "run_simulation",
]
