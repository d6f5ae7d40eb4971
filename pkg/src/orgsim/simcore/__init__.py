"""Organoid simulation framework: cells, environments, behavior modules, schedulers."""

from orgsim.simcore.environment import (
    Box,
    ChemicalGradientEnvironment,
    ElectricFieldEnvironment,
    Environment,
    GradientEnvironment,
    Position3D,
    StochasticEnvironment,
    TemperatureEnvironment,
    sample_field,
)
from orgsim.simcore.organoid import (
    BehaviorModule,
    Cell,
    FunctionModule,
    Organoid,
    PeerView,
    SimulationHistory,
    create_organoid,
)
from orgsim.simcore.scheduler import (
    Parallel,
    Priority,
    SchedulerPolicy,
    Sequential,
    Stochastic,
    run,
    step,
)
from orgsim.simcore.spiking import LIFModule, spiking_exemplar

__all__ = [
    "BehaviorModule", "Box", "Cell", "ChemicalGradientEnvironment", "ElectricFieldEnvironment",
    "Environment", "FunctionModule", "GradientEnvironment", "LIFModule", "Organoid", "Parallel",
    "PeerView", "Position3D", "Priority", "SchedulerPolicy", "Sequential", "SimulationHistory",
    "Stochastic", "StochasticEnvironment", "TemperatureEnvironment", "create_organoid", "run",
    "sample_field", "spiking_exemplar", "step",
]
