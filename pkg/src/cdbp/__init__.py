"""Clairvoyant dynamic bin packing solvers for VM placement."""

from .model import (
    Allocation,
    ContractViolation,
    InsufficientPoolError,
    Interval,
    ProblemInstance,
    ReservationTimeline,
    ServerInstance,
    ServerPool,
    ServerType,
    VmRequest,
    count_servers,
    validate_allocation,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ContractViolation",
    "InsufficientPoolError",
    "Interval",
    "ProblemInstance",
    "ReservationTimeline",
    "ServerInstance",
    "ServerPool",
    "ServerType",
    "VmRequest",
    "count_servers",
    "validate_allocation",
]
