"""Secrecy-rate simulation and optimization for full-duplex C-RAN networks
with untrusted radio units and external eavesdroppers."""

from .config import NetworkConfig
from .channels import (ChannelRealization, Topology, build_realization,
                       draw_realization, generate_topology, path_loss)
from .rates import DesignVariables, RateReport, rate_report

__all__ = [
    "NetworkConfig", "ChannelRealization", "Topology", "build_realization",
    "draw_realization", "generate_topology", "path_loss",
    "DesignVariables", "RateReport", "rate_report",
]

__version__ = "0.1.0"
