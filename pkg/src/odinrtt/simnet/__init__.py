"""Deterministic discrete-event network simulator with /24-aware topologies."""

from odinrtt.simnet.net import (
    AdversaryConfig,
    AdversaryKind,
    LogEvent,
    Packet,
    PacketKind,
    SimNet,
    advance_clock,
    build_topology,
    deliver,
    ground_truth_rtt,
    install_adversary,
)
from odinrtt.simnet.topology import (
    HostSpec,
    LinkSpec,
    PathSampler,
    RouterSpec,
    SubnetSpec,
    TopologySpec,
    chain_topology,
    load_topology,
    random_tree,
    topology_from_dict,
    validate_topology,
)
from odinrtt.simnet.transport import SimClock, SimTransport

__all__ = [
    "AdversaryConfig",
    "AdversaryKind",
    "HostSpec",
    "LinkSpec",
    "LogEvent",
    "Packet",
    "PacketKind",
    "PathSampler",
    "RouterSpec",
    "SimClock",
    "SimNet",
    "SimTransport",
    "SubnetSpec",
    "TopologySpec",
    "advance_clock",
    "build_topology",
    "chain_topology",
    "deliver",
    "ground_truth_rtt",
    "install_adversary",
    "load_topology",
    "random_tree",
    "topology_from_dict",
    "validate_topology",
]
