import pytest

from odinrtt.simnet import HostSpec, SimTransport, build_topology, chain_topology

NEIGHBOR_CIDR = "203.0.113.0/24"


class ForcedRng:
    """randrange stub returning a scripted sequence of values."""

    def __init__(self, *values):
        self.values = list(values)
        self.calls = []

    def randrange(self, n):
        self.calls.append(n)
        v = self.values.pop(0)
        assert 0 <= v < n
        return v


@pytest.fixture
def chain():
    """V -5ms- R1 -10ms- R2 -20ms- R3, subnet 203.0.113.0/24 behind R3.

    .7 and .9 answer (1 ms last hop), .8 is silent.
    """
    hosts = [HostSpec(7, True, 1.0), HostSpec(8, False, 1.0), HostSpec(9, True, 1.0)]
    net = build_topology(chain_topology([5.0, 10.0, 20.0], hosts))
    return net, SimTransport(net)


@pytest.fixture
def forced_rng():
    return ForcedRng
