import numpy as np
import pytest

from netclust import EventSet, LinearNetwork, build_network, make_grid_network


@pytest.fixture(scope="session")
def seg_net():
    """One horizontal segment (0,0)-(100,0)."""
    return build_network(np.array([[0.0, 0.0, 100.0, 0.0]]))


@pytest.fixture(scope="session")
def long_seg_net():
    """One segment of length 10,000 m along the x-axis."""
    return build_network(np.array([[0.0, 0.0, 10000.0, 0.0]]))


@pytest.fixture(scope="session")
def l_net():
    """Two segments (0,0)-(100,0) and (100,0)-(100,100)."""
    return build_network(np.array([[0.0, 0.0, 100.0, 0.0],
                                   [100.0, 0.0, 100.0, 100.0]]))


@pytest.fixture(scope="session")
def cross_net():
    """Four 500 m arms meeting at the origin."""
    return build_network(np.array([
        [0.0, 0.0, 500.0, 0.0],
        [0.0, 0.0, -500.0, 0.0],
        [0.0, 0.0, 0.0, 500.0],
        [0.0, 0.0, 0.0, -500.0],
    ]))


@pytest.fixture(scope="session")
def grid5():
    """5x5 blocks of 100 m streets (60 segments, 6 km)."""
    return make_grid_network(5, 100.0)


@pytest.fixture(scope="session")
def grid10():
    """10x10 blocks of 100 m streets."""
    return make_grid_network(10, 100.0)


def events_at(net: LinearNetwork, seg, off, t) -> EventSet:
    """Build an EventSet from parallel seg/offset/time arrays."""
    seg = np.asarray(seg, dtype=np.int64)
    off = np.asarray(off, dtype=float)
    pts = net.points_from_arrays(seg, off)
    return EventSet.from_points(pts, np.asarray(t, dtype=float))


@pytest.fixture(scope="session")
def make_events():
    return events_at
