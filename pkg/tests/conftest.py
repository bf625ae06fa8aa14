"""Shared helpers for building measured networks in tests."""

import numpy as np
import pytest

from cfosync.measurement import (
    MODE_ORACLE,
    LinkChannel,
    OscillatorState,
    measure_edge,
    random_training,
)
from cfosync.topology import NetworkGraph, is_connected
from cfosync import neighbors


def random_truth(graph, rng, span=2 * np.pi * 0.05):
    """Per-node offsets uniform in [-span, span]; reference pinned to zero."""
    truth = {}
    for i in graph.nodes:
        w = rng.uniform(-span, span, size=graph.antenna_count(i))
        if i == graph.reference:
            w = np.zeros_like(w)
        truth[i] = w
    return truth


def oracle_measurements(graph, truth, rng, noise_var=0.01, train_len=16):
    """One oracle-mode measurement per edge with Rayleigh channels."""
    out = []
    for i, j in graph.edges:
        n_tx, n_rx = graph.antenna_count(i), graph.antenna_count(j)
        training = random_training(train_len, n_tx, rng_seed=rng)
        gains = (
            rng.standard_normal((n_tx, n_rx)) + 1j * rng.standard_normal((n_tx, n_rx))
        ) / np.sqrt(2.0)
        channel = LinkChannel(i, j, gains, noise_var)
        out.append(
            measure_edge(
                (i, j),
                OscillatorState(i, truth[i]),
                OscillatorState(j, truth[j]),
                channel,
                training,
                MODE_ORACLE,
                rng_seed=rng,
            )
        )
    return out


def random_connected_graph(rng, num_nodes, antennas=1, min_degree=1, edge_prob=0.5):
    """Random connected graph by edge-probability resampling.

    ``antennas`` may be an int, a sequence, or the string "mixed" for
    per-node counts drawn from {1, 2}.
    """
    if antennas == "mixed":
        ants = tuple(int(a) for a in rng.integers(1, 3, num_nodes))
    else:
        ants = antennas
    while True:
        edges = tuple(
            (i, j)
            for i in range(1, num_nodes + 1)
            for j in range(i + 1, num_nodes + 1)
            if rng.random() < edge_prob
        )
        g = NetworkGraph(num_nodes, ants, edges, require_connected=False)
        if not is_connected(g):
            continue
        if min(len(neighbors(g, i)) for i in g.nodes) < min_degree:
            continue
        return g


def random_tree(rng, num_nodes, antennas=1):
    """Random labeled tree by uniform random attachment."""
    edges = tuple(
        (int(rng.integers(1, v)), v) for v in range(2, num_nodes + 1)
    )
    return NetworkGraph(num_nodes, antennas, edges)


def fd_offset_bound(eps, h, training, noise_var, step=1e-6):
    """Finite-difference Fisher-information oracle for the offset block.

    Differentiates the observation mean over the stacked real parameters
    (eps, Re h, Im h), forms the full information matrix, inverts it, and
    returns the offset block of the inverse.  Independent of the closed
    form under test.
    """
    z = training.z
    n, n_tx = z.shape
    t = np.arange(1, n + 1)

    def mean_fn(theta):
        e = theta[:n_tx]
        hh = theta[n_tx : 2 * n_tx] + 1j * theta[2 * n_tx :]
        return (np.exp(1j * np.outer(t, e)) * z) @ hh

    theta0 = np.concatenate([np.asarray(eps, float), np.real(h), np.imag(h)])
    cols = []
    for a in range(theta0.shape[0]):
        up, dn = theta0.copy(), theta0.copy()
        up[a] += step
        dn[a] -= step
        cols.append((mean_fn(up) - mean_fn(dn)) / (2 * step))
    jac = np.stack(cols, axis=1)
    fim = (2.0 / noise_var) * np.real(jac.conj().T @ jac)
    return np.linalg.inv(fim)[:n_tx, :n_tx]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
