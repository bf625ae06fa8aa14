"""Reconstructed average-consensus baseline and the comparison MSE metrics.

The baseline models a frequency-locked-loop style scheme in which every
node nudges its oscillator toward its neighbors' frequencies each round,
using fresh noisy pairwise measurements.  It is a standard Metropolis-
weighted average-consensus iteration, labeled "reconstructed" throughout:
it reproduces the qualitative behavior (hundreds of rounds, each burning a
fresh training block) without claiming fidelity to any specific published
loop design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import NetworkGraph, neighbors


@dataclass(frozen=True)
class ConsensusState:
    """Per-node frequency values (single antenna) at one iteration."""

    values: np.ndarray
    iteration: int
    noise_var: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")


def metropolis_weights(graph: NetworkGraph) -> np.ndarray:
    """Symmetric edge weights w_ij = 1 / (1 + max(deg_i, deg_j)); zero
    elsewhere.  Completing the diagonal to row sums of one yields a doubly
    stochastic iteration matrix."""
    k = graph.num_nodes
    w = np.zeros((k, k))
    deg = {i: len(neighbors(graph, i)) for i in graph.nodes}
    for i, j in graph.edges:
        w[i - 1, j - 1] = w[j - 1, i - 1] = 1.0 / (1.0 + max(deg[i], deg[j]))
    return w


def iteration_matrix(graph: NetworkGraph) -> np.ndarray:
    w = metropolis_weights(graph)
    return np.eye(graph.num_nodes) - np.diag(w.sum(axis=1)) + w


def consensus_step(state: ConsensusState, graph: NetworkGraph, rng_seed=0) -> ConsensusState:
    """One averaging round with fresh pairwise measurement noise.

    Node i moves by sum_j w_ij * ((x_j - x_i) + n_ij), with independent
    n_ij ~ N(0, noise_var) per ordered neighbor pair (each node measures
    each neighbor with its own receiver).  Only single-antenna graphs are
    supported; the baseline has no notion of per-antenna offsets.
    """
    if any(a != 1 for a in graph.antennas):
        raise ValueError("consensus baseline requires single-antenna nodes")
    if state.values.shape[0] != graph.num_nodes:
        raise ValueError("state dimension does not match the node count")
    rng = np.random.default_rng(rng_seed)
    w = metropolis_weights(graph)
    x = state.values
    diff = x[None, :] - x[:, None]  # diff[i, j] = x_j - x_i
    noise = np.zeros((graph.num_nodes, graph.num_nodes))
    mask = w > 0
    if state.noise_var > 0:
        noise[mask] = np.sqrt(state.noise_var) * rng.standard_normal(int(mask.sum()))
    x_new = x + np.sum(w * (diff + noise), axis=1)
    return ConsensusState(x_new, state.iteration + 1, state.noise_var)


def run_consensus(
    graph: NetworkGraph,
    initial_values: np.ndarray,
    num_iters: int,
    noise_var: float,
    rng_seed=0,
) -> np.ndarray:
    """Iterate ``consensus_step`` and return values with shape
    (num_iters + 1, K); row 0 is the initial state."""
    rng = np.random.default_rng(rng_seed)
    state = ConsensusState(initial_values, 0, noise_var)
    out = np.empty((num_iters + 1, graph.num_nodes))
    out[0] = state.values
    for it in range(1, num_iters + 1):
        state = consensus_step(state, graph, rng)
        out[it] = state.values
    return out


def mse_consensus(values: np.ndarray) -> np.ndarray:
    """Mean-square deviation from the network average, per iteration.

    ``values`` has shape (trials, iters, K) or (iters, K); the result
    averages the per-node squared deviation over nodes and trials and has
    shape (iters,).
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    dev = v - v.mean(axis=2, keepdims=True)
    return (dev**2).mean(axis=2).mean(axis=0)


def mse_bp(means: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Mean-square estimation error of the absolute offsets, per iteration.

    ``means`` has shape (trials, iters, nodes) or (trials, iters, nodes,
    dim); ``truth`` matches with the iteration axis removed.  Entries for
    nodes whose beliefs are still non-informative are expected to hold the
    prior mean (zeros).  The result averages the squared error norm over
    nodes and trials.
    """
    m = np.asarray(means, dtype=float)
    t = np.asarray(truth, dtype=float)
    err = m - t[:, None]
    if err.ndim == 4:
        sq = (err**2).sum(axis=3)
    else:
        sq = err**2
    return sq.mean(axis=2).mean(axis=0)
