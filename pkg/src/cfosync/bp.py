"""Synchronous Gaussian message passing over the link-measurement factor graph.

Every undirected edge {i, j} carries a pairwise likelihood factor built from
its :class:`~cfosync.measurement.EdgeMeasurement`; every node i carries its
offset vector as a variable plus an optional prior factor.  Messages flow in
two half-steps per iteration: first every variable sends to its adjacent
factors the product of its prior and the previous iteration's incoming
factor messages (excluding the target factor), then every factor sends the
conditioned-and-marginalized likelihood onward.  Beliefs (products of all
incoming factor messages and the prior) are recorded every iteration.

The reference node is conditioned out exactly: its offsets are known (zero,
by definition of the reference), so factors on reference edges emit a fixed
message that never changes across iterations, the reference holds no belief,
and no infinite-precision prior is ever represented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gaussian import (
    GaussianMessage,
    SingularPrecisionError,
    noninformative,
    product_all,
    to_moments,
)
from .measurement import EdgeMeasurement
from .topology import NetworkGraph, neighbors

DEFAULT_ETA = 1e-8
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class BPState:
    """All directed messages and node beliefs at one iteration.

    ``f2v[(j, i)]`` is the message sent to node i by the factor on edge
    {i, j} (dimension = node i's antenna count); ``v2f[(i, j)]`` is node i's
    message into that factor.  Directed pairs pointing at the reference are
    omitted (the reference holds no belief), as are pairs leaving it (its
    contribution is the constant conditioned factor message).
    """

    graph: NetworkGraph
    measurements: dict
    iteration: int
    f2v: dict
    v2f: dict
    beliefs: dict
    priors: dict


@dataclass(frozen=True)
class BPTrajectory:
    """Per-iteration record of a message-passing run.

    ``means[l-1][i]`` / ``covariances[l-1][i]`` hold node i's belief moments
    after iteration l (zero vector / None while the belief is still
    non-informative).  ``beliefs`` keeps the raw information-form snapshots.
    """

    graph: NetworkGraph
    iterations_run: int
    converged: bool
    means: tuple
    covariances: tuple
    beliefs: tuple

    def __post_init__(self):
        if len(self.means) != self.iterations_run:
            raise ValueError("one snapshot per iteration expected")

    def means_at(self, iteration: int) -> dict:
        """Belief means after ``iteration`` (>=1), clamped to the last
        recorded iteration; iteration 0 returns the prior means (zeros)."""
        if iteration <= 0:
            return {
                i: np.zeros(self.graph.antenna_count(i))
                for i in self.graph.nodes
                if i != self.graph.reference
            }
        return self.means[min(iteration, self.iterations_run) - 1]

    def final_means(self) -> dict:
        return self.means[-1]

    def final_covariances(self) -> dict:
        return self.covariances[-1]


def _index_measurements(graph: NetworkGraph, measurements) -> dict:
    by_edge = {}
    for m in measurements:
        key = (min(m.node_i, m.node_j), max(m.node_i, m.node_j))
        by_edge[key] = m
    missing = [e for e in graph.edges if e not in by_edge]
    if missing:
        raise ValueError(f"missing measurements for edges {missing}")
    return by_edge


def _default_priors(graph: NetworkGraph, priors) -> dict:
    full = {}
    for i in graph.nodes:
        if i == graph.reference:
            continue
        full[i] = noninformative(graph.antenna_count(i))
    if priors:
        for i, msg in priors.items():
            if i == graph.reference:
                raise ValueError("the reference node is conditioned exactly; it takes no prior")
            if i not in full:
                raise KeyError(f"prior given for unknown node {i}")
            if msg.dim != full[i].dim:
                raise ValueError(f"prior dimension mismatch at node {i}")
            full[i] = msg
    return full


def init(graph: NetworkGraph, measurements, priors=None) -> BPState:
    """Iteration-0 state: every directed message is non-informative."""
    meas = _index_measurements(graph, measurements)
    full_priors = _default_priors(graph, priors)
    ref = graph.reference
    f2v = {}
    v2f = {}
    for i, j in graph.edges:
        for src, dst in ((i, j), (j, i)):
            if dst != ref:
                f2v[(src, dst)] = noninformative(graph.antenna_count(dst))
            if src != ref and dst != ref:
                v2f[(src, dst)] = noninformative(graph.antenna_count(src))
    return BPState(graph, meas, 0, f2v, v2f, {}, full_priors)


def factor_to_variable(
    meas: EdgeMeasurement, target: int, incoming: GaussianMessage
) -> GaussianMessage:
    """Message from an edge factor to ``target`` given the far side's message.

    A non-informative incoming message yields a non-informative output (the
    far-side offsets are completely unconstrained, so the relative
    measurement says nothing about the target).  Otherwise the far side is
    integrated out: with far-side moments (v, C) and coefficient matrices
    a_t (target) and a_o (far side),

        S   = cov + a_o C a_o^T
        lam = a_t^T S^-1 a_t,    eta = a_t^T S^-1 (r - a_o v).
    """
    other = meas.node_i if target == meas.node_j else meas.node_j
    if target not in meas.edge:
        raise KeyError(f"node {target} is not on edge {meas.edge}")
    a_t = meas.coeff(target)
    a_o = meas.coeff(other)
    if incoming.dim != a_o.shape[1]:
        raise ValueError("incoming message dimension does not match the far side")
    if incoming.is_noninformative:
        return noninformative(a_t.shape[1])
    v_in, c_in = to_moments(incoming)
    s = meas.cov + a_o @ c_in @ a_o.T
    chol = scipy.linalg.cho_factor(0.5 * (s + s.T), lower=True)
    si_at = scipy.linalg.cho_solve(chol, a_t)
    lam = a_t.T @ si_at
    eta = si_at.T @ (meas.r - a_o @ v_in)
    return GaussianMessage(lam, eta)


def reference_factor_message(meas: EdgeMeasurement, target: int) -> GaussianMessage:
    """Fixed message a reference-edge factor sends to its non-reference end.

    The reference offsets are known to be zero (they define the frequency
    origin), so conditioning replaces the far-side covariance by zero:

        lam = a_t^T cov^-1 a_t,    eta = a_t^T cov^-1 r.

    This message is identical at every iteration.
    """
    a_t = meas.coeff(target)
    chol = scipy.linalg.cho_factor(meas.cov, lower=True)
    ci_at = scipy.linalg.cho_solve(chol, a_t)
    return GaussianMessage(a_t.T @ ci_at, ci_at.T @ meas.r)


def variable_to_factor(state: BPState, node: int, exclude: int) -> GaussianMessage:
    """Product of ``node``'s prior and incoming factor messages, leaving out
    the factor on edge {node, exclude}."""
    nbrs = neighbors(state.graph, node)
    if exclude not in nbrs:
        raise KeyError(f"{node} and {exclude} do not share an edge")
    incoming = [
        state.f2v[(k, node)] for k in sorted(nbrs) if k != exclude
    ]
    return product_all(
        [state.priors[node], *incoming], state.graph.antenna_count(node)
    )


def compute_belief(state: BPState, node: int) -> GaussianMessage:
    """Product of the prior and every incoming factor message at ``node``."""
    if node == state.graph.reference:
        raise KeyError("the reference node is conditioned exactly and holds no belief")
    incoming = [state.f2v[(k, node)] for k in sorted(neighbors(state.graph, node))]
    return product_all(
        [state.priors[node], *incoming], state.graph.antenna_count(node)
    )


def belief_moments(state: BPState, node: int) -> tuple[np.ndarray, np.ndarray]:
    """Moment form of a node's belief; raises SingularPrecisionError while
    the belief is still non-informative."""
    return to_moments(compute_belief(state, node))


def run(
    graph: NetworkGraph,
    measurements,
    priors=None,
    max_iter: int = DEFAULT_MAX_ITER,
    eta: float = DEFAULT_ETA,
) -> BPTrajectory:
    """Run the synchronous schedule and record beliefs every iteration.

    Each iteration computes all variable-to-factor messages from the
    previous iteration's factor messages, then all factor-to-variable
    messages from those fresh inputs.  The run stops once at least one node
    has a positive-definite belief and every such node moved its mean by
    less than ``eta`` since the previous iteration (``eta = 0`` disables
    early stopping), or after ``max_iter`` iterations with ``converged``
    reporting False.
    """
    state = init(graph, measurements, priors)
    ref = graph.reference
    meas = state.measurements
    ref_msgs = {
        (ref, i): reference_factor_message(meas[(min(ref, i), max(ref, i))], i)
        for i in sorted(neighbors(graph, ref))
    }
    tracked = [i for i in graph.nodes if i != ref]

    means_hist = []
    cov_hist = []
    belief_hist = []
    prev_means = {}
    converged = False
    iterations = 0

    for it in range(1, max_iter + 1):
        new_v2f = {
            key: variable_to_factor(state, *key) for key in sorted(state.v2f)
        }
        new_f2v = dict(ref_msgs)
        for src, dst in sorted(state.f2v):
            if src == ref:
                continue
            edge = (min(src, dst), max(src, dst))
            new_f2v[(src, dst)] = factor_to_variable(
                meas[edge], dst, new_v2f[(src, dst)]
            )
        beliefs = {}
        means = {}
        covs = {}
        state = BPState(graph, meas, it, new_f2v, new_v2f, beliefs, state.priors)
        for i in tracked:
            b = compute_belief(state, i)
            beliefs[i] = b
            if b.is_noninformative:
                means[i] = np.zeros(b.dim)
                covs[i] = None
            else:
                means[i], covs[i] = to_moments(b)
        means_hist.append(means)
        cov_hist.append(covs)
        belief_hist.append(dict(beliefs))
        iterations = it

        any_pd = False
        settled = True
        for i in tracked:
            if covs[i] is None:
                continue
            any_pd = True
            prev = prev_means.get(i)
            if prev is None or not np.linalg.norm(means[i] - prev) < eta:
                settled = False
            prev_means[i] = means[i]
        if eta > 0 and any_pd and settled:
            converged = True
            break

    return BPTrajectory(
        graph,
        iterations,
        converged,
        tuple(means_hist),
        tuple(cov_hist),
        tuple(belief_hist),
    )


def write_trajectory_csv(traj: BPTrajectory, path):
    """Dump a trajectory as CSV rows ``iter,node,mean_*,cov_*``.

    Columns are sized to the largest antenna count; nodes with fewer
    antennas leave trailing fields empty.  Means default to the prior mean
    (zeros) and covariance diagonals to ``inf`` while a belief is still
    non-informative.  The reference node is reported with its defining
    zero offsets and zero variance.
    """
    g = traj.graph
    width = max(g.antennas)
    header = (
        ["iter", "node"]
        + [f"mean_{c + 1}" for c in range(width)]
        + [f"cov_{c + 1}" for c in range(width)]
    )

    def fmt(values, dim):
        cells = [repr(float(v)) for v in values]
        return cells + [""] * (width - dim)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for it in range(1, traj.iterations_run + 1):
            means = traj.means[it - 1]
            covs = traj.covariances[it - 1]
            for node in g.nodes:
                dim = g.antenna_count(node)
                if node == g.reference:
                    mean_cells = fmt(np.zeros(dim), dim)
                    cov_cells = fmt(np.zeros(dim), dim)
                else:
                    mean_cells = fmt(means[node], dim)
                    cov = covs[node]
                    diag = np.full(dim, np.inf) if cov is None else np.diag(cov)
                    cov_cells = fmt(diag, dim)
                fh.write(",".join([str(it), str(node)] + mean_cells + cov_cells) + "\n")
