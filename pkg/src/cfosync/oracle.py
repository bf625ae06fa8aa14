"""Centralized reference machinery used to verify the distributed engine.

All edge measurements are stacked into one linear model r = A w + n over
the non-reference offset vector w (reference contributions are known-zero
and drop out), from which the weighted least-squares / posterior-mean
solution, its covariance, and the estimation lower bound follow in closed
form.  A brute-force joint-Gaussian marginalization is provided for small
problems as an independent second route.

Dense linear algebra only; problem sizes here are tiny by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gaussian import SingularPrecisionError, to_moments
from .topology import NetworkGraph

MAX_BRUTE_FORCE_DIM = 32


@dataclass(frozen=True)
class StackedModel:
    """Stacked linear measurement model over non-reference offsets.

    Rows follow the edges in ascending (i, j) order; the unknown vector
    concatenates the offset vectors of non-reference nodes in ascending id
    order (``slices`` maps node id to its column block).
    """

    a: np.ndarray
    r: np.ndarray
    cov: np.ndarray
    slices: dict
    edge_order: tuple

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def split(self, stacked: np.ndarray) -> dict:
        """Per-node view of a stacked vector or matrix diagonal blocks."""
        if stacked.ndim == 1:
            return {i: stacked[s] for i, s in self.slices.items()}
        return {i: stacked[s, s] for i, s in self.slices.items()}


def stack(graph: NetworkGraph, measurements) -> StackedModel:
    """Assemble the stacked model from one measurement per edge."""
    by_edge = {}
    for m in measurements:
        by_edge[(min(m.node_i, m.node_j), max(m.node_i, m.node_j))] = m
    missing = [e for e in graph.edges if e not in by_edge]
    if missing:
        raise ValueError(f"missing measurements for edges {missing}")
    ref = graph.reference
    slices = {}
    col = 0
    for i in graph.nodes:
        if i == ref:
            continue
        n = graph.antenna_count(i)
        slices[i] = slice(col, col + n)
        col += n
    rows = sum(by_edge[e].r.shape[0] for e in graph.edges)
    a = np.zeros((rows, col))
    r = np.zeros(rows)
    cov = np.zeros((rows, rows))
    lo = 0
    for e in graph.edges:
        m = by_edge[e]
        hi = lo + m.r.shape[0]
        r[lo:hi] = m.r
        cov[lo:hi, lo:hi] = m.cov
        for node in e:
            if node != ref:
                a[lo:hi, slices[node]] = m.coeff(node)
        lo = hi
    return StackedModel(a, r, cov, slices, tuple(graph.edges))


def _augment_with_priors(model: StackedModel, priors) -> StackedModel:
    """Append informative priors as pseudo-measurements (identity rows)."""
    rows = []
    rhs = []
    covs = []
    for node, msg in sorted(priors.items()):
        if msg.is_noninformative:
            continue
        mean, cov = to_moments(msg)
        sel = np.zeros((msg.dim, model.dim))
        sel[:, model.slices[node]] = np.eye(msg.dim)
        rows.append(sel)
        rhs.append(mean)
        covs.append(cov)
    if not rows:
        return model
    a = np.vstack([model.a, *rows])
    r = np.concatenate([model.r, *rhs])
    cov = scipy.linalg.block_diag(model.cov, *covs)
    return StackedModel(a, r, cov, model.slices, model.edge_order)


def _information(model: StackedModel) -> tuple[np.ndarray, np.ndarray]:
    chol = scipy.linalg.cho_factor(model.cov, lower=True)
    wa = scipy.linalg.cho_solve(chol, model.a)
    gram = model.a.T @ wa
    return 0.5 * (gram + gram.T), wa.T @ model.r


def centralized_mmse(model: StackedModel, priors=None) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean estimate and covariance of the stacked offsets.

    With a non-informative prior this is the weighted least-squares (equal
    to maximum-likelihood) solution; informative priors are folded in as
    pseudo-measurements.  Raises on rank deficiency, which for these models
    means some node has no measurement path to the reference.
    """
    if priors:
        model = _augment_with_priors(model, priors)
    gram, proj = _information(model)
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "stacked model is rank deficient (graph not connected to the reference)"
        ) from exc
    omega = scipy.linalg.cho_solve(chol, proj)
    cov = scipy.linalg.cho_solve(chol, np.eye(model.dim))
    return omega, 0.5 * (cov + cov.T)


def centralized_crb(model: StackedModel) -> np.ndarray:
    """Estimation covariance lower bound of the stacked offsets:
    inv(A^T R^-1 A)."""
    gram, _ = _information(model)
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "stacked model is rank deficient (graph not connected to the reference)"
        ) from exc
    crb = scipy.linalg.cho_solve(chol, np.eye(model.dim))
    return 0.5 * (crb + crb.T)


def brute_force_marginals(graph: NetworkGraph, measurements, priors=None) -> dict:
    """Exact per-node marginals from the explicit joint Gaussian.

    Builds the full joint precision over all non-reference offsets from the
    edge factors (and any priors), solves for the joint mean, and reads the
    per-node marginal covariance off the node blocks of the joint
    covariance.  Intended as an independent check; refuses problems larger
    than ``MAX_BRUTE_FORCE_DIM`` unknowns.
    """
    model = stack(graph, measurements)
    if model.dim > MAX_BRUTE_FORCE_DIM:
        raise ValueError(f"joint dimension {model.dim} exceeds brute-force cap")
    by_edge = {}
    for m in measurements:
        by_edge[(min(m.node_i, m.node_j), max(m.node_i, m.node_j))] = m
    ref = graph.reference
    lam = np.zeros((model.dim, model.dim))
    eta = np.zeros(model.dim)
    for e in graph.edges:
        m = by_edge[e]
        w = np.linalg.inv(m.cov)
        live = [n for n in e if n != ref]
        for na in live:
            sa = model.slices[na]
            ca = m.coeff(na)
            eta[sa] += ca.T @ w @ m.r
            for nb in live:
                sb = model.slices[nb]
                lam[sa, sb] += ca.T @ w @ m.coeff(nb)
    if priors:
        for node, msg in priors.items():
            if msg.is_noninformative:
                continue
            s = model.slices[node]
            lam[s, s] += msg.precision
            eta[s] += msg.info_vec
    lam = 0.5 * (lam + lam.T)
    if np.min(scipy.linalg.eigvalsh(lam)) <= 0:
        raise SingularPrecisionError("joint precision is singular")
    chol = scipy.linalg.cho_factor(lam, lower=True)
    mean = scipy.linalg.cho_solve(chol, eta)
    sigma = scipy.linalg.cho_solve(chol, np.eye(model.dim))
    sigma = 0.5 * (sigma + sigma.T)
    return {
        i: (mean[s], sigma[s, s]) for i, s in model.slices.items()
    }
