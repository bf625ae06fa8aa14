"""Per-link processing ahead of the message-passing stage.

One link between a transmitter with ``n_tx`` antennas and a receiver with
``n_rx`` antennas decomposes into ``n_rx`` independent single-output
estimation problems.  For receive antenna k the baseband observation over
training samples t = 1..N is

    y_k(t) = sum_q h[q,k] * exp(1j * eps[q,k] * t) * z_q(t) + noise,

with ``eps[q,k] = omega_tx[q] - omega_rx[k]`` the relative frequency offset
in radians/sample.  This module generates such observations, jointly
estimates (eps, h) by nonlinear least squares, evaluates the estimation
covariance lower bound, and packages everything into the linear measurement
model consumed by the inference and oracle code:

    r = a_ij @ omega_i + a_ji @ omega_j + n,     n ~ N(0, R).

Stacking convention: r concatenates the per-receive-antenna estimates, so
row (k-1)*n_tx + q corresponds to eps[q, k] (receive antenna outer,
transmit antenna inner).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

MODE_FULL_SIGNAL = "full-signal"
MODE_ORACLE = "oracle-measurement"

# Coarse-search window for the relative offset, radians/sample.  Per-node
# offsets are capped at 2*pi*0.05, so relative offsets stay within +-0.2*pi.
SEARCH_HALFWIDTH = 0.2 * np.pi
DEFAULT_CFO_FRACTION = 0.05  # offsets drawn from 2*pi*[-f, f]


def snr_db_to_noise_var(snr_db: float) -> float:
    """Noise variance for a given SNR in dB, with unit per-transmit-antenna
    signal power (unit-modulus training, E|h|^2 = 1)."""
    return 10.0 ** (-float(snr_db) / 10.0)


@dataclass(frozen=True)
class OscillatorState:
    """Per-antenna frequency offsets of one node, radians/sample."""

    node: int
    omega: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if np.max(np.abs(w)) > np.pi:
            raise ValueError("offsets must lie within [-pi, pi] radians/sample")
        w.setflags(write=False)
        object.__setattr__(self, "omega", w)

    @property
    def n_antennas(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class LinkChannel:
    """Flat-fading gains of one directed link plus receiver noise power.

    ``gains[q, k]`` connects transmit antenna q to receive antenna k.
    ``noise_var`` is the complex noise power per receive antenna (scalar or
    length-n_rx vector, linear units).
    """

    tx: int
    rx: int
    gains: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gains, dtype=complex))
        var = np.broadcast_to(
            np.asarray(self.noise_var, dtype=float), (g.shape[1],)
        ).copy()
        if np.any(var <= 0):
            raise ValueError("noise_var must be positive")
        g.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise_var", var)

    @property
    def n_tx(self) -> int:
        return self.gains.shape[0]

    @property
    def n_rx(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class TrainingMatrix:
    """Unit-modulus training sequences, one column per transmit antenna."""

    z: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=complex))
        n, n_tx = z.shape
        if n <= n_tx:
            raise ValueError("training length must exceed the antenna count")
        if np.max(np.abs(np.abs(z) - 1.0)) > 1e-12:
            raise ValueError("training entries must have unit modulus")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]

    @property
    def n_tx(self) -> int:
        return self.z.shape[1]


def random_training(n_samples: int, n_tx: int, rng_seed=0, kind="random") -> TrainingMatrix:
    """Seeded unit-modulus training.

    ``random``: independent uniform phases per antenna and sample.
    ``shift``: one random base sequence, cyclically shifted per antenna
    (near-orthogonal columns).
    """
    rng = np.random.default_rng(rng_seed)
    if kind == "random":
        z = np.exp(2j * np.pi * rng.random((n_samples, n_tx)))
    elif kind == "shift":
        base = np.exp(2j * np.pi * rng.random(n_samples))
        shift = max(1, n_samples // max(n_tx, 1))
        z = np.stack([np.roll(base, q * shift) for q in range(n_tx)], axis=1)
    else:
        raise ValueError(f"unknown training kind {kind!r}")
    return TrainingMatrix(z)


def build_structure_matrices(n_tx: int, n_rx: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrices of the stacked relative-offset model.

    With the receive-antenna-outer stacking used here, row (k-1)*n_tx + q of
    ``a_tx @ omega_tx + a_rx @ omega_rx`` equals omega_tx[q] - omega_rx[k]:

        a_tx = ones(n_rx, 1) kron eye(n_tx)      (n_tx*n_rx, n_tx)
        a_rx = -eye(n_rx) kron ones(n_tx, 1)     (n_tx*n_rx, n_rx)
    """
    if n_tx < 1 or n_rx < 1:
        raise ValueError("antenna counts must be positive")
    a_tx = np.kron(np.ones((n_rx, 1)), np.eye(n_tx))
    a_rx = -np.kron(np.eye(n_rx), np.ones((n_tx, 1)))
    return a_tx, a_rx


@dataclass(frozen=True)
class EdgeMeasurement:
    """Linear relative-offset measurement for one undirected edge {i, j}.

    ``r`` holds the n_tx*n_rx relative-offset estimates (receive antenna of
    node j outer, transmit antenna of node i inner), ``cov`` their error
    covariance, and ``a_ij`` / ``a_ji`` the coefficient matrices multiplying
    node i's and node j's offset vectors.  Both endpoints of the link share
    this object.
    """

    node_i: int
    node_j: int
    r: np.ndarray
    cov: np.ndarray
    a_ij: np.ndarray
    a_ji: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        cov = 0.5 * (cov + cov.T)
        a_ij = np.atleast_2d(np.asarray(self.a_ij, dtype=float))
        a_ji = np.atleast_2d(np.asarray(self.a_ji, dtype=float))
        m = r.shape[0]
        if cov.shape != (m, m) or a_ij.shape[0] != m or a_ji.shape[0] != m:
            raise ValueError("inconsistent measurement dimensions")
        if np.min(scipy.linalg.eigvalsh(cov)) <= 0:
            raise ValueError("measurement covariance must be positive definite")
        for arr in (r, cov, a_ij, a_ji):
            arr.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "a_ij", a_ij)
        object.__setattr__(self, "a_ji", a_ji)

    @property
    def edge(self) -> tuple:
        return (self.node_i, self.node_j)

    def coeff(self, node: int) -> np.ndarray:
        """Coefficient matrix that multiplies ``node``'s offset vector."""
        if node == self.node_i:
            return self.a_ij
        if node == self.node_j:
            return self.a_ji
        raise KeyError(f"node {node} is not an endpoint of edge {self.edge}")


def generate_observation(
    osc_tx: OscillatorState,
    osc_rx: OscillatorState,
    channel: LinkChannel,
    training: TrainingMatrix,
    rng_seed=0,
) -> np.ndarray:
    """Received training blocks, one row per receive antenna (shape n_rx x N).

    Noise is circular complex Gaussian with per-antenna power
    ``channel.noise_var``; the draw is deterministic given the seed.
    """
    if channel.n_tx != osc_tx.n_antennas or channel.n_rx != osc_rx.n_antennas:
        raise ValueError("channel dimensions do not match oscillator states")
    if training.n_tx != channel.n_tx:
        raise ValueError("training matrix does not match transmit antenna count")
    rng = np.random.default_rng(rng_seed)
    n = training.n_samples
    t = np.arange(1, n + 1)
    eps = osc_tx.omega[:, None] - osc_rx.omega[None, :]  # (n_tx, n_rx)
    y = np.empty((channel.n_rx, n), dtype=complex)
    for k in range(channel.n_rx):
        rotated = np.exp(1j * np.outer(t, eps[:, k])) * training.z
        noise = np.sqrt(channel.noise_var[k] / 2.0) * (
            rng.standard_normal(n) + 1j * rng.standard_normal(n)
        )
        y[k] = rotated @ channel.gains[:, k] + noise
    return y


class MLEstimate(NamedTuple):
    eps: np.ndarray
    gains: np.ndarray
    converged: bool


def _basis(eps: np.ndarray, z: np.ndarray) -> np.ndarray:
    t = np.arange(1, z.shape[0] + 1)
    return np.exp(1j * np.outer(t, eps)) * z


def _ls_gains(eps, z, y):
    lam = _basis(eps, z)
    gram = lam.conj().T @ lam
    return np.linalg.solve(gram, lam.conj().T @ y)


def _grid_scores(eps_grid, z, y, chunk=4096):
    """Concentrated least-squares score for a batch of offset vectors."""
    n, n_tx = z.shape
    t = np.arange(1, n + 1)
    scores = np.empty(eps_grid.shape[0])
    for lo in range(0, eps_grid.shape[0], chunk):
        block = eps_grid[lo : lo + chunk]
        lam = np.exp(1j * block[:, None, :] * t[None, :, None]) * z[None]
        gram = np.einsum("gni,gnj->gij", lam.conj(), lam)
        proj = np.einsum("gni,n->gi", lam.conj(), y)
        coef = np.linalg.solve(gram, proj[..., None])[..., 0]
        scores[lo : lo + block.shape[0]] = np.einsum(
            "gi,gi->g", proj.conj(), coef
        ).real
    return scores


def estimate_relative_cfo_ml(
    y: np.ndarray,
    training: TrainingMatrix,
    max_refine: int = 100,
    grad_tol: float = 1e-12,
) -> MLEstimate:
    """Joint least-squares estimate of relative offsets and channel gains.

    The channel enters linearly, so for each candidate offset vector the
    gains are solved in closed form and the concentrated residual is scored.
    Candidates come from a coarse grid (step 2*pi/(8N) per dimension over
    +-0.2*pi, full Cartesian product); the best grid point is then refined
    by Gauss-Newton with backtracking over the stacked real parameters
    (eps, Re h, Im h) until the cost gradient norm drops to ``grad_tol``.
    If the refinement has not met the tolerance after ``max_refine`` steps,
    the lowest-cost point visited is returned with ``converged=False``.
    """
    y = np.asarray(y, dtype=complex).ravel()
    z = training.z
    n, n_tx = z.shape
    if y.shape[0] != n:
        raise ValueError("observation length does not match training length")
    if n <= 2 * n_tx:
        raise ValueError("need more than 2*n_tx samples for identifiability")

    step = 2.0 * np.pi / (8.0 * n)
    axis = np.arange(-SEARCH_HALFWIDTH, SEARCH_HALFWIDTH + step / 2.0, step)
    mesh = np.meshgrid(*([axis] * n_tx), indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    eps = grid[int(np.argmax(_grid_scores(grid, z, y)))].copy()
    gains = _ls_gains(eps, z, y)

    t = np.arange(1, n + 1)

    def cost_of(e, h):
        return float(np.sum(np.abs(y - _basis(e, z) @ h) ** 2))

    best = (cost_of(eps, gains), eps.copy(), gains.copy())
    converged = False
    for _ in range(max_refine):
        lam = _basis(eps, z)
        resid_c = y - lam @ gains
        d_eps = 1j * t[:, None] * lam * gains[None, :]
        jac = np.concatenate(
            [
                np.concatenate([d_eps.real, lam.real, -lam.imag], axis=1),
                np.concatenate([d_eps.imag, lam.imag, lam.real], axis=1),
            ],
            axis=0,
        )
        resid = np.concatenate([resid_c.real, resid_c.imag])
        grad = jac.T @ resid
        if np.linalg.norm(grad) <= grad_tol:
            converged = True
            break
        delta, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        cost = float(resid @ resid)
        scale = 1.0
        for _ls in range(30):
            e_new = eps + scale * delta[:n_tx]
            h_new = gains + scale * (
                delta[n_tx : 2 * n_tx] + 1j * delta[2 * n_tx :]
            )
            c_new = cost_of(e_new, h_new)
            # Near the optimum the true decrease of a full step drops below
            # float resolution of the cost; accept anything within rounding
            # so the gradient can keep contracting.
            if c_new <= cost * (1.0 + 1e-12):
                break
            scale *= 0.5
        else:
            break  # no acceptable step; gradient is numerically flat
        eps, gains = e_new, h_new
        if c_new < best[0]:
            best = (c_new, eps.copy(), gains.copy())
    if not converged:
        _, eps, gains = best
    return MLEstimate(eps, gains, converged)


def miso_crb(eps, gains, training: TrainingMatrix, noise_var: float) -> np.ndarray:
    """Covariance lower bound for one single-output offset estimate.

    For the model y = B(eps) h + noise with B = exp(1j*t*eps) (.) Z and
    sample index weights D = diag(1..N), the bound on the offset block is

        (noise_var / 2) * inv(Re[V - T^H inv(B^H B) T]),
        V = diag(h)^H B^H D^2 B diag(h),   T = B^H D B diag(h),

    i.e. the channel block of the Fisher information is eliminated by a
    Schur complement.
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    h = np.atleast_1d(np.asarray(gains, dtype=complex))
    z = training.z
    if eps.shape[0] != z.shape[1] or h.shape[0] != z.shape[1]:
        raise ValueError("eps/gains length must match the antenna count")
    lam = _basis(eps, z)
    t = np.arange(1, z.shape[0] + 1)
    gram = lam.conj().T @ lam
    m1 = lam.conj().T @ (t[:, None] * lam)
    m2 = lam.conj().T @ ((t**2)[:, None] * lam)
    v = h.conj()[:, None] * m2 * h[None, :]
    tt = m1 * h[None, :]
    try:
        inner = v - tt.conj().T @ np.linalg.solve(gram, tt)
    except np.linalg.LinAlgError as exc:
        raise ValueError("rank-deficient training basis") from exc
    fim = inner.real
    fim = 0.5 * (fim + fim.T)
    if np.min(scipy.linalg.eigvalsh(fim)) <= 0:
        raise ValueError("information matrix is not positive definite")
    chol = scipy.linalg.cho_factor(fim, lower=True)
    crb = (float(noise_var) / 2.0) * scipy.linalg.cho_solve(chol, np.eye(fim.shape[0]))
    return 0.5 * (crb + crb.T)


def mimo_crb(blocks) -> np.ndarray:
    """Block-diagonal assembly of the per-receive-antenna bounds."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    if not blocks:
        raise ValueError("need at least one block")
    shape = blocks[0].shape
    if any(b.shape != shape or b.shape[0] != b.shape[1] for b in blocks):
        raise ValueError("blocks must be square and equally sized")
    return scipy.linalg.block_diag(*blocks)


def scalar_cfo_crb(noise_var: float, n_samples: int) -> float:
    """Single-antenna, unit-gain offset bound: 6*sigma^2 / (N*(N^2-1))."""
    n = int(n_samples)
    return 6.0 * float(noise_var) / (n * (n**2 - 1))


def measure_edge(
    edge: tuple,
    osc_i: OscillatorState,
    osc_j: OscillatorState,
    channel: LinkChannel,
    training: TrainingMatrix,
    mode: str = MODE_FULL_SIGNAL,
    rng_seed=0,
) -> EdgeMeasurement:
    """Produce the linear measurement for one edge, node i transmitting.

    ``full-signal`` runs the complete chain: generate the training
    observation, estimate (eps, h) per receive antenna, and set the
    covariance to the bound evaluated at the estimates.  ``oracle-
    measurement`` bypasses the estimator: the covariance is the bound at
    the true parameters and r is drawn directly from N(mean, cov), which
    isolates the message-passing stage from estimator quality.
    """
    i, j = int(edge[0]), int(edge[1])
    if (channel.tx, channel.rx) != (i, j):
        raise ValueError("channel endpoints do not match the edge")
    if osc_i.node != i or osc_j.node != j:
        raise ValueError("oscillator states do not match the edge")
    a_ij, a_ji = build_structure_matrices(osc_i.n_antennas, osc_j.n_antennas)
    rng = np.random.default_rng(rng_seed)

    if mode == MODE_FULL_SIGNAL:
        y = generate_observation(osc_i, osc_j, channel, training, rng)
        parts = []
        blocks = []
        for k in range(channel.n_rx):
            est = estimate_relative_cfo_ml(y[k], training)
            parts.append(est.eps)
            blocks.append(miso_crb(est.eps, est.gains, training, channel.noise_var[k]))
        r = np.concatenate(parts)
        cov = mimo_crb(blocks)
    elif mode == MODE_ORACLE:
        blocks = [
            miso_crb(
                osc_i.omega - osc_j.omega[k],
                channel.gains[:, k],
                training,
                channel.noise_var[k],
            )
            for k in range(channel.n_rx)
        ]
        cov = mimo_crb(blocks)
        mean = a_ij @ osc_i.omega + a_ji @ osc_j.omega
        r = mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.shape[0])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EdgeMeasurement(i, j, r, cov, a_ij, a_ji)
