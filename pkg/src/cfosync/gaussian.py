"""Information-form Gaussian message algebra.

Every distribution exchanged by the inference code is a Gaussian stored as a
precision matrix ``lam = C^-1`` together with an information vector
``eta = lam @ mean``.  The information form is canonical here because a
completely non-informative message (zero precision) has no moment-form
representation, and the message-passing engine starts from exactly that
state on every link.

Messages are immutable value objects; all operations are pure functions, so
instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

# Tolerances for the tiny (<= a few antennas) matrices handled here.
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10   # smallest eigenvalue allowed below zero on construction
PD_TOL = 1e-10    # smallest eigenvalue required for moment conversion


class SingularPrecisionError(ValueError):
    """Moment form requested for a message whose precision is not positive
    definite.  Typically means a belief was queried before any information
    from the reference node reached it."""


@dataclass(frozen=True)
class GaussianMessage:
    """Gaussian in information form: precision matrix and information vector.

    The precision matrix is symmetrized on construction and must be positive
    semi-definite (eigenvalues >= -PSD_TOL).  A zero-precision message is
    non-informative and must carry a zero information vector.
    """

    precision: np.ndarray
    info_vec: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ValueError(f"precision must be square, got shape {lam.shape}")
        lam = 0.5 * (lam + lam.T)
        eta = self.info_vec
        if eta is None:
            eta = np.zeros(lam.shape[0])
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if eta.shape != (lam.shape[0],):
            raise ValueError(
                f"info_vec shape {eta.shape} does not match precision {lam.shape}"
            )
        if lam.size and np.min(scipy.linalg.eigvalsh(lam)) < -PSD_TOL:
            raise ValueError("precision is not positive semi-definite")
        if not lam.any() and eta.any():
            raise ValueError("zero-precision message must carry a zero info_vec")
        lam.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "precision", lam)
        object.__setattr__(self, "info_vec", eta)

    @property
    def dim(self) -> int:
        return self.precision.shape[0]

    @property
    def is_noninformative(self) -> bool:
        """True when the precision matrix is exactly zero."""
        return not self.precision.any()


def noninformative(dim: int) -> GaussianMessage:
    """The identity element of the message product: zero precision."""
    return GaussianMessage(np.zeros((dim, dim)), np.zeros(dim))


def product(a: GaussianMessage, b: GaussianMessage) -> GaussianMessage:
    """Pointwise product of two Gaussians: precisions and info vectors add."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return GaussianMessage(a.precision + b.precision, a.info_vec + b.info_vec)


def product_all(messages, dim: int) -> GaussianMessage:
    """Product of an iterable of messages (empty product = non-informative)."""
    lam = np.zeros((dim, dim))
    eta = np.zeros(dim)
    for m in messages:
        if m.dim != dim:
            raise ValueError(f"dimension mismatch: {m.dim} vs {dim}")
        lam = lam + m.precision
        eta = eta + m.info_vec
    return GaussianMessage(lam, eta)


def to_moments(m: GaussianMessage) -> tuple[np.ndarray, np.ndarray]:
    """Convert to (mean, covariance).

    Requires the precision to be positive definite (smallest eigenvalue
    above ``PD_TOL``); raises :class:`SingularPrecisionError` otherwise.
    Inversion goes through a Cholesky factorization, never a pseudo-inverse:
    a factorization failure indicates a bug upstream, not recoverable data.
    """
    lam = m.precision
    if not lam.any() or np.min(scipy.linalg.eigvalsh(lam)) <= PD_TOL:
        raise SingularPrecisionError(
            "precision is singular or indefinite; message has no moments"
        )
    try:
        chol = scipy.linalg.cho_factor(lam, lower=True)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
        raise SingularPrecisionError(str(exc)) from exc
    cov = scipy.linalg.cho_solve(chol, np.eye(m.dim))
    cov = 0.5 * (cov + cov.T)
    mean = cov @ m.info_vec
    return mean, cov


def from_moments(mean: np.ndarray, covariance: np.ndarray) -> GaussianMessage:
    """Build a message from its moment-form parameters (covariance p.d.)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    cov = 0.5 * (cov + cov.T)
    if np.min(scipy.linalg.eigvalsh(cov)) <= PD_TOL:
        raise SingularPrecisionError("covariance must be positive definite")
    chol = scipy.linalg.cho_factor(cov, lower=True)
    lam = scipy.linalg.cho_solve(chol, np.eye(cov.shape[0]))
    lam = 0.5 * (lam + lam.T)
    return GaussianMessage(lam, lam @ mean)
