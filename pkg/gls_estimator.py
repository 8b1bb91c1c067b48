"""
Generalized least squares for the 16 relative frequencies of a Bell experiment.

The observed deviations from the four no-signalling equalities are pure noise under
the model, but noise correlated with the noise in S or J. Subtracting the best linear
predictor of the error gives the minimum-variance unbiased linear estimate.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from bell_data import flatten
from config import (
    CANONICAL_SIGNS,
    CHSH_LOCAL_BOUND,
    CLAMP_TARGET,
    CONDITION_LIMIT,
    EBERHARD_LOCAL_BOUND,
)
from stat_dist import TailProb, normal_sf

# Outcome-pair sign within a block: +1 when the outcomes agree (++, --)
AGREEMENT = np.array([1.0, -1.0, -1.0, 1.0])


def _nosignalling_matrix():
    B = np.zeros((16, 4))
    alice_plus = np.array([1.0, 1.0, 0.0, 0.0])
    bob_plus = np.array([1.0, 0.0, 1.0, 0.0])
    # Alice's P(+) under setting a must not depend on Bob's setting: blocks (a,1) vs (a,2)
    B[0:4, 0], B[4:8, 0] = alice_plus, -alice_plus
    B[8:12, 1], B[12:16, 1] = alice_plus, -alice_plus
    # Bob's P(+) under setting b must not depend on Alice's setting: blocks (1,b) vs (2,b)
    B[0:4, 2], B[8:12, 2] = bob_plus, -bob_plus
    B[4:8, 3], B[12:16, 3] = bob_plus, -bob_plus
    return B


NOSIGNALLING_B = _nosignalling_matrix()


@dataclass(frozen=True)
class BlockCovariance:
    sigma: np.ndarray

    def block(self, i):
        return self.sigma[4 * i : 4 * i + 4, 4 * i : 4 * i + 4]


@dataclass(frozen=True)
class LinearFunctional:
    a: np.ndarray
    kind: str

    @property
    def bound(self):
        return CHSH_LOCAL_BOUND if self.kind == "S" else EBERHARD_LOCAL_BOUND

    def __call__(self, p):
        return float(self.a @ p)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    z: float
    p: TailProb
    c: np.ndarray
    kind: str
    method: str
    regularized: bool = False

    @property
    def bound(self):
        return CHSH_LOCAL_BOUND if self.kind == "S" else EBERHARD_LOCAL_BOUND


@dataclass(frozen=True)
class Deviation:
    """One observed no-signalling deviation, column k of B^T p-hat."""

    value: float
    se: float
    z: float


@dataclass(frozen=True)
class Projection:
    probs: np.ndarray
    clamped: bool = False
    regularized: bool = False
    notes: list = field(default_factory=list)


def covariance_matrix(fv):
    """Plug-in multinomial covariance of p-hat: four blocks (diag(p) - p p^T) / n_i."""
    sigma = np.zeros((16, 16))
    for i in range(4):
        p = fv.block(i)
        sigma[4 * i : 4 * i + 4, 4 * i : 4 * i + 4] = (np.diag(p) - np.outer(p, p)) / fv.n[i]
    return BlockCovariance(sigma=sigma)


def chsh_coefficients(signs=CANONICAL_SIGNS):
    return np.concatenate([s * AGREEMENT for s in signs])


def functional(kind, signs=CANONICAL_SIGNS):
    if kind == "S":
        return LinearFunctional(a=chsh_coefficients(signs), kind="S")
    if kind == "J":
        a = np.zeros(16)
        a[0] = 1.0  # p(++|11)
        a[4 + 1] = -1.0  # p(+-|12)
        a[8 + 2] = -1.0  # p(-+|21)
        a[12 + 0] = -1.0  # p(++|22)
        return LinearFunctional(a=a, kind="J")
    raise ValueError(f"unknown functional '{kind}'; use S or J")


def solve_psd(matrix, rhs):
    """
    Solve matrix @ x = rhs for a symmetric positive semidefinite matrix.

    Falls back to the pseudo-inverse on the well-conditioned subspace when the
    condition number exceeds CONDITION_LIMIT. Returns (x, regularized).
    """
    cond = np.linalg.cond(matrix)
    if np.isfinite(cond) and cond <= CONDITION_LIMIT:
        try:
            return cho_solve(cho_factor(matrix), rhs), False
        except LinAlgError:
            pass
    pseudo = np.linalg.pinv(matrix, rcond=1.0 / CONDITION_LIMIT, hermitian=True)
    return pseudo @ rhs, True


def _estimate(value, variance, kind, method, c, regularized=False):
    bound = CHSH_LOCAL_BOUND if kind == "S" else EBERHARD_LOCAL_BOUND
    se = math.sqrt(max(variance, 0.0))
    if se > 0:
        z = (value - bound) / se
        p = normal_sf(z)
    else:
        # no sampling variability: the sign of value - bound decides
        z = math.copysign(math.inf, value - bound) if value != bound else 0.0
        p = TailProb(p=0.0, log_p=-math.inf) if value > bound else TailProb(p=1.0, log_p=0.0)
    return Estimate(
        value=float(value),
        se=se,
        z=float(z),
        p=p,
        c=np.asarray(c, dtype=float),
        kind=kind,
        method=method,
        regularized=regularized,
    )


def naive_estimate(ds, kind):
    """a^T p-hat with its plug-in standard error, for a canonical dataset."""
    fv = flatten(ds)
    sigma = covariance_matrix(fv).sigma
    a = functional(kind).a
    return _estimate(a @ fv.phat, a @ sigma @ a, kind, "naive", np.zeros(4))


def optimized_estimate(ds, kind):
    """a^T p-hat - c^T B^T p-hat with c = Sigma_BB^-1 Sigma_Ba, the variance-minimizing choice."""
    fv = flatten(ds)
    sigma = covariance_matrix(fv).sigma
    a = functional(kind).a
    B = NOSIGNALLING_B

    sigma_bb = B.T @ sigma @ B
    sigma_ba = B.T @ sigma @ a
    c, regularized = solve_psd(sigma_bb, sigma_ba)
    if regularized:
        print(f"{ds.name}: Sigma_BB is near singular, using pseudo-inverse for {kind}", file=sys.stderr)

    value = a @ fv.phat - c @ (B.T @ fv.phat)
    variance = a @ sigma @ a - sigma_ba @ c
    return _estimate(value, variance, kind, "optimized", c, regularized)


def nosignalling_deviations(ds):
    """Observed B^T p-hat with plug-in standard errors."""
    fv = flatten(ds)
    sigma = covariance_matrix(fv).sigma
    B = NOSIGNALLING_B
    values = B.T @ fv.phat
    ses = np.sqrt(np.clip(np.diag(B.T @ sigma @ B), 0.0, None))
    return [
        Deviation(value=float(v), se=float(s), z=float(v / s) if s > 0 else 0.0)
        for v, s in zip(values, ses)
    ]


def facet_anchor(signs=CANONICAL_SIGNS):
    """A strictly positive no-signalling point with sum_i s_i rho_i = 2: uniform marginals, rho_i = s_i / 2."""
    return np.concatenate([0.25 + s * AGREEMENT / 8 for s in signs])


def _shrink_toward(p, anchor):
    """Smallest move along the segment to `anchor` that lifts every entry to CLAMP_TARGET."""
    low = p < CLAMP_TARGET
    if not np.any(low):
        return p, False
    weight = np.max((CLAMP_TARGET - p[low]) / (anchor[low] - p[low]))
    return (1.0 - weight) * p + weight * anchor, True


def _project(fv, C, target):
    sigma = covariance_matrix(fv).sigma
    residual = C.T @ fv.phat - target
    sigma_c = sigma @ C
    correction, regularized = solve_psd(C.T @ sigma_c, residual)
    return fv.phat - sigma_c @ correction, regularized


def project_nosignalling(fv):
    """
    GLS projection p-hat - Sigma B (B^T Sigma B)^-1 B^T p-hat onto the no-signalling subspace.

    Block sums are kept because every column of B sums to zero within each block.
    If the projection leaves the simplex it is pulled toward the uniform point until
    every entry is at least CLAMP_TARGET, which keeps it no-signalling.
    """
    probs, regularized = _project(fv, NOSIGNALLING_B, np.zeros(4))
    probs, clamped = _shrink_toward(probs, np.full(16, 0.25))
    notes = []
    if clamped:
        notes.append("clamped")
        print("No-signalling projection left the simplex; moved toward the uniform point", file=sys.stderr)
    if regularized:
        notes.append("regularized")
    return Projection(probs=probs, clamped=clamped, regularized=regularized, notes=notes)


def project_facet(fv, signs=CANONICAL_SIGNS):
    """GLS projection onto the no-signalling subspace intersected with the CHSH facet sum s_i rho_i = 2."""
    C = np.column_stack([NOSIGNALLING_B, chsh_coefficients(signs)])
    target = np.array([0.0, 0.0, 0.0, 0.0, CHSH_LOCAL_BOUND])
    probs, regularized = _project(fv, C, target)
    probs, clamped = _shrink_toward(probs, facet_anchor(signs))
    notes = []
    if clamped:
        notes.append("clamped")
        print("Facet projection left the simplex; moved toward the facet anchor", file=sys.stderr)
    if regularized:
        notes.append("regularized")
    return Projection(probs=probs, clamped=clamped, regularized=regularized, notes=notes)
