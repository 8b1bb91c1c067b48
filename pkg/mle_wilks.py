"""
Multinomial maximum likelihood for the 8-parameter no-signalling model and for the
7-parameter model on a CHSH facet, plus the Wilks likelihood-ratio test of local realism.

Both models are affine in their parameters, so the log likelihood is concave and a
damped Newton ascent with a log barrier on the cell probabilities finds the maximum.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from bell_data import SIGN_VECTORS, chsh_values, flatten
from config import (
    ARMIJO,
    BACKTRACK_FACTOR,
    BARRIER_FACTOR,
    BARRIER_MU0,
    BARRIER_STAGES,
    CANONICAL_SIGNS,
    CHSH_LOCAL_BOUND,
    FACET_TOL,
    GRADIENT_TOL,
    MAX_BACKTRACKS,
    MAX_ITERATIONS,
    NOSIGNALLING_TOL,
    PROBABILITY_FLOOR,
    STEP_TOL,
)
from gls_estimator import (
    AGREEMENT,
    NOSIGNALLING_B,
    project_facet,
    project_nosignalling,
    solve_psd,
)
from stat_dist import wilks_mixture_sf

TERMINATED_AT_START = "terminated-at-start"

# p = PROBS_OFFSET + PROBS_DESIGN @ theta with theta = (pa1, pa2, qb1, qb2, rho11, rho12, rho21, rho22)
ALICE_SIGN = np.array([1.0, 1.0, -1.0, -1.0])
BOB_SIGN = np.array([1.0, -1.0, 1.0, -1.0])


def _probability_map():
    offset = np.tile([-0.25, 0.25, 0.25, 0.75], 4)
    design = np.zeros((16, 8))
    for i, (a, b) in enumerate([(1, 1), (1, 2), (2, 1), (2, 2)]):
        rows = slice(4 * i, 4 * i + 4)
        design[rows, a - 1] = ALICE_SIGN / 2
        design[rows, 2 + b - 1] = BOB_SIGN / 2
        design[rows, 4 + i] = AGREEMENT / 4
    return offset, design


PROBS_OFFSET, PROBS_DESIGN = _probability_map()


class InfeasibleParametersError(ValueError):
    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class NoSignallingViolationError(ValueError):
    pass


class UnsupportedGeometryError(ValueError):
    def __init__(self, message, violated=()):
        self.violated = list(violated)
        super().__init__(message)


@dataclass(frozen=True)
class NsParams:
    pa: np.ndarray
    qb: np.ndarray
    rho: np.ndarray

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(pa=theta[0:2].copy(), qb=theta[2:4].copy(), rho=theta[4:8].copy())

    @property
    def vector(self):
        return np.concatenate([self.pa, self.qb, self.rho])

    def chsh(self, signs=CANONICAL_SIGNS):
        return float(np.dot(signs, self.rho))


@dataclass(frozen=True)
class LogLik:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class MleFit:
    params: NsParams
    probs: np.ndarray
    loglik: float
    model: str
    converged: bool
    iterations: int
    active_constraint: int | None = None
    grad_norm: float = 0.0
    note: str | None = None

    @property
    def S(self):
        return self.params.chsh()

    @property
    def J(self):
        return (self.S - CHSH_LOCAL_BOUND) / 4


@dataclass(frozen=True)
class WilksResult:
    statistic: float
    p: object
    fit_ns: MleFit
    fit_lr: MleFit
    warnings: list = field(default_factory=list)

    @property
    def z_equivalent(self):
        return math.sqrt(self.statistic)


@dataclass(frozen=True)
class OneStep:
    params: NsParams
    step_norm: float
    singular: bool = False


def params_to_probs(th):
    p = PROBS_OFFSET + PROBS_DESIGN @ th.vector
    if p.min() < -1e-15:
        cell = int(np.argmin(p))
        raise InfeasibleParametersError(f"parameters give negative probability {p[cell]:.3g} in cell {cell}", cell)
    return p


def probs_to_params(p):
    """Recover (pa, qb, rho) from a normalized no-signalling probability vector."""
    p = np.asarray(p, dtype=float)
    blocks = p.reshape(4, 4)
    if np.max(np.abs(blocks.sum(axis=1) - 1.0)) > NOSIGNALLING_TOL:
        raise NoSignallingViolationError("blocks do not sum to one")
    if np.max(np.abs(NOSIGNALLING_B.T @ p)) > NOSIGNALLING_TOL:
        raise NoSignallingViolationError(
            "probabilities violate no-signalling; project them first (gls_estimator.project_nosignalling)"
        )
    # marginals averaged over the two blocks that share the local setting
    alice_plus = blocks[:, 0] + blocks[:, 1]
    bob_plus = blocks[:, 0] + blocks[:, 2]
    pa = np.array([(alice_plus[0] + alice_plus[1]) / 2, (alice_plus[2] + alice_plus[3]) / 2])
    qb = np.array([(bob_plus[0] + bob_plus[2]) / 2, (bob_plus[1] + bob_plus[3]) / 2])
    rho = blocks @ AGREEMENT
    return NsParams(pa=pa, qb=qb, rho=rho)


def _check_strictly_feasible(p):
    if p.min() < PROBABILITY_FLOOR:
        cell = int(np.argmin(p))
        raise InfeasibleParametersError(
            f"cell {cell} has probability {p[cell]:.3g}, below {PROBABILITY_FLOOR}", cell
        )


def _count_loglik(p, counts):
    seen = counts > 0
    return float(counts[seen] @ np.log(p[seen]))


def loglik(th, ds):
    """Multinomial log likelihood sum X_ij log p_ij(theta) with exact derivatives in theta."""
    p = params_to_probs(th)
    _check_strictly_feasible(p)
    counts = flatten(ds).counts
    ratio = counts / p
    gradient = PROBS_DESIGN.T @ ratio
    hessian = -(PROBS_DESIGN * (ratio / p)[:, None]).T @ PROBS_DESIGN
    return LogLik(value=_count_loglik(p, counts), gradient=gradient, hessian=hessian)


@dataclass(frozen=True)
class _AffineModel:
    """theta = theta0 + K @ phi, with phi the free coordinates `free` of theta."""

    name: str
    theta0: np.ndarray
    K: np.ndarray
    free: tuple
    active_constraint: int | None = None

    @property
    def offset(self):
        return PROBS_OFFSET + PROBS_DESIGN @ self.theta0

    @property
    def design(self):
        return PROBS_DESIGN @ self.K

    def theta(self, phi):
        return self.theta0 + self.K @ phi

    def phi(self, theta):
        return np.asarray(theta, dtype=float)[list(self.free)]


def _nosignalling_model():
    return _AffineModel("no_signalling", np.zeros(8), np.eye(8), tuple(range(8)))


def _facet_model(facet):
    """Parameters on the facet sum_i s_i rho_i = 2, eliminating the last rho with s = -1."""
    signs = SIGN_VECTORS[facet]
    k = max(i for i, s in enumerate(signs) if s == -1)
    free = tuple(j for j in range(8) if j != 4 + k)
    theta0 = np.zeros(8)
    theta0[4 + k] = signs[k] * CHSH_LOCAL_BOUND
    K = np.zeros((8, 7))
    for col, j in enumerate(free):
        K[j, col] = 1.0
        if j >= 4:
            K[4 + k, col] = -signs[k] * signs[j - 4]
    return _AffineModel("local_realism", theta0, K, free, active_constraint=facet)


def _resolution(value):
    return 64 * np.finfo(float).eps * max(1.0, abs(value))


def _maximize(model, counts, phi0, label):
    """Damped Newton with a geometrically shrinking log barrier on the cell probabilities."""
    A = model.design
    offset = model.offset
    n_total = counts.sum()
    phi = np.array(phi0, dtype=float)
    start_loglik = _count_loglik(offset + A @ phi, counts)

    iterations = 0
    converged = True
    grad_norm = math.inf
    note = None

    for stage in range(BARRIER_STAGES):
        # the barrier mu * sum(log p) acts as mu pseudo-counts per cell
        weights = counts + BARRIER_MU0 * BARRIER_FACTOR**stage
        while True:
            p = offset + A @ phi
            value = float(weights @ np.log(p))
            gradient = A.T @ (weights / p)
            grad_norm = float(np.linalg.norm(gradient)) / n_total
            if grad_norm <= GRADIENT_TOL:
                break
            if iterations >= MAX_ITERATIONS:
                converged = False
                break

            curvature = (A * (weights / p**2)[:, None]).T @ A
            step, _ = solve_psd(curvature, gradient)
            decrement = float(gradient @ step)
            if decrement <= _resolution(value):
                # below line-search resolution: a last full Newton step
                if np.all(offset + A @ (phi + step) > 0):
                    phi = phi + step
                    iterations += 1
                break

            t = 1.0
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                trial = phi + t * step
                p_trial = offset + A @ trial
                if np.all(p_trial > 0):
                    if float(weights @ np.log(p_trial)) >= value + ARMIJO * t * decrement:
                        accepted = True
                        break
                t *= BACKTRACK_FACTOR
            iterations += 1
            if not accepted:
                print(f"{label}: line search stalled at iteration {iterations}", file=sys.stderr)
                break
            phi = trial
            if np.linalg.norm(t * step) <= STEP_TOL:
                break
        if not converged:
            print(f"{label}: no convergence after {MAX_ITERATIONS} iterations", file=sys.stderr)
            break

    final_loglik = _count_loglik(offset + A @ phi, counts)
    if final_loglik <= start_loglik + _resolution(start_loglik):
        # the start is already a maximizer to double precision
        print(f"{label}: optimizer cannot improve on the start; keeping it", file=sys.stderr)
        phi = np.array(phi0, dtype=float)
        final_loglik = start_loglik
        note = TERMINATED_AT_START
        converged = True

    theta = model.theta(phi)
    probs = offset + A @ phi
    return MleFit(
        params=NsParams.from_vector(theta),
        probs=probs,
        loglik=final_loglik,
        model=model.name,
        converged=converged,
        iterations=iterations,
        active_constraint=model.active_constraint,
        grad_norm=grad_norm,
        note=note,
    )


def default_init(ds):
    """No-signalling GLS projection of the relative frequencies, as parameters."""
    return probs_to_params(project_nosignalling(flatten(ds)).probs)


def fit_nosignalling(ds, init=None):
    if init is None:
        init = default_init(ds)
    p0 = params_to_probs(init)
    _check_strictly_feasible(p0)
    model = _nosignalling_model()
    return _maximize(model, flatten(ds).counts, model.phi(init.vector), f"{ds.name} no-signalling")


def fit_localrealism(ds, init=None, ns_fit=None):
    """
    Maximum likelihood under local realism.

    When the no-signalling MLE violates one CHSH facet, the maximum lies on that facet:
    its last rho with sign -1 becomes an affine function of the other three and seven
    parameters remain. `init` is used when it already lies on the facet; otherwise the
    fit starts from the GLS projection onto the facet.
    """
    if ns_fit is None:
        ns_fit = fit_nosignalling(ds, init)
    values = chsh_values(ns_fit.params.rho)
    violated = [i for i, v in enumerate(values) if v > CHSH_LOCAL_BOUND + FACET_TOL]
    if not violated:
        return replace(ns_fit, model="local_realism", active_constraint=None)
    if len(violated) > 1:
        raise UnsupportedGeometryError(
            f"{ds.name}: several CHSH inequalities violated at the no-signalling MLE: {violated}", violated
        )

    facet = violated[0]
    signs = SIGN_VECTORS[facet]
    fv = flatten(ds)
    if init is not None and abs(init.chsh(signs) - CHSH_LOCAL_BOUND) <= 1e-10:
        start = init
        _check_strictly_feasible(params_to_probs(start))
    else:
        start = probs_to_params(project_facet(fv, signs).probs)

    model = _facet_model(facet)
    fit = _maximize(model, fv.counts, model.phi(start.vector), f"{ds.name} local-realism")

    after = chsh_values(fit.params.rho)
    if np.any(after > CHSH_LOCAL_BOUND + FACET_TOL):
        bad = [i for i, v in enumerate(after) if v > CHSH_LOCAL_BOUND + FACET_TOL]
        raise UnsupportedGeometryError(
            f"{ds.name}: local-realism fit on facet {facet} violates facets {bad}", bad
        )
    return fit


def wilks_test(ds, init=None):
    """Twice the log-likelihood gap, referred to the 50-50 chi-square(1)/chi-square(0) mixture."""
    fit_ns = fit_nosignalling(ds, init)
    fit_lr = fit_localrealism(ds, init, ns_fit=fit_ns)

    warnings = []
    for fit in (fit_ns, fit_lr):
        if not fit.converged:
            warnings.append(f"{fit.model} fit did not converge")
        if fit.note == TERMINATED_AT_START:
            warnings.append(f"{fit.model} fit {TERMINATED_AT_START}")

    statistic = 2 * (fit_ns.loglik - fit_lr.loglik)
    if statistic < 0:
        if statistic < -1e-8:
            warnings.append(f"negative likelihood ratio {statistic:.3g} clamped to 0")
        statistic = 0.0
    return WilksResult(
        statistic=statistic,
        p=wilks_mixture_sf(statistic),
        fit_ns=fit_ns,
        fit_lr=fit_lr,
        warnings=warnings,
    )


def one_step_estimate(ds, init=None):
    """A single Newton-Raphson step on the no-signalling log likelihood, damped to stay feasible."""
    if init is None:
        init = default_init(ds)
    ll = loglik(init, ds)
    try:
        step = np.linalg.solve(-ll.hessian, ll.gradient)
    except np.linalg.LinAlgError:
        step = None
    if step is None or not np.all(np.isfinite(step)):
        print(f"{ds.name}: singular Hessian, one-step estimate left at the start", file=sys.stderr)
        return OneStep(params=init, step_norm=0.0, singular=True)

    theta = init.vector
    t = 1.0
    for _ in range(MAX_BACKTRACKS):
        p = PROBS_OFFSET + PROBS_DESIGN @ (theta + t * step)
        if p.min() >= PROBABILITY_FLOOR:
            break
        t *= BACKTRACK_FACTOR
    else:
        return OneStep(params=init, step_norm=0.0, singular=True)
    return OneStep(
        params=NsParams.from_vector(theta + t * step),
        step_norm=float(np.linalg.norm(t * step)),
    )
