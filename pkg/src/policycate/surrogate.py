"""Stochastic-threshold surrogate objectives for treatment targeting.

The targeting payoff ``1{tau >= c} * (tau0 - c)`` is flat almost everywhere
in ``tau``: it rewards the correct treat/skip decision but carries no
information about the magnitude of the effect ``tau0``.  Replacing the fixed
cost ``c`` with a random threshold ``C ~ F_C`` smooths the payoff into

    F_C(tau) * (tau0 - kappa_C(tau)),    kappa_C(t) = E[C | C <= t],

which is maximized exactly at ``tau = tau0`` whenever the threshold density
is positive there.  Three threshold families are supported: normal and
logistic (location ``cost``, scale ``sigma``) and uniform on
``(uniform_lo, uniform_hi)``.  The uniform family makes the objective
equivalent to least squares on the transformed outcome; shrinking ``sigma``
moves it toward pure policy optimization.

Scale convention
----------------
For the normal and logistic families every per-observation function below
takes the *standardized* score ``tau_bar = (tau - cost) / sigma``; fitted
scores map back to money units via ``tau = tau_bar * sigma + cost``.
Derivatives are reported per unit of ``tau_bar``.  Dividing by ``sigma``
(first derivative) or ``sigma**2`` (curvature) converts them to
per-unit-money derivatives; the covariance code in ``policycate.linear``
relies on exactly that conversion.  The uniform family works on the money
scale directly, so ``tau_bar`` is ``tau`` itself and no conversion applies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, expit, log_expit, log_ndtr

from .errors import DomainError, SearchError, ValidationError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_MIN_SCALE = 1e-8


class Family(str, enum.Enum):
    NORMAL = "normal"
    LOGISTIC = "logistic"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SurrogateSpec:
    """Threshold distribution: family, treatment cost, and spread.

    ``cost`` is the actual per-treatment cost in money units and doubles as
    the location of the normal/logistic families.  ``scale`` is the
    normal/logistic spread (ignored for uniform).  The uniform family is
    supported on ``(uniform_lo, uniform_hi)``; its objective does not depend
    on those bounds, but the scalar objective value and ``kappa`` do.
    """

    family: Family
    cost: float
    scale: float = 1.0
    uniform_lo: float = field(default=math.nan)
    uniform_hi: float = field(default=math.nan)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not math.isfinite(self.cost):
            raise ValidationError("cost must be finite")
        if self.family in (Family.NORMAL, Family.LOGISTIC):
            if not (math.isfinite(self.scale) and self.scale >= _MIN_SCALE):
                raise ValidationError(
                    f"scale must be >= {_MIN_SCALE:g} for {self.family.value}, "
                    f"got {self.scale!r}"
                )
        else:
            if not (math.isfinite(self.uniform_lo) and math.isfinite(self.uniform_hi)):
                raise ValidationError("uniform family needs finite uniform_lo/uniform_hi")
            if not self.uniform_hi > self.uniform_lo:
                raise ValidationError("uniform_hi must exceed uniform_lo")

    @classmethod
    def normal(cls, cost, scale):
        return cls(Family.NORMAL, cost, scale)

    @classmethod
    def logistic(cls, cost, scale):
        return cls(Family.LOGISTIC, cost, scale)

    @classmethod
    def uniform(cls, lo, hi, cost=None):
        if cost is None:
            cost = 0.5 * (lo + hi)
        return cls(Family.UNIFORM, cost, uniform_lo=lo, uniform_hi=hi)

    def standardize(self, tau):
        """Map a money-scale score to the internal scale (identity for uniform)."""
        if self.family is Family.UNIFORM:
            return tau
        return (tau - self.cost) / self.scale

    def unstandardize(self, tau_bar):
        """Map an internal-scale score back to money units."""
        if self.family is Family.UNIFORM:
            return tau_bar
        return tau_bar * self.scale + self.cost


@dataclass(frozen=True)
class ScalarSurrogateProblem:
    """No-covariate problem: one true effect ``tau0`` and one threshold spec."""

    tau0: float
    spec: SurrogateSpec

    def __post_init__(self):
        if not math.isfinite(self.tau0):
            raise ValidationError("tau0 must be finite")


def _phi(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def _Phi(z):
    # complementary error function avoids cancellation in the lower tail
    return 0.5 * erfc(-np.asarray(z, dtype=float) / _SQRT2)


def _as_float(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def cdf(spec: SurrogateSpec, u):
    """Threshold distribution function F_C(u).  Accepts scalars or arrays."""
    u = np.asarray(u, dtype=float)
    if spec.family is Family.NORMAL:
        out = _Phi((u - spec.cost) / spec.scale)
    elif spec.family is Family.LOGISTIC:
        out = expit((u - spec.cost) / spec.scale)
    else:
        out = np.clip((u - spec.uniform_lo) / (spec.uniform_hi - spec.uniform_lo), 0.0, 1.0)
    return _as_float(out)


def _logistic_tail(tau_bar):
    """Stable evaluation of t*G(t) - softplus(t) (the logistic partial-mean tail).

    The direct form cancels catastrophically for large |t|; each half-line
    gets the algebraically equivalent expression that stays additive there.
    """
    tb = np.asarray(tau_bar, dtype=float)
    finite = np.isfinite(tb)
    safe = np.where(finite, tb, 0.0)
    neg = safe * expit(safe) - np.logaddexp(0.0, safe)
    pos = -safe * expit(-safe) - np.logaddexp(0.0, -safe)
    out = np.where(safe <= 0.0, neg, pos)
    return np.where(finite, out, 0.0)  # both infinite limits vanish


def partial_mean(spec: SurrogateSpec, tau):
    """Lower partial mean: integral of u * f_C(u) over u <= tau.

    Equals F_C(tau) * kappa_C(tau) but never divides by F_C, so it is exact
    down to F_C = 0.
    """
    tau = np.asarray(tau, dtype=float)
    if spec.family is Family.NORMAL:
        z = (tau - spec.cost) / spec.scale
        out = spec.cost * _Phi(z) - spec.scale * _phi(z)
    elif spec.family is Family.LOGISTIC:
        z = (tau - spec.cost) / spec.scale
        out = spec.cost * expit(z) + spec.scale * _logistic_tail(z)
    else:
        t = np.clip(tau, spec.uniform_lo, spec.uniform_hi)
        out = (np.square(t) - spec.uniform_lo**2) / (2.0 * (spec.uniform_hi - spec.uniform_lo))
    return _as_float(out)


def kappa(spec: SurrogateSpec, tau):
    """Lower-truncated mean E[C | C <= tau].

    Requires F_C(tau) > 0; raises :class:`DomainError` where the
    conditioning event has probability exactly zero (uniform family with
    ``tau <= uniform_lo``, or ``tau = -inf``).
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(np.isneginf(tau)):
        raise DomainError("truncated mean undefined at tau = -inf")
    if spec.family is Family.NORMAL:
        z = (tau - spec.cost) / spec.scale
        # phi(z)/Phi(z) in log space stays accurate far into the lower tail
        inv_mills = np.exp(-0.5 * np.square(z) - math.log(math.sqrt(2.0 * math.pi)) - log_ndtr(z))
        out = spec.cost - spec.scale * inv_mills
    elif spec.family is Family.LOGISTIC:
        z = (tau - spec.cost) / spec.scale
        # E[C | C <= tau] = cost + scale * (z - softplus(z) / G(z))
        out = spec.cost + spec.scale * (z - np.logaddexp(0.0, z) / expit(z))
    else:
        if np.any(tau <= spec.uniform_lo):
            raise DomainError("F_C(tau) = 0 below the uniform support")
        out = 0.5 * (spec.uniform_lo + np.minimum(tau, spec.uniform_hi))
    return _as_float(out)


def loss_q(spec: SurrogateSpec, tau_bar, y_star):
    """Per-observation objective term (to be maximized).

    ``tau_bar`` is the standardized score for normal/logistic, the raw money
    score for uniform.  Broadcasts over array inputs.

    Normal:   Phi(t) * (y* - cost) + sigma * phi(t)
    Logistic: G(t) * (y* - cost) + sigma * (t * (1 - G(t)) - ln G(t))
    Uniform:  -(y* - tau)^2   (constant offsets dropped; same argmax)
    """
    tau_bar = np.asarray(tau_bar, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if spec.family is Family.NORMAL:
        out = _Phi(tau_bar) * (y_star - spec.cost) + spec.scale * _phi(tau_bar)
    elif spec.family is Family.LOGISTIC:
        # 1 - G(t) = G(-t) and ln G(t) = -softplus(-t), both overflow-safe
        tail = tau_bar * expit(-tau_bar) - log_expit(tau_bar)
        out = expit(tau_bar) * (y_star - spec.cost) + spec.scale * tail
    else:
        out = -np.square(y_star - tau_bar)
    return _as_float(out)


def dloss_dtau(spec: SurrogateSpec, tau_bar, y_star):
    """First derivative of :func:`loss_q` in its ``tau_bar`` argument.

    Reported per unit of the standardized score; divide by ``sigma`` for the
    per-unit-money gradient used in covariance estimation (see module note).
    """
    tau_bar = np.asarray(tau_bar, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if spec.family is Family.NORMAL:
        out = _phi(tau_bar) * (y_star - spec.cost - spec.scale * tau_bar)
    elif spec.family is Family.LOGISTIC:
        g = expit(tau_bar) * expit(-tau_bar)
        out = g * (y_star - spec.cost - spec.scale * tau_bar)
    else:
        out = 2.0 * (y_star - tau_bar)
    return _as_float(out)


def d2loss_dtau2(spec: SurrogateSpec, tau_bar, y_star):
    """Second derivative of :func:`loss_q` in its ``tau_bar`` argument.

    This is the scalar curvature factor ``s_i`` of a linear model fitted on
    the internal scale: its Hessian contribution is ``s_i * x x^T``.  Divide
    by ``sigma**2`` for the money-scale curvature.
    """
    tau_bar = np.asarray(tau_bar, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if spec.family is Family.NORMAL:
        resid = y_star - spec.cost - spec.scale * tau_bar
        out = -_phi(tau_bar) * (tau_bar * resid + spec.scale)
    elif spec.family is Family.LOGISTIC:
        G = expit(tau_bar)
        g = G * expit(-tau_bar)
        resid = y_star - spec.cost - spec.scale * tau_bar
        out = -g * ((2.0 * G - 1.0) * resid + spec.scale)
    else:
        out = np.broadcast_to(-2.0, np.broadcast_shapes(tau_bar.shape, y_star.shape)).copy()
    return _as_float(out)


def scalar_surrogate_value(prob: ScalarSurrogateProblem, tau):
    """Population surrogate objective F_C(tau) * (tau0 - kappa_C(tau)).

    Computed as ``F_C(tau) * tau0 - partial_mean(tau)``, which avoids any
    division by F_C and is therefore exact at both tails.
    """
    return _as_float(cdf(prob.spec, tau) * prob.tau0 - partial_mean(prob.spec, tau))


def default_bracket(spec: SurrogateSpec, tau0=None):
    """Search bracket with negligible threshold mass outside.

    Normal/logistic: ``cost +- 10 sigma``, widened to include ``tau0`` when
    given.  Uniform: the support itself, likewise widened.
    """
    if spec.family is Family.UNIFORM:
        lo, hi = spec.uniform_lo, spec.uniform_hi
    else:
        lo, hi = spec.cost - 10.0 * spec.scale, spec.cost + 10.0 * spec.scale
    if tau0 is not None:
        pad = max(1.0, spec.scale if spec.family is not Family.UNIFORM else 1.0)
        lo, hi = min(lo, tau0 - pad), max(hi, tau0 + pad)
    return lo, hi


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def scalar_argmax(prob: ScalarSurrogateProblem, lo=None, hi=None, tol=1e-8):
    """Golden-section maximizer of :func:`scalar_surrogate_value`.

    Returns a point within ``tol`` of the maximizer.  Raises
    :class:`SearchError` if an endpoint value strictly exceeds every interior
    probe, i.e. the bracket holds no interior maximum.
    """
    if lo is None or hi is None:
        d_lo, d_hi = default_bracket(prob.spec, prob.tau0)
        lo = d_lo if lo is None else lo
        hi = d_hi if hi is None else hi
    if not (lo < hi):
        raise ValidationError("need lo < hi")
    if not tol > 0:
        raise ValidationError("need tol > 0")

    def f(t):
        return scalar_surrogate_value(prob, t)

    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = max(fc, fd)
    # each iteration shrinks the bracket by the golden ratio
    n_iter = max(1, math.ceil(math.log(tol / (b - a)) / math.log(_GOLDEN))) if (b - a) > tol else 1
    for _ in range(n_iter):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        best = max(best, fc, fd)
        if (b - a) <= tol:
            break
    x = 0.5 * (a + b)
    best = max(best, f(x))
    if f(lo) > best or f(hi) > best:
        raise SearchError("no interior maximum: an endpoint dominates all interior probes")
    return x


def stepwise_value(prob: ScalarSurrogateProblem, tau):
    """Original stepwise payoff 1{tau >= cost} * (tau0 - cost)."""
    tau = np.asarray(tau, dtype=float)
    out = np.where(tau >= prob.spec.cost, prob.tau0 - prob.spec.cost, 0.0)
    return _as_float(out)


def objective_curve(prob: ScalarSurrogateProblem, grid):
    """Evaluate the surrogate and stepwise objectives on a sorted grid.

    Returns a list of ``(tau, surrogate_value, stepwise_value)`` triples,
    ready for CSV emission.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise ValidationError("grid must be sorted ascending")
    surr = np.atleast_1d(scalar_surrogate_value(prob, grid))
    step = np.atleast_1d(stepwise_value(prob, grid))
    return [(float(t), float(s), float(p)) for t, s, p in zip(grid, surr, step)]
