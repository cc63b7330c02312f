"""Relaxation kernels g(s), their certificates and exp-sum compression.

Four families are supported::

    zero          g(s) = 0
    exponential   g(s) = a exp(-b s)
    polynomial    g(s) = a (1 + s)^(-p),  p > 1
    expsum        g(s) = sum_j w_j exp(-a_j s)

All quantities the rest of the package needs (g, g', the tight rate
xi = -g'/g, partial integrals) are available in closed form for each family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import nnls

from .errors import (
    CompressionFailed,
    ConfigError,
    HypothesisG2Violated,
    NotDissipative,
)

FAMILIES = ("zero", "exponential", "polynomial", "expsum")

# Candidate rate-grid sizes tried in order by compress_to_expsum.
_GRID_LADDER = (16, 24, 32, 48, 64, 96, 128)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    a: float = 0.0
    b: float = 0.0
    p: float = 0.0
    terms: tuple = field(default=())

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ConfigError(f"unknown kernel family {fam!r}")
        if fam == "exponential":
            if not (self.a > 0 and self.b > 0):
                raise ConfigError("exponential kernel needs a > 0 and b > 0")
        elif fam == "polynomial":
            if not self.a > 0:
                raise ConfigError("polynomial kernel needs a > 0")
            if not self.p > 1:
                raise ConfigError("polynomial kernel needs p > 1 (integrability)")
        elif fam == "expsum":
            terms = tuple((float(w), float(r)) for w, r in self.terms)
            if not terms:
                raise ConfigError("expsum kernel needs at least one term")
            if any(w <= 0 or r <= 0 for w, r in terms):
                raise ConfigError("expsum weights and rates must be positive")
            object.__setattr__(self, "terms", terms)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def exponential(cls, a, b):
        return cls("exponential", a=float(a), b=float(b))

    @classmethod
    def polynomial(cls, a, p):
        return cls("polynomial", a=float(a), p=float(p))

    @classmethod
    def expsum(cls, terms):
        return cls("expsum", terms=tuple(terms))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        fam = d.pop("family", None)
        try:
            if fam == "zero":
                return cls.zero()
            if fam == "exponential":
                return cls.exponential(d["a"], d["b"])
            if fam == "polynomial":
                return cls.polynomial(d["a"], d["p"])
            if fam == "expsum":
                terms = d["terms"]
                return cls.expsum([(t["weight"], t["rate"]) if isinstance(t, dict)
                                   else tuple(t) for t in terms])
        except KeyError as exc:
            raise ConfigError(f"kernel.{exc.args[0]}: missing parameter") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"kernel: {exc}") from None
        raise ConfigError(f"kernel.family: unknown family {fam!r}")

    def to_dict(self):
        if self.family == "zero":
            return {"family": "zero"}
        if self.family == "exponential":
            return {"family": "exponential", "a": self.a, "b": self.b}
        if self.family == "polynomial":
            return {"family": "polynomial", "a": self.a, "p": self.p}
        return {"family": "expsum",
                "terms": [{"weight": w, "rate": r} for w, r in self.terms]}

    # -- exp-sum view ------------------------------------------------------

    @property
    def is_expsum(self):
        """True when the kernel is exactly a finite sum of exponentials."""
        return self.family in ("zero", "exponential", "expsum")

    def exp_terms(self):
        """(weights, rates) arrays for exactly exp-sum kernels."""
        if self.family == "zero":
            return np.zeros(0), np.zeros(0)
        if self.family == "exponential":
            return np.array([self.a]), np.array([self.b])
        if self.family == "expsum":
            w, r = zip(*self.terms)
            return np.array(w), np.array(r)
        raise ValueError("polynomial kernel has no exact exp-sum form")


@dataclass(frozen=True)
class KernelCertificate:
    l: float
    g0: float
    t0: float
    xi_nonincreasing: bool
    xi_diverges: bool

    def to_dict(self):
        return {"l": self.l, "g0": self.g0, "t0": self.t0,
                "xi_nonincreasing": self.xi_nonincreasing,
                "xi_diverges": self.xi_diverges}


@dataclass(frozen=True)
class ExpSumApprox:
    terms: tuple
    horizon: float
    sup_error: float

    @property
    def weights(self):
        return np.array([w for w, _ in self.terms])

    @property
    def rates(self):
        return np.array([r for _, r in self.terms])

    def as_kernel(self):
        if not self.terms:
            return KernelSpec.zero()
        return KernelSpec.expsum(self.terms)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if not self.terms:
            return np.zeros_like(s)
        return np.exp(-np.multiply.outer(s, self.rates)) @ self.weights


def _check_time(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("kernel evaluated at negative time")
    return s


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def evaluate_kernel(spec: KernelSpec, s):
    """g(s) for scalar or array s >= 0."""
    s = _check_time(s)
    fam = spec.family
    if fam == "zero":
        val = np.zeros_like(s)
    elif fam == "exponential":
        val = spec.a * np.exp(-spec.b * s)
    elif fam == "polynomial":
        val = spec.a * (1.0 + s) ** (-spec.p)
    else:
        w, r = spec.exp_terms()
        val = np.exp(-np.multiply.outer(s, r)) @ w
    return _scalar_or_array(val, s)


def kernel_derivative(spec: KernelSpec, s):
    """g'(s), closed form."""
    s = _check_time(s)
    fam = spec.family
    if fam == "zero":
        val = np.zeros_like(s)
    elif fam == "exponential":
        val = -spec.b * spec.a * np.exp(-spec.b * s)
    elif fam == "polynomial":
        val = -spec.p * spec.a * (1.0 + s) ** (-spec.p - 1.0)
    else:
        w, r = spec.exp_terms()
        val = np.exp(-np.multiply.outer(s, r)) @ (-r * w)
    return _scalar_or_array(val, s)


def xi_of(spec: KernelSpec, s):
    """Tight decay rate xi(s) = -g'(s)/g(s)."""
    s = _check_time(s)
    fam = spec.family
    if fam == "zero":
        raise ValueError("xi is undefined where g vanishes (zero kernel)")
    if fam == "exponential":
        val = np.full_like(s, spec.b)
    elif fam == "polynomial":
        val = spec.p / (1.0 + s)
    else:
        w, r = spec.exp_terms()
        # shift by the slowest rate so the ratio never underflows to 0/0
        e = np.exp(-np.multiply.outer(s, r - r.min()))
        val = (e @ (r * w)) / (e @ w)
    return _scalar_or_array(val, s)


def rate_function(spec: KernelSpec, s):
    """xi(s) where defined; the admissible choice xi = 1 for the zero kernel.

    The rate bound g' <= -xi g holds for any xi when g = 0, so a constant
    unit rate is used wherever the decay law needs a concrete rate.
    """
    if spec.family == "zero":
        s = _check_time(s)
        return _scalar_or_array(np.ones_like(s), s)
    return xi_of(spec, s)


def kernel_integral(spec: KernelSpec, t):
    """int_0^t g(s) ds in closed form (t may be np.inf)."""
    t = _check_time(t)
    fam = spec.family
    if fam == "zero":
        val = np.zeros_like(t)
    elif fam == "exponential":
        val = spec.a * -np.expm1(-spec.b * t) / spec.b
    elif fam == "polynomial":
        q = spec.p - 1.0
        val = spec.a * -np.expm1(-q * np.log1p(t)) / q
    else:
        w, r = spec.exp_terms()
        val = -np.expm1(-np.multiply.outer(t, r)) @ (w / r)
    return _scalar_or_array(val, t)


def total_mass(spec: KernelSpec) -> float:
    if spec.family == "zero":
        return 0.0
    if spec.family == "exponential":
        return spec.a / spec.b
    if spec.family == "polynomial":
        return spec.a / (spec.p - 1.0)
    w, r = spec.exp_terms()
    return float(np.sum(w / r))


def validate_kernel(spec: KernelSpec, t0: float, horizon: float = 100.0,
                    n_samples: int = 1024) -> KernelCertificate:
    """Certify the kernel (mass below 1, nonincreasing xi) and return l and g0 = int_0^t0 g."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    l = 1.0 - total_mass(spec)
    if l <= 0:
        raise NotDissipative(
            f"kernel mass {1.0 - l:.6g} >= 1: residual stiffness l = {l:.6g} is not positive")
    g0 = kernel_integral(spec, t0)

    if spec.family == "zero":
        nonincreasing = True
    else:
        grid = np.geomspace(1e-6, horizon, n_samples)
        xi = xi_of(spec, grid)
        rise = np.diff(xi)
        nonincreasing = bool(np.all(rise <= 1e-12 * np.abs(xi[:-1]) + 1e-300))
        if not nonincreasing:
            i = int(np.argmax(rise))
            raise HypothesisG2Violated(
                f"xi increases near s = {grid[i]:.6g} (xi = {xi[i]:.6g} -> {xi[i + 1]:.6g})")
    # exponential: xi = b; polynomial: int p/(1+s) diverges; exp-sum: xi -> min rate > 0
    return KernelCertificate(l=float(l), g0=float(g0), t0=float(t0),
                             xi_nonincreasing=nonincreasing, xi_diverges=True)


def _certify_grid(horizon):
    return np.union1d(np.linspace(0.0, horizon, 20001),
                      np.geomspace(min(1e-6, horizon / 10), horizon, 4000))


def compress_to_expsum(spec: KernelSpec, tol: float, horizon: float,
                       max_terms: int = 64) -> ExpSumApprox:
    """Approximate g by sum_j w_j exp(-a_j s) with sup error <= tol on [0, horizon].

    Rates come from a fixed geometric grid on [1e-3, 1e3]; weights from
    nonnegative least squares on log-spaced nodes.  Weights below tol/100
    are pruned and the remaining weights refit.  The sup error is measured
    on a dense grid against the closed form.
    """
    if not tol > 0 or not horizon > 0:
        raise ValueError("tol and horizon must be positive")
    if spec.family == "zero":
        return ExpSumApprox(terms=(), horizon=float(horizon), sup_error=0.0)
    if spec.is_expsum:
        w, r = spec.exp_terms()
        return ExpSumApprox(terms=tuple(zip(w.tolist(), r.tolist())),
                            horizon=float(horizon), sup_error=0.0)

    dense = _certify_grid(horizon)
    g_dense = evaluate_kernel(spec, dense)
    best = math.inf
    for n_rates in _GRID_LADDER:
        rates = np.geomspace(1e-3, 1e3, n_rates)
        nodes = np.concatenate([[0.0], np.geomspace(1e-4, horizon, 8 * n_rates)])
        basis = np.exp(-np.outer(nodes, rates))
        target = evaluate_kernel(spec, nodes)
        weights, _ = nnls(basis, target, maxiter=50 * n_rates)
        keep = weights > tol / 100.0
        if not np.any(keep):
            continue
        weights, _ = nnls(basis[:, keep], target, maxiter=50 * n_rates)
        rates = rates[keep]
        nz = weights > 0
        weights, rates = weights[nz], rates[nz]
        if len(rates) > max_terms:
            continue
        err = float(np.max(np.abs(np.exp(-np.outer(dense, rates)) @ weights - g_dense)))
        best = min(best, err)
        if err <= tol:
            return ExpSumApprox(terms=tuple(zip(weights.tolist(), rates.tolist())),
                                horizon=float(horizon), sup_error=err)
    raise CompressionFailed(
        f"could not reach sup error {tol:g} with at most {max_terms} terms "
        f"(best {best:.3g})", best_error=best)
