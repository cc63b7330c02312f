"""Time-varying boundary delay: tau(t), the velocity history and the z-field.

Two evaluators of the delayed boundary velocity u_t(1, t - tau(t)) exist:

* ``BoundaryHistory`` keeps step-resolution samples in a ring buffer and
  interpolates linearly (production path, works for tau = 0);
* ``ZField`` carries z(rho, t) = u_t(1, t - tau(t) rho) on rho in [0, 1] and
  advects it with a first-order upwind scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import (
    ConfigError,
    DelayTooFast,
    HistoryUnderflow,
    NegativeDelay,
    StepTooLarge,
    ZFieldDegenerate,
)
from .profiles import Profile

DELAY_FAMILIES = ("constant", "sinusoid", "decaying")


@dataclass(frozen=True)
class DelaySpec:
    """tau(t) for one of three families.

    constant   tau = tau0
    sinusoid   tau = tau0 + amp sin(omega t)
    decaying   tau = tau0 / (1 + t)
    """

    family: str
    tau0: float = 0.0
    amp: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.family not in DELAY_FAMILIES:
            raise ConfigError(f"unknown delay family {self.family!r}")
        for name in ("tau0", "amp", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"delay.{name} must be finite")

    @classmethod
    def constant(cls, tau0):
        return cls("constant", tau0=float(tau0))

    @classmethod
    def sinusoid(cls, tau0, amp, omega):
        return cls("sinusoid", tau0=float(tau0), amp=float(amp), omega=float(omega))

    @classmethod
    def decaying(cls, tau0):
        return cls("decaying", tau0=float(tau0))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        fam = d.pop("family", None)
        try:
            if fam == "constant":
                return cls.constant(d["tau0"])
            if fam == "sinusoid":
                return cls.sinusoid(d["tau0"], d["amp"], d["omega"])
            if fam == "decaying":
                return cls.decaying(d["tau0"])
        except KeyError as exc:
            raise ConfigError(f"delay.{exc.args[0]}: missing parameter") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"delay: {exc}") from None
        raise ConfigError(f"delay.family: unknown family {fam!r}")

    def to_dict(self):
        out = {"family": self.family, "tau0": self.tau0}
        if self.family == "sinusoid":
            out.update(amp=self.amp, omega=self.omega)
        return out

    @property
    def d(self) -> float:
        """Tight bound on sup tau'(t) (never below zero)."""
        if self.family == "sinusoid":
            return abs(self.amp * self.omega)
        return 0.0

    @property
    def tau_max(self) -> float:
        if self.family == "sinusoid":
            return self.tau0 + abs(self.amp)
        return self.tau0

    @property
    def tau_min(self) -> float:
        if self.family == "sinusoid":
            return self.tau0 - abs(self.amp) if self.omega != 0 else self.tau0
        if self.family == "decaying":
            return 0.0
        return self.tau0

    @property
    def can_vanish(self) -> bool:
        return self.tau_min <= 0.0


def tau_eval(spec: DelaySpec, t: float):
    """(tau(t), tau'(t))."""
    if spec.family == "constant":
        return spec.tau0, 0.0
    if spec.family == "sinusoid":
        wt = spec.omega * t
        return (spec.tau0 + spec.amp * math.sin(wt),
                spec.amp * spec.omega * math.cos(wt))
    q = 1.0 + t
    return spec.tau0 / q, -spec.tau0 / (q * q)


def validate_delay(spec: DelaySpec) -> float:
    """Return the tight d and check d < 1, tau >= 0."""
    if spec.tau_min < 0 or spec.tau0 < 0:
        raise NegativeDelay(f"tau(t) reaches {spec.tau_min:.6g} < 0")
    d = spec.d
    if d >= 1.0:
        raise DelayTooFast(f"sup tau' = {d:.6g} >= 1")
    return d


class BoundaryHistory:
    """Ring buffer of boundary-velocity samples at t_k = k * dt, k >= 0.

    Queries before t = 0 fall through to the analytic prehistory ``f0``,
    which is defined on [-tau(0), 0).
    """

    def __init__(self, dt: float, span: float, f0: Profile, tau_initial: float):
        self.dt = float(dt)
        self.f0 = f0
        self.tau_initial = float(tau_initial)
        self.capacity = int(math.ceil(span / self.dt)) + 4
        self._buf = np.zeros(self.capacity)
        self.count = 0

    def copy(self):
        new = BoundaryHistory.__new__(BoundaryHistory)
        new.__dict__.update(self.__dict__)
        new._buf = self._buf.copy()
        return new

    def push(self, value: float):
        self._buf[self.count % self.capacity] = value
        self.count += 1

    @property
    def t_last(self) -> float:
        return (self.count - 1) * self.dt

    @property
    def latest(self) -> float:
        if self.count == 0:
            raise HistoryUnderflow("empty history")
        return float(self._buf[(self.count - 1) % self.capacity])

    @property
    def oldest_index(self) -> int:
        return max(0, self.count - self.capacity)

    def sample(self, k: int) -> float:
        if k < self.oldest_index or k >= self.count:
            raise HistoryUnderflow(f"sample {k} not retained")
        return float(self._buf[k % self.capacity])

    def samples(self, k0: int, k1: int) -> np.ndarray:
        """Stored samples with indices k0..k1 inclusive."""
        if k0 < self.oldest_index or k1 >= self.count:
            raise HistoryUnderflow(f"samples {k0}..{k1} not retained")
        idx = np.arange(k0, k1 + 1) % self.capacity
        return self._buf[idx]

    def _tol(self):
        return 1e-9 * self.dt

    def value_at(self, q: float) -> float:
        """Piecewise-linear value at time q (f0 for q < 0)."""
        if q < 0:
            if q < -self.tau_initial - self._tol():
                raise HistoryUnderflow(
                    f"query at {q:.6g} precedes the prehistory start {-self.tau_initial:.6g}")
            return float(self.f0(q))
        if q > self.t_last + self._tol():
            raise HistoryUnderflow(f"query at {q:.6g} is after the last sample {self.t_last:.6g}")
        x = q / self.dt
        k = int(math.floor(x + 1e-9))
        frac = x - k
        if frac < 1e-9 or k + 1 >= self.count:
            return self.sample(min(k, self.count - 1))
        return (1.0 - frac) * self.sample(k) + frac * self.sample(k + 1)

    def _segments(self, a: float, b: float):
        """Node times and values of the piecewise-linear interpolant on [a, b]."""
        segs = []
        dt = self.dt
        if a < 0:
            top = min(b, 0.0)
            if a < -self.tau_initial - self._tol():
                raise HistoryUnderflow(f"window start {a:.6g} precedes the prehistory")
            inner = -dt * np.arange(1, int(math.ceil(-a / dt)) + 1)[::-1]
            inner = inner[(inner > a) & (inner < top)]
            times = np.concatenate([[a], inner, [top]])
            vals = np.atleast_1d(self.f0(times))
            segs.append((times, vals))
        if b > 0:
            lo = max(a, 0.0)
            k0 = int(math.floor(lo / dt + 1e-9)) + 1
            k1 = int(math.ceil(b / dt - 1e-9)) - 1
            inner_t = dt * np.arange(k0, k1 + 1)
            inner_v = self.samples(k0, k1) if k1 >= k0 else np.zeros(0)
            times = np.concatenate([[lo], inner_t, [b]])
            vals = np.concatenate([[self.value_at(lo)], inner_v, [self.value_at(b)]])
            segs.append((times, vals))
        return segs

    def integral_sq(self, a: float, b: float, decay: float = 0.0) -> float:
        """Trapezoid value of int_a^b exp(-decay (b - s)) v(s)^2 ds."""
        if b <= a:
            return 0.0
        total = 0.0
        for times, vals in self._segments(a, b):
            f = vals * vals
            if decay:
                f = f * np.exp(-decay * (b - times))
            total += float(np.trapezoid(f, times))
        return total


def delayed_velocity(history: BoundaryHistory, t: float, tau: float) -> float:
    """u_t(1, t - tau) from the history buffer."""
    if tau == 0:
        return history.latest
    return history.value_at(t - tau)


@dataclass
class ZField:
    """z(rho) on m + 1 uniform nodes of [0, 1]."""

    values: np.ndarray

    @property
    def m(self):
        return len(self.values) - 1

    @property
    def drho(self):
        return 1.0 / self.m

    @property
    def outflow(self):
        return float(self.values[-1])

    @classmethod
    def from_prehistory(cls, f0: Profile, tau_initial: float, m: int = 64):
        if m < 2:
            raise ConfigError("z-field needs m >= 2")
        rho = np.linspace(0.0, 1.0, m + 1)
        return cls(values=np.asarray(f0(-rho * tau_initial), dtype=float).copy())


def _zfield_courant(m, tau, dtau, dt):
    if tau <= 0:
        raise ZFieldDegenerate("z-field transport is undefined for tau = 0")
    rho = np.linspace(0.0, 1.0, m + 1)
    # z(rho, t) = u_t(t - tau(t) rho) travels with speed (1 - tau' rho) / tau
    courant = dt * m * (1.0 - dtau * rho) / tau
    if courant.max() > 1.0 + 1e-12:
        raise StepTooLarge(f"z-field CFL number {courant.max():.4g} > 1")
    return courant


def z_step(z: ZField, inflow: float, tau: float, dtau: float, dt: float) -> ZField:
    """One upwind step of tau z_t + (1 - tau' rho) z_rho = 0 with z(0) = inflow."""
    c = _zfield_courant(z.m, tau, dtau, dt)
    old = z.values
    new = old.copy()
    new[1:] = old[1:] - c[1:] * (old[1:] - old[:-1])
    new[0] = inflow
    return ZField(values=new)


def z_predict_outflow(z: ZField, tau: float, dtau: float, dt: float) -> float:
    """z(1) after the next step; independent of the inflow when m >= 2."""
    c = (dt * z.m * (1.0 - dtau)) / tau
    v = z.values
    return float(v[-1] - c * (v[-1] - v[-2]))
