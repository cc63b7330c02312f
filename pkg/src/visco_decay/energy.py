"""Energy, Lyapunov functionals and the energy-rate identity.

The energy of a state is

    E = 1/2 [ |u_t|^2 + (1 - int_0^t g) |u_x|^2 + (g o u_x)(t) + u_t(1)^2 ]
        + zeta/2 * int_{t - tau}^{t} u_t(1, s)^2 ds

where the last integral equals tau * int_0^1 u_t(1, t - tau rho)^2 d rho.
Spatial integrals use the nodal trapezoid rule for |u_t|^2 and the exact
cellwise sum for |u_x|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace
import math

import numpy as np

from .delay import tau_eval
from .errors import ConfigError, EquivalenceBroken, StabilityConditionViolated
from .kernels import kernel_integral


@dataclass(frozen=True)
class ZetaSelection:
    zeta: float
    lower: float
    upper: float
    feasible: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    elastic: float
    memory: float
    boundary_kinetic: float
    delay_term: float

    @property
    def total(self) -> float:
        return (self.kinetic + self.elastic + self.memory
                + self.boundary_kinetic + self.delay_term)


@dataclass(frozen=True)
class LyapunovConfig:
    eps1: float = 0.01
    eps2: float = 0.01
    eps3: float = 0.01
    h_weight: float = 1.0
    auto_halve: bool = True

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps3) < 0 or self.h_weight < 0:
            raise ConfigError("lyapunov weights must be nonnegative")

    def halved(self):
        return replace(self, eps1=self.eps1 / 2, eps2=self.eps2 / 2, eps3=self.eps3 / 2)


@dataclass(frozen=True)
class LyapunovSample:
    psi: float
    phi: float
    I: float
    L: float
    H: float


def zeta_bounds(mu1, mu2, d):
    root = math.sqrt(1.0 - d)
    return mu2 / root, 2.0 * mu1 - mu2 / root


def choose_zeta(mu1: float, mu2: float, d: float, delay_can_vanish: bool = False,
                strict: bool = True) -> ZetaSelection:
    """Weight of the delay term in the energy.

    The admissible interval is (mu2/sqrt(1-d), 2 mu1 - mu2/sqrt(1-d)); its
    midpoint, mu1, is returned.  It is nonempty iff mu2 < sqrt(1-d) mu1.
    With ``strict=False`` an empty interval is reported through
    ``feasible=False`` instead of an exception (unguaranteed mode), and the
    same midpoint is used.
    """
    if not (mu1 > 0 and mu2 >= 0 and 0 <= d < 1):
        raise ConfigError("choose_zeta needs mu1 > 0, mu2 >= 0 and 0 <= d < 1")
    lower, upper = zeta_bounds(mu1, mu2, d)
    zeta = 0.5 * (lower + upper)
    feasible = lower < upper
    problem = None
    if not feasible:
        problem = (f"mu2 = {mu2:g} >= sqrt(1-d) mu1 = {math.sqrt(1 - d) * mu1:g}: "
                   f"zeta interval ({lower:g}, {upper:g}) is empty")
    elif delay_can_vanish and d > 0:
        # the instantaneous-feedback case additionally needs zeta < 2 mu1 < 2 (mu1 + mu2) / d
        if not (zeta < 2 * mu1 < 2 * (mu1 + mu2) / d):
            feasible = False
            problem = "vanishing-delay condition zeta < 2 mu1 < 2 (mu1 + mu2)/d fails"
    if problem and strict:
        raise StabilityConditionViolated(problem)
    return ZetaSelection(zeta=zeta, lower=lower, upper=upper, feasible=feasible)


# -- discrete norms ------------------------------------------------------------

def trapz_sq(v, h):
    """Nodal trapezoid value of int_0^1 v^2."""
    s = float(np.dot(v, v))
    return h * (s - 0.5 * (v[0] ** 2 + v[-1] ** 2))


def trapz_dot(a, b, h):
    s = float(np.dot(a, b))
    return h * (s - 0.5 * (a[0] * b[0] + a[-1] * b[-1]))


def grad_sq(u, h):
    """|u_x|^2 for the piecewise-linear interpolant of nodal values."""
    du = np.diff(u)
    return float(np.dot(du, du)) / h


def grad_dot(a, b, h):
    return float(np.dot(np.diff(a), np.diff(b))) / h


def _delay_quadratures(state, tau, decay=0.0):
    """int_{t-tau}^t exp(-decay (t-s)) u_t(1,s)^2 ds from history or z-field."""
    if tau <= 0:
        return 0.0
    if getattr(state, "zfield", None) is not None:
        z = state.zfield.values
        rho = np.linspace(0.0, 1.0, len(z))
        f = z * z
        if decay:
            f = f * np.exp(-decay * tau * rho)
        return tau * float(np.trapezoid(f, rho))
    return state.history.integral_sq(state.t - tau, state.t, decay=decay)


def compute_energy(state, kernel, zeta, delay, terms=None) -> EnergyBreakdown:
    """Energy components of ``state``.

    ``kernel`` is the kernel actually driving the dynamics.  ``terms`` may
    carry precomputed memory quantities (see ``MemoryTerms`` in the solver).
    """
    h = state.h
    u, v = state.u, state.v
    if terms is None:
        terms = state.memory_terms()
    tau, _ = tau_eval(delay, state.t)
    kinetic = 0.5 * trapz_sq(v, h)
    elastic = 0.5 * (1.0 - kernel_integral(kernel, state.t)) * grad_sq(u, h)
    memory = 0.5 * terms.gcirc
    boundary = 0.5 * float(v[-1]) ** 2
    delay_term = 0.5 * zeta * _delay_quadratures(state, tau)
    return EnergyBreakdown(kinetic, elastic, memory, boundary, delay_term)


def compute_lyapunov(state, kernel, cfg: LyapunovConfig, E: EnergyBreakdown,
                     xi_now: float, *, alpha: float, zeta: float, delay,
                     terms=None) -> LyapunovSample:
    h = state.h
    u, v = state.u, state.v
    if terms is None:
        terms = state.memory_terms()
    psi = trapz_dot(v, u, h) + float(v[-1] * u[-1]) + 0.5 * alpha * grad_sq(u, h)
    # int_0^t g(t-s)(u(t) - u(s)) ds = G u(t) - conv
    lag = terms.G * u - terms.conv
    phi = -trapz_dot(v, lag, h)
    tau, _ = tau_eval(delay, state.t)
    # positive sign: the functional is used as a nonnegative quantity
    I = zeta * _delay_quadratures(state, tau, decay=2.0)
    return lyapunov_from_parts(E.total, psi, phi, I, xi_now, cfg)


def lyapunov_from_parts(E, psi, phi, I, xi_now, cfg):
    L = E + cfg.eps1 * psi + cfg.eps2 * phi + cfg.eps3 * I
    H = xi_now * L + cfg.h_weight * E
    return LyapunovSample(psi=psi, phi=phi, I=I, L=L, H=H)


def equivalence_ratios(trajectory):
    """(min E/L, max E/L) over samples with E > 0."""
    E = np.asarray(trajectory["E_total"])
    L = np.asarray(trajectory["L"])
    t = np.asarray(trajectory["t"])
    live = E > 0
    if not np.any(live):
        return 1.0, 1.0
    bad = live & (L <= 0)
    if np.any(bad):
        t_bad = float(t[np.argmax(bad)])
        raise EquivalenceBroken(
            f"L <= 0 at t = {t_bad:.6g}; reduce the epsilon weights", t=t_bad)
    ratio = E[live] / L[live]
    return float(ratio.min()), float(ratio.max())


def energy_rate_rhs(trajectory, alpha, mu1, mu2, zeta):
    """Analytic dE/dt from recorded auxiliary quantities."""
    tr = trajectory
    return (-alpha * tr["grad_v_sq"]
            - mu1 * tr["vb_sq"]
            - mu2 * tr["vb_y"]
            + 0.5 * tr["gprime_circ"]
            - 0.5 * tr["g_grad_u_sq"]
            - 0.5 * zeta * tr["y_sq_lag"]
            + 0.5 * zeta * tr["vb_sq"])


def energy_rate_residual(trajectory, config, window=None, skip=10):
    """Central-difference dE/dt minus the analytic rate.

    Returns ``(t, residual, sup)`` over ``window`` (default: whole run),
    always skipping the first ``skip`` steps.
    """
    meta = trajectory.meta
    if meta.get("cadence") != 1:
        raise ConfigError("energy_rate_residual needs a trajectory sampled every step")
    t = np.asarray(trajectory["t"])
    E = np.asarray(trajectory["E_total"])
    if len(t) < 3:
        return np.zeros(0), np.zeros(0), 0.0
    dt = config.dt
    rhs = energy_rate_rhs(trajectory, config.alpha, config.mu1, config.mu2, meta["zeta"])
    dEdt = (E[2:] - E[:-2]) / (2.0 * dt)
    r = dEdt - rhs[1:-1]
    tc = t[1:-1]
    mask = np.arange(1, len(t) - 1) >= skip
    if window is not None:
        mask &= (tc >= window[0] - 1e-12) & (tc <= window[1] + 1e-12)
    r = r[mask]
    return tc[mask], r, float(np.max(np.abs(r))) if len(r) else 0.0
