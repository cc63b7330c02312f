"""Post-processing: decay-envelope fits, cross-validation and convergence studies."""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace
import math

import numpy as np

from .errors import ConfigError, InconclusiveOrder, NonpositiveEnergy
from .kernels import KernelSpec
from .solver import SimConfig, Stepper, active_kernel, init_state, run

ENERGY_FLOOR = 1e-14


def integrate_xi(spec: KernelSpec, t0, t):
    """X(t) = int_{t0}^t xi(s) ds for the tight rate xi = -g'/g.

    Since xi = -(log g)', X = log g(t0) - log g(t); this is evaluated in a
    form that stays finite when g underflows.  The zero kernel uses xi = 1.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < t0) or t0 < 0:
        raise ValueError("integrate_xi needs t >= t0 >= 0")
    fam = spec.family
    if fam == "zero":
        X = t - t0
    elif fam == "exponential":
        X = spec.b * (t - t0)
    elif fam == "polynomial":
        X = spec.p * (np.log1p(t) - math.log1p(t0))
    else:
        w, r = spec.exp_terms()
        rmin = r.min()

        def log_g(s):
            s = np.atleast_1d(s)
            return -rmin * s + np.log(np.exp(-np.multiply.outer(s, r - rmin)) @ w)

        X = (log_g(t0)[0] - log_g(t)).reshape(t.shape)
    return float(X) if X.ndim == 0 else X


@dataclass(frozen=True)
class DecayFit:
    K: float
    k: float
    r2: float
    window: tuple
    envelope_violation: float
    t0: float
    n_samples: int
    no_decay: bool
    regime: str
    exponent: float | None = None   # k * p for polynomial kernels

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_decay(t, E, spec: KernelSpec, t0: float = 1.0, window_fraction: float = 0.6,
              floor: float = ENERGY_FLOOR, E_ref: float | None = None) -> DecayFit:
    """Fit E(t) <= K exp(-k X(t)) on the tail of the series.

    log E is regressed on X(t) = int_{t0}^t xi; k is minus the slope and K
    the smallest constant making the envelope hold at every window sample.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if not 0 < window_fraction <= 1:
        raise ConfigError("window_fraction must be in (0, 1]")
    T = t[-1]
    start = max(t0, T - window_fraction * (T - t0))
    in_window = t >= start - 1e-12
    if np.any(E[in_window] <= 0):
        raise NonpositiveEnergy("energy is not strictly positive on the fit window")
    ref = E[0] if E_ref is None else E_ref
    keep = in_window & (E >= floor * ref)
    n = int(keep.sum())
    if n < 20:
        raise ConfigError(f"only {n} usable samples in the fit window (need 20)")
    X = integrate_xi(spec, t0, t[keep])
    y = np.log(E[keep])
    Xc = X - X.mean()
    yc = y - y.mean()
    sxx = float(Xc @ Xc)
    if sxx == 0:
        raise ConfigError("fit window has no spread in X(t)")
    # a flat series must give exactly k = 0, not rounding noise of either sign
    slope = 0.0 if np.ptp(y) == 0 else float(Xc @ yc) / sxx
    resid = yc - slope * Xc
    syy = float(yc @ yc)
    r2 = 1.0 if syy == 0 else max(0.0, 1.0 - float(resid @ resid) / syy)
    k = -slope
    # log-domain max keeps K finite even for tiny E
    logK = float(np.max(y + k * X))
    K = math.exp(logK)
    violation = float(np.max(np.exp(y + k * X - logK)) - 1.0)
    regime = {"exponential": "exponential", "polynomial": "polynomial"}.get(spec.family, "general")
    exponent = k * spec.p if spec.family == "polynomial" else None
    return DecayFit(K=K, k=k, r2=r2, window=(float(t[keep][0]), float(t[keep][-1])),
                    envelope_violation=violation, t0=float(t0), n_samples=n,
                    no_decay=k <= 0, regime=regime, exponent=exponent)


def fit_trajectory(trajectory, config: SimConfig, window_fraction=0.6):
    return fit_decay(trajectory["t"], trajectory["E_total"], config.kernel,
                     t0=config.t0, window_fraction=window_fraction)


# -- cross validation -----------------------------------------------------------

@dataclass(frozen=True)
class DelayCrossValidation:
    sup_error: float
    refined_sup_error: float | None
    ratio: float | None

    def to_dict(self):
        return asdict(self)


def feedback_series(config: SimConfig) -> np.ndarray:
    """Delayed boundary feedback at every step (no energy bookkeeping)."""
    kernel, _ = active_kernel(config)
    state = init_state(config, kernel)
    stepper = Stepper(config, kernel)
    out = np.empty(config.n_steps + 1)
    out[0] = state.y
    for i in range(config.n_steps):
        stepper.advance(state)
        out[i + 1] = state.y
    return out


def _feedback_gap(config):
    buf = feedback_series(replace(config, delay_mode="buffer"))
    zf = feedback_series(replace(config, delay_mode="zfield"))
    return float(np.max(np.abs(buf - zf)))


def cross_validate_delay(config: SimConfig, refine: bool = True) -> DelayCrossValidation:
    """Buffer vs z-field delayed feedback, optionally at (2m, dt/2) as well."""
    e1 = _feedback_gap(config)
    if not refine:
        return DelayCrossValidation(e1, None, None)
    fine = replace(config, zfield_m=2 * config.zfield_m, dt=config.dt / 2)
    e2 = _feedback_gap(fine)
    ratio = e1 / e2 if e2 > 0 else math.inf if e1 > 0 else None
    return DelayCrossValidation(e1, e2, ratio)


@dataclass(frozen=True)
class MemoryCrossValidation:
    field_error: float      # sup |u_direct - u_expsum| / sup |u_direct| over samples
    energy_error: float     # sup |E_direct - E_expsum| / sup E_direct

    def to_dict(self):
        return asdict(self)


def cross_validate_memory(config: SimConfig) -> MemoryCrossValidation:
    a = run(replace(config, memory_mode="direct", monitor_energy=False), keep_state=True)
    b = run(replace(config, memory_mode="expsum", monitor_energy=False), keep_state=True)
    ua, ub = a.state.u, b.state.u
    scale_u = max(float(np.max(np.abs(ua))), 1e-300)
    fields = float(np.max(np.abs(ua - ub))) / scale_u
    # boundary displacement over the whole run as a field proxy
    ubd = np.max(np.abs(a["u_boundary"] - b["u_boundary"])) / max(
        float(np.max(np.abs(a["u_boundary"]))), 1e-300)
    scale_E = max(float(np.max(a["E_total"])), 1e-300)
    energy = float(np.max(np.abs(a["E_total"] - b["E_total"]))) / scale_E
    return MemoryCrossValidation(field_error=max(fields, float(ubd)), energy_error=energy)


def _orders(errors):
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0) or np.any(np.diff(errors) >= 0):
        raise InconclusiveOrder(f"error sequence not decreasing: {errors.tolist()}",
                                errors=errors.tolist())
    return np.log2(errors[:-1] / errors[1:])


def convergence_order(config: SimConfig, refinements: int = 2):
    """Observed (time, space) orders from successive halvings of dt and h.

    Errors are differences of the final displacement between consecutive
    levels (fine solution restricted to the coarse nodes); the order of the
    last pair is reported.
    """
    if refinements < 2:
        raise ValueError("convergence_order needs refinements >= 2")
    base = replace(config, monitor_energy=False, cadence=max(1, config.n_steps))

    def final_u(cfg):
        return run(cfg, keep_state=True).state.u

    time_u = [final_u(replace(base, dt=config.dt / 2 ** i)) for i in range(refinements + 1)]
    time_err = [float(np.max(np.abs(a - b))) for a, b in zip(time_u, time_u[1:])]

    n = config.grid.n
    space_u = [final_u(replace(base, grid=replace(config.grid, n=n * 2 ** i)))
               for i in range(refinements + 1)]
    space_err = [float(np.max(np.abs(a - b[::2]))) for a, b in zip(space_u, space_u[1:])]
    return float(_orders(time_err)[-1]), float(_orders(space_err)[-1])


@dataclass
class ValidationReport:
    delay_sup_error: float | None = None
    delay_refined_sup_error: float | None = None
    delay_ratio: float | None = None
    memory_field_error: float | None = None
    memory_energy_error: float | None = None
    order_time: float | None = None
    order_space: float | None = None
    alpha1_hat: float | None = None
    alpha2_hat: float | None = None
    dissipation_violations: int | None = None

    def to_dict(self):
        return asdict(self)


# -- stability sweep ----------------------------------------------------------------

def delay_with_rate(tau0: float, d: float):
    """A sinusoidal delay of mean tau0 whose derivative bound is exactly d.

    The amplitude is fixed at tau0 / 2 so tau stays >= tau0 / 2 > 0 and the
    frequency carries d; d = 0 gives a constant delay.
    """
    from .delay import DelaySpec
    if d == 0:
        return DelaySpec.constant(tau0)
    amp = 0.5 * tau0
    return DelaySpec.sinusoid(tau0, amp, d / amp)


@dataclass(frozen=True)
class SweepPoint:
    ratio: float            # mu2 / mu1
    d: float
    feasible: bool          # stability condition holds (decay guaranteed)
    k: float | None
    r2: float | None
    no_decay: bool | None
    status: str             # "ok" or the error class name
    message: str = ""

    def to_dict(self):
        return asdict(self)


def _sweep_one(args):
    config, ratio, d, window_fraction = args
    from .errors import ViscoDecayError
    cfg = replace(config, mu2=ratio * config.mu1,
                  delay=delay_with_rate(config.delay.tau0, d),
                  allow_unguaranteed=True, monitor_energy=False)
    feasible = ratio < math.sqrt(1.0 - d)
    try:
        traj = run(cfg)
        feasible = bool(traj.meta["guaranteed"])
        fit = fit_trajectory(traj, cfg, window_fraction)
    except ViscoDecayError as exc:
        return SweepPoint(ratio, d, feasible, None, None, None, type(exc).__name__, str(exc))
    return SweepPoint(ratio, d, feasible, fit.k, fit.r2, fit.no_decay, "ok")


def stability_sweep(config: SimConfig, ratios, ds, jobs: int = 1,
                    window_fraction: float = 0.6) -> list[SweepPoint]:
    """Fit the decay rate over a (mu2/mu1, d) grid.

    Every point runs in unguaranteed mode, so parameters beyond the
    stability condition are simulated and flagged instead of rejected.
    Failures are recorded per point.
    """
    if config.mu1 <= 0:
        raise ConfigError("stability_sweep needs mu1 > 0")
    tasks = [(config, float(r), float(d), window_fraction) for d in ds for r in ratios]
    if jobs <= 1:
        return [_sweep_one(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_one, tasks))


def count_inversions(values) -> int:
    """Number of adjacent pairs that fail to decrease strictly."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) >= 0))
