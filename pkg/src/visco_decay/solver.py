"""Time integration of the damped viscoelastic wave equation on (0, 1).

    u_tt - u_xx + int_0^t g(t-s) u_xx(s) ds - alpha u_txx = 0,   0 < x < 1
    u(0, t) = 0
    u_tt(1) = -u_x(1) + int_0^t g(t-s) u_x(1, s) ds - alpha u_tx(1)
              - mu1 u_t(1) - mu2 u_t(1, t - tau(t))

Space: piecewise-linear elements with a lumped mass; the boundary node
carries the extra unit mass of the dynamic condition, so the last matrix row
is the boundary ODE.  Time: trapezoidal (average acceleration) rule.  The
memory integral uses the composite trapezoid rule on the step grid; only its
endpoint weight g(0) dt / 2 touches the unknown and is folded into the
tridiagonal matrix.  The delayed velocity is read from history except when
tau < dt, where the one implicit interpolation weight is handled by a
rank-one update of the factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace, fields
import math
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .delay import (
    BoundaryHistory,
    DelaySpec,
    ZField,
    _zfield_courant,
    tau_eval,
    validate_delay,
)
from .energy import (
    LyapunovConfig,
    ZetaSelection,
    choose_zeta,
    compute_energy,
    compute_lyapunov,
    grad_dot,
    grad_sq,
    lyapunov_from_parts,
    zeta_bounds,
)
from .errors import (
    ConfigError,
    IncompatibleDirichletData,
    SolverError,
    ViscoDecayError,
)
from .kernels import (
    KernelSpec,
    compress_to_expsum,
    evaluate_kernel,
    kernel_derivative,
    rate_function,
    validate_kernel,
)
from .profiles import Profile

MEMORY_MODES = ("direct", "expsum")
DELAY_MODES = ("buffer", "zfield")

CSV_COLUMNS = ("t", "E_total", "E_kinetic", "E_elastic", "E_memory", "E_boundary",
               "E_delay", "psi", "phi", "I", "L", "H",
               "u_boundary", "v_boundary", "v_delayed")
AUX_COLUMNS = ("xi", "grad_v_sq", "gprime_circ", "g_grad_u_sq",
               "vb_sq", "vb_y", "y_sq_lag", "tau")


@dataclass(frozen=True)
class Grid1D:
    n: int = 100

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ConfigError("grid.n must be an integer >= 4")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.n + 1)


@dataclass(frozen=True)
class SimConfig:
    alpha: float = 0.1
    mu1: float = 1.0
    mu2: float = 0.3
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec.exponential(0.5, 2.0))
    delay: DelaySpec = field(default_factory=lambda: DelaySpec.constant(0.5))
    grid: Grid1D = field(default_factory=Grid1D)
    dt: float = 1e-3
    T: float = 30.0
    memory_mode: str = "expsum"
    delay_mode: str = "buffer"
    u0: Profile = field(default_factory=lambda: Profile("sine", amplitude=1.0, wavenumber=0.5))
    u1: Profile = field(default_factory=Profile)
    f0: Profile = field(default_factory=Profile)
    zeta: float | None = None          # None: choose automatically
    allow_unguaranteed: bool = False
    cadence: int = 10
    zfield_m: int = 64
    lyapunov: LyapunovConfig = field(default_factory=LyapunovConfig)
    t0: float = 1.0
    compression_tol: float = 1e-8
    max_terms: int = 64
    history_cap: int = 200_000
    monitor_energy: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.T >= 0:
            raise ConfigError("T must be nonnegative")
        if self.alpha < 0 or self.mu1 < 0 or self.mu2 < 0:
            raise ConfigError("alpha, mu1, mu2 must be nonnegative")
        if self.mu2 > 0 and self.mu1 <= 0:
            raise ConfigError("mu1 must be positive whenever mu2 is")
        if self.memory_mode not in MEMORY_MODES:
            raise ConfigError(f"memory_mode must be one of {MEMORY_MODES}")
        if self.delay_mode not in DELAY_MODES:
            raise ConfigError(f"delay_mode must be one of {DELAY_MODES}")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            raise ConfigError("cadence must be a positive integer")
        if self.zfield_m < 2:
            raise ConfigError("zfield_m must be >= 2")
        if not self.t0 > 0:
            raise ConfigError("t0 must be positive")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def scaled_data(self, factor):
        return replace(self, u0=self.u0.scaled(factor), u1=self.u1.scaled(factor),
                       f0=self.f0.scaled(factor))

    # -- (de)serialisation ---------------------------------------------------

    _SCALARS = {"alpha": float, "mu1": float, "mu2": float, "dt": float, "T": float,
                "memory_mode": str, "delay_mode": str, "allow_unguaranteed": bool,
                "cadence": int, "zfield_m": int, "t0": float, "compression_tol": float,
                "max_terms": int, "history_cap": int, "monitor_energy": bool}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("simulation config must be a JSON object")
        d = dict(d)
        kw = {}
        for key, typ in cls._SCALARS.items():
            if key in d:
                val = d.pop(key)
                if typ is bool and not isinstance(val, bool):
                    raise ConfigError(f"{key}: expected true/false, got {val!r}")
                if typ in (int, float) and isinstance(val, bool):
                    raise ConfigError(f"{key}: expected a number, got {val!r}")
                try:
                    kw[key] = typ(val)
                except (TypeError, ValueError):
                    raise ConfigError(f"{key}: cannot interpret {val!r} as {typ.__name__}") from None
        if "kernel" in d:
            kw["kernel"] = KernelSpec.from_dict(_obj(d.pop("kernel"), "kernel"))
        if "delay" in d:
            kw["delay"] = DelaySpec.from_dict(_obj(d.pop("delay"), "delay"))
        if "grid" in d:
            g = _obj(d.pop("grid"), "grid")
            try:
                kw["grid"] = Grid1D(n=int(g.get("n", 100)))
            except (TypeError, ValueError):
                raise ConfigError("grid.n: expected an integer") from None
        init = _obj(d.pop("initial", {}), "initial")
        for key in ("u0", "u1", "f0"):
            if key in init:
                kw[key] = Profile.from_dict(init[key], f"initial.{key}")
        if "zeta" in d:
            z = d.pop("zeta")
            if z in (None, "auto"):
                kw["zeta"] = None
            else:
                try:
                    kw["zeta"] = float(z)
                except (TypeError, ValueError):
                    raise ConfigError(f"zeta: expected a number or 'auto', got {z!r}") from None
        if "lyapunov" in d:
            ly = _obj(d.pop("lyapunov"), "lyapunov")
            unknown = set(ly) - {f.name for f in fields(LyapunovConfig)}
            if unknown:
                raise ConfigError(f"lyapunov: unknown keys {sorted(unknown)}")
            kw["lyapunov"] = LyapunovConfig(**ly)
        if d:
            raise ConfigError(f"unknown simulation keys {sorted(d)}")
        return cls(**kw)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self._SCALARS}
        out.update(kernel=self.kernel.to_dict(), delay=self.delay.to_dict(),
                   grid={"n": self.grid.n},
                   initial={"u0": self.u0.to_dict(), "u1": self.u1.to_dict(),
                            "f0": self.f0.to_dict()},
                   zeta="auto" if self.zeta is None else self.zeta,
                   lyapunov={f.name: getattr(self.lyapunov, f.name)
                             for f in fields(LyapunovConfig)})
        return out


def _obj(val, where):
    if not isinstance(val, dict):
        raise ConfigError(f"{where}: expected an object")
    return val


# -- memory history ------------------------------------------------------------

@dataclass
class MemoryTerms:
    """Trapezoid-rule memory quantities at the current time."""

    G: float          # int_0^t g
    conv: np.ndarray  # int_0^t g(t-s) u(s) ds, nodal
    gcirc: float      # (g o u_x)(t)
    gprime_circ: float  # (g' o u_x)(t)


class DirectMemory:
    """Stores every displacement snapshot and sums the quadrature directly."""

    def __init__(self, kernel, dt, n_nodes, n_steps, h, cap):
        if n_steps + 1 > cap:
            raise ConfigError(
                f"direct memory needs {n_steps + 1} snapshots > cap {cap}; use memory_mode=expsum")
        self.kernel = kernel
        self.dt = dt
        self.h = h
        s = dt * np.arange(n_steps + 2)
        self.gtab = np.asarray(evaluate_kernel(kernel, s))
        self.gptab = np.asarray(kernel_derivative(kernel, s))
        self.U = np.zeros((n_steps + 1, n_nodes))
        self.count = 0

    @property
    def c0(self):
        return 0.5 * self.dt * float(self.gtab[0])

    def push(self, u):
        self.U[self.count] = u
        self.count += 1

    def _weights(self, tab, n):
        # trapezoid weights for int_0^{t_n} k(t_n - s) f(s) ds on samples 0..n
        if n == 0:
            return np.zeros(1)
        w = self.dt * tab[n::-1].copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def remainder(self):
        """Known part of conv at the next step (all samples but the new one)."""
        n = self.count  # index of the upcoming sample
        w = self.dt * self.gtab[n:0:-1].copy()
        w[0] *= 0.5
        return w @ self.U[:n]

    def terms(self, u):
        n = self.count - 1
        w = self._weights(self.gtab, n)
        wp = self._weights(self.gptab, n)
        U = self.U[: n + 1]
        conv = w @ U
        du = np.diff(U - u, axis=1)
        dist = np.einsum("ij,ij->i", du, du) / self.h
        return MemoryTerms(G=float(w.sum()), conv=conv,
                           gcirc=float(w @ dist), gprime_circ=float(wp @ dist))


class ExpSumMemory:
    """Recursive accumulators for an exact exp-sum kernel.

    For each rate a_j keeps the trapezoid sums of exp(-a_j (t - s)) times 1,
    u(s) and |u_x(s)|^2; they reproduce the direct quadrature exactly.
    """

    def __init__(self, kernel, dt, n_nodes, h):
        w, r = kernel.exp_terms()
        self.kernel = kernel
        self.dt = dt
        self.h = h
        self.w, self.r = w, r
        self.wp = -r * w
        self.decay = np.exp(-r * dt)
        self.A = np.zeros((len(w), n_nodes))
        self.A2 = np.zeros(len(w))
        self.G = np.zeros(len(w))
        self.count = 0
        self._u = None
        self._q = 0.0

    @property
    def c0(self):
        return 0.5 * self.dt * float(self.w.sum())

    def push(self, u):
        q = grad_sq(u, self.h)
        if self.count:
            e = self.decay
            half = 0.5 * self.dt
            self.A = e[:, None] * (self.A + half * self._u) + half * u
            self.A2 = e * (self.A2 + half * self._q) + half * q
            self.G = e * (self.G + half) + half
        self._u = u.copy()
        self._q = q
        self.count += 1

    def remainder(self):
        e = self.decay
        return (self.w * e) @ (self.A + 0.5 * self.dt * self._u)

    def terms(self, u):
        q = grad_sq(u, self.h)
        G = float(self.w @ self.G)
        Gp = float(self.wp @ self.G)
        conv = self.w @ self.A
        convp = self.wp @ self.A
        gcirc = G * q - 2.0 * grad_dot(u, conv, self.h) + float(self.w @ self.A2)
        gpc = Gp * q - 2.0 * grad_dot(u, convp, self.h) + float(self.wp @ self.A2)
        # exact values are >= 0 (resp. <= 0); clip cancellation noise
        return MemoryTerms(G=G, conv=conv, gcirc=max(gcirc, 0.0),
                           gprime_circ=min(gpc, 0.0))


# -- state ------------------------------------------------------------------------

@dataclass
class State:
    t: float
    step: int
    u: np.ndarray
    v: np.ndarray
    h: float
    memory: object
    history: BoundaryHistory
    conv: np.ndarray
    y: float                       # delayed boundary velocity at t
    zfield: ZField | None = None
    _terms_cache: tuple | None = field(default=None, repr=False)

    def memory_terms(self) -> MemoryTerms:
        if self._terms_cache is None or self._terms_cache[0] != self.step:
            self._terms_cache = (self.step, self.memory.terms(self.u))
        return self._terms_cache[1]


def active_kernel(config: SimConfig):
    """Kernel driving the dynamics and its compression record (or None)."""
    k = config.kernel
    if config.memory_mode == "direct" or k.is_expsum:
        return k, None
    approx = compress_to_expsum(k, config.compression_tol, max(config.T, config.dt),
                                max_terms=config.max_terms)
    return approx.as_kernel(), approx


def init_state(config: SimConfig, kernel: KernelSpec | None = None) -> State:
    """Sample the initial data and install the prehistory."""
    if kernel is None:
        kernel, _ = active_kernel(config)
    grid = config.grid
    x = grid.x
    u = np.asarray(config.u0(x), dtype=float).copy()
    v = np.asarray(config.u1(x), dtype=float).copy()
    if abs(u[0]) > 1e-12 or abs(v[0]) > 1e-12:
        raise IncompatibleDirichletData(
            f"initial data must vanish at x = 0 (u0(0) = {u[0]:g}, u1(0) = {v[0]:g})")
    u[0] = v[0] = 0.0

    tau_init, _ = tau_eval(config.delay, 0.0)
    history = BoundaryHistory(config.dt, config.delay.tau_max + 2 * config.dt,
                              config.f0, tau_init)
    history.push(float(v[-1]))
    if config.memory_mode == "direct":
        memory = DirectMemory(kernel, config.dt, grid.n + 1, config.n_steps, grid.h,
                              config.history_cap)
    else:
        if not kernel.is_expsum:
            raise ConfigError("expsum memory mode needs an exp-sum kernel")
        memory = ExpSumMemory(kernel, config.dt, grid.n + 1, grid.h)
    memory.push(u)

    zfield = None
    if config.delay_mode == "zfield":
        zfield = ZField.from_prehistory(config.f0, tau_init, config.zfield_m)
        y0 = zfield.outflow
    else:
        y0 = float(v[-1]) if tau_init == 0 else float(config.f0(-tau_init))
    return State(t=0.0, step=0, u=u, v=v, h=grid.h, memory=memory, history=history,
                 conv=np.zeros_like(u), y=y0, zfield=zfield)


def memory_laplacian(state: State):
    """(interior Laplacian of the memory convolution, its flux at x = 1).

    Both come from the nodal convolution int_0^t g(t-s) u(s) ds, so the
    flux is the boundary analogue int_0^t g(t-s) u_x(1, s) ds.
    """
    conv = state.memory_terms().conv
    h = state.h
    lap = (conv[:-2] - 2.0 * conv[1:-1] + conv[2:]) / (h * h)
    return lap, float(conv[-1] - conv[-2]) / h


def stiffness_apply(w, h):
    """K w on the unknown nodes 1..n (w includes the Dirichlet node)."""
    flux = np.diff(w) / h
    out = np.empty(len(w) - 1)
    out[:-1] = flux[:-1] - flux[1:]
    out[-1] = flux[-1]
    return out


class Stepper:
    """Prefactored trapezoidal stepper for one configuration."""

    def __init__(self, config: SimConfig, kernel: KernelSpec):
        self.config = config
        self.kernel = kernel
        n, h, dt = config.grid.n, config.grid.h, config.dt
        mass = np.full(n, h)
        mass[-1] = 0.5 * h + 1.0
        self.mass = mass
        self.c0 = 0.5 * dt * float(evaluate_kernel(kernel, 0.0))
        main = np.full(n, 2.0 / h)
        main[-1] = 1.0 / h
        off = np.full(n - 1, -1.0 / h)
        K = sp.diags([off, main, off], [-1, 0, 1], format="csc")
        coef = 0.25 * dt * (1.0 - self.c0) + 0.5 * config.alpha
        A = sp.diags(mass / dt) + coef * K
        A = A.tolil()
        A[n - 1, n - 1] += 0.5 * config.mu1
        try:
            self.lu = splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed: {exc}") from None
        e = np.zeros(n)
        e[-1] = 1.0
        self.w_last = self.lu.solve(e)

    def advance(self, state: State) -> State:
        cfg = self.config
        dt, h = cfg.dt, state.h
        mu1, mu2, alpha = cfg.mu1, cfg.mu2, cfg.alpha
        u, v = state.u, state.v
        t_next = (state.step + 1) * dt

        R = state.memory.remainder()

        theta = 0.0
        if state.zfield is not None:
            tau_n, dtau_n = tau_eval(cfg.delay, state.t)
            _zfield_courant(state.zfield.m, tau_n, dtau_n, dt)
            y_known = (state.zfield.values[-1]
                       - dt * state.zfield.m * (1.0 - dtau_n) / tau_n
                       * (state.zfield.values[-1] - state.zfield.values[-2]))
        else:
            tau1, _ = tau_eval(cfg.delay, t_next)
            q = t_next - tau1
            if q <= state.t + 1e-9 * dt:
                y_known = state.history.value_at(min(q, state.t))
            else:
                theta = (q - state.t) / dt
                y_known = (1.0 - theta) * float(v[-1])

        u_half = u + 0.25 * dt * v
        conv_half = 0.5 * (state.conv + self.c0 * (u + 0.5 * dt * v) + R)
        rhs = self.mass * v[1:] / dt + stiffness_apply(
            -u_half + conv_half - 0.5 * alpha * v, h)
        rhs[-1] -= 0.5 * mu1 * v[-1] + 0.5 * mu2 * (state.y + y_known)

        sol = self.lu.solve(rhs)
        if theta:
            c = 0.5 * mu2 * theta
            sol = sol - (c * sol[-1] / (1.0 + c * self.w_last[-1])) * self.w_last
        if not np.all(np.isfinite(sol)):
            raise SolverError("non-finite solution", t=t_next)

        v_new = np.empty_like(v)
        v_new[0] = 0.0
        v_new[1:] = sol
        u_new = u + 0.5 * dt * (v + v_new)
        u_new[0] = 0.0

        state.memory.push(u_new)
        state.conv = R + self.c0 * u_new
        state.history.push(float(v_new[-1]))
        if state.zfield is not None:
            z = state.zfield.values
            c = _zfield_courant(state.zfield.m, tau_n, dtau_n, dt)
            z[1:] -= c[1:] * (z[1:] - z[:-1])
            z[0] = v_new[-1]
        state.y = float(y_known + theta * v_new[-1])
        state.u, state.v = u_new, v_new
        state.step += 1
        state.t = t_next
        return state


def advance(state: State, config: SimConfig, stepper: Stepper | None = None) -> State:
    """One time step; builds (and factorises) a stepper when none is given."""
    if stepper is None:
        stepper = Stepper(config, state.memory.kernel)
    return stepper.advance(state)


# -- trajectories -------------------------------------------------------------------

class Trajectory:
    """Sampled time series plus run metadata.  Index by column name."""

    def __init__(self, columns, meta):
        self.columns = columns
        self.meta = meta

    def __getitem__(self, key):
        return self.columns[key]

    def __len__(self):
        return len(self.columns["t"])

    @property
    def t(self):
        return self.columns["t"]


def _select_zeta(config: SimConfig, d: float) -> ZetaSelection:
    if config.zeta is not None:
        if config.mu1 > 0:
            lower, upper = zeta_bounds(config.mu1, config.mu2, d)
            ok = lower < config.zeta < upper
        else:
            lower = upper = 0.0
            ok = config.mu2 == 0
        return ZetaSelection(zeta=config.zeta, lower=lower, upper=upper, feasible=ok)
    return choose_zeta(config.mu1, config.mu2, d, config.delay.can_vanish,
                       strict=not config.allow_unguaranteed)


def certify(config: SimConfig):
    """Kernel certificate, d and zeta selection; raises on failure."""
    cert = validate_kernel(config.kernel, config.t0, horizon=max(config.T, 100.0))
    d = validate_delay(config.delay)
    zsel = _select_zeta(config, d)
    return cert, d, zsel


class _Recorder:
    def __init__(self):
        self.rows = {k: [] for k in CSV_COLUMNS + AUX_COLUMNS}

    def add(self, **vals):
        for k, v in vals.items():
            self.rows[k].append(v)

    def arrays(self):
        return {k: np.asarray(v, dtype=float) for k, v in self.rows.items()}


def _sample(state, kernel, config, zeta, xi_spec, lyap):
    terms = state.memory_terms()
    E = compute_energy(state, kernel, zeta, config.delay, terms=terms)
    xi_now = float(rate_function(xi_spec, state.t))
    ly = compute_lyapunov(state, kernel, lyap, E, xi_now, alpha=config.alpha,
                          zeta=zeta, delay=config.delay, terms=terms)
    tau, dtau = tau_eval(config.delay, state.t)
    vb = float(state.v[-1])
    return dict(
        t=state.t, E_total=E.total, E_kinetic=E.kinetic, E_elastic=E.elastic,
        E_memory=E.memory, E_boundary=E.boundary_kinetic, E_delay=E.delay_term,
        psi=ly.psi, phi=ly.phi, I=ly.I, L=ly.L, H=ly.H,
        u_boundary=float(state.u[-1]), v_boundary=vb, v_delayed=state.y,
        xi=xi_now, grad_v_sq=grad_sq(state.v, state.h), gprime_circ=terms.gprime_circ,
        g_grad_u_sq=float(evaluate_kernel(kernel, state.t)) * grad_sq(state.u, state.h),
        vb_sq=vb * vb, vb_y=vb * state.y, y_sq_lag=(1.0 - dtau) * state.y ** 2, tau=tau,
    )


def _relax_lyapunov(cols, lyap):
    """Halve the epsilons until L > 0 wherever E > 0."""
    halvings = 0
    while True:
        L = (cols["E_total"] + lyap.eps1 * cols["psi"] + lyap.eps2 * cols["phi"]
             + lyap.eps3 * cols["I"])
        bad = (cols["E_total"] > 0) & (L <= 0)
        if not lyap.auto_halve or not np.any(bad) or halvings >= 60:
            break
        lyap = lyap.halved()
        halvings += 1
    cols["L"] = L
    cols["H"] = cols["xi"] * L + lyap.h_weight * cols["E_total"]
    return lyap, halvings


def run(config: SimConfig, keep_state: bool = False) -> Trajectory:
    """Integrate to T and return the sampled trajectory.

    The energy is also evaluated at every step (``monitor_energy``) to count
    steps after the tenth whose energy increase exceeds 10 dt^2 E(0).
    """
    wall0 = time.perf_counter()
    cert, d, zsel = certify(config)
    kernel, approx = active_kernel(config)
    state = init_state(config, kernel)
    stepper = Stepper(config, kernel)
    zeta = zsel.zeta
    lyap = config.lyapunov
    rec = _Recorder()
    rec.add(**_sample(state, kernel, config, zeta, config.kernel, lyap))

    E0 = rec.rows["E_total"][0]
    tol = 10.0 * config.dt ** 2 * E0
    violations = 0
    worst = 0.0
    E_prev = E0
    t_setup = time.perf_counter() - wall0
    for _ in range(config.n_steps):
        try:
            stepper.advance(state)
        except ViscoDecayError as exc:
            if getattr(exc, "t", None) is None:
                exc.t = state.t + config.dt
                exc.args = (f"{exc} (t = {exc.t:.6g})",)
            raise
        sampled = state.step % config.cadence == 0
        if sampled:
            row = _sample(state, kernel, config, zeta, config.kernel, lyap)
            rec.add(**row)
            E_now = row["E_total"]
        elif config.monitor_energy:
            E_now = compute_energy(state, kernel, zeta, config.delay).total
        if sampled or config.monitor_energy:
            if not math.isfinite(E_now):
                raise SolverError("energy became non-finite", t=state.t)
            if state.step > 10:
                jump = E_now - E_prev
                worst = max(worst, jump)
                if jump > tol:
                    violations += 1
            E_prev = E_now

    cols = rec.arrays()
    lyap_used, halvings = _relax_lyapunov(cols, lyap)
    meta = {
        "config": config.to_dict(),
        "cadence": config.cadence,
        "n_steps": config.n_steps,
        "zeta": zeta,
        "zeta_selection": zsel.to_dict(),
        "guaranteed": bool(zsel.feasible and config.alpha > 0),
        "kernel_certificate": cert.to_dict(),
        "d": float(d),
        "delay_regime": "degenerate" if config.delay.can_vanish else "positive",
        "compression": None if approx is None else {
            "terms": len(approx.terms), "sup_error": approx.sup_error,
            "horizon": approx.horizon},
        "lyapunov": {"eps1": lyap_used.eps1, "eps2": lyap_used.eps2,
                     "eps3": lyap_used.eps3, "h_weight": lyap_used.h_weight,
                     "halvings": halvings},
        "dissipation": {"monitored": bool(config.monitor_energy), "violations": violations,
                        "max_increase": float(worst), "tolerance": float(tol)},
        "timings": {"setup_s": t_setup, "total_s": time.perf_counter() - wall0},
    }
    traj = Trajectory(cols, meta)
    if keep_state:
        traj.state = state
    return traj
