import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from visco_decay.delay import DelaySpec
from visco_decay.energy import (
    LyapunovConfig,
    choose_zeta,
    compute_energy,
    compute_lyapunov,
    energy_rate_residual,
    equivalence_ratios,
    grad_dot,
    grad_sq,
    trapz_dot,
    trapz_sq,
)
from visco_decay.errors import ConfigError, EquivalenceBroken, StabilityConditionViolated
from visco_decay.kernels import KernelSpec
from visco_decay.profiles import Profile
from visco_decay.solver import Grid1D, SimConfig, Stepper, init_state, run

ZERO_DATA = dict(u0=Profile(), u1=Profile(), f0=Profile())


# -- zeta --------------------------------------------------------------------

def test_zeta_examples():
    z = choose_zeta(1.0, 0.5, 0.0)
    assert (z.lower, z.upper, z.zeta, z.feasible) == pytest.approx((0.5, 1.5, 1.0, True))
    with pytest.raises(StabilityConditionViolated):
        choose_zeta(2.0, 1.0, 0.75)
    z = choose_zeta(3.0, 0.0, 0.0)
    assert (z.lower, z.upper, z.zeta) == (0.0, 6.0, 3.0)


def test_zeta_unguaranteed_mode():
    z = choose_zeta(1.0, 2.0, 0.0, strict=False)
    assert not z.feasible and z.zeta == 1.0


def test_zeta_vanishing_delay_condition():
    # d > 0 and delay reaching zero: 2 mu1 < 2 (mu1 + mu2)/d holds for small d
    assert choose_zeta(1.0, 0.3, 0.2, delay_can_vanish=True).feasible
    with pytest.raises(ConfigError):
        choose_zeta(0.0, 0.3, 0.2)
    with pytest.raises(ConfigError):
        choose_zeta(1.0, 0.3, 1.0)


@given(st.floats(0.01, 10), st.floats(0, 20), st.floats(0, 0.99))
def test_zeta_feasibility_iff_condition(mu1, mu2, d):
    z = choose_zeta(mu1, mu2, d, strict=False)
    assert z.feasible == (mu2 < math.sqrt(1 - d) * mu1) or math.isclose(
        mu2, math.sqrt(1 - d) * mu1, rel_tol=1e-12)
    if z.feasible:
        assert z.lower < z.zeta < z.upper


# -- discrete norms ----------------------------------------------------------

@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30),
       st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_quadratures_match_numpy(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    h = 1.0 / (n - 1)
    x = np.linspace(0, 1, n)
    assert trapz_sq(a, h) == pytest.approx(np.trapezoid(a * a, x), rel=1e-12, abs=1e-10)
    assert trapz_dot(a, b, h) == pytest.approx(np.trapezoid(a * b, x), rel=1e-12, abs=1e-10)
    slope = np.diff(a) / h
    assert grad_sq(a, h) == pytest.approx(np.sum(slope ** 2) * h, rel=1e-12, abs=1e-10)
    assert grad_dot(a, b, h) == pytest.approx(np.sum(slope * np.diff(b) / h) * h,
                                              rel=1e-12, abs=1e-9)


# -- energy ------------------------------------------------------------------

def _cfg(**kw):
    base = SimConfig(grid=Grid1D(10), dt=1e-3, T=1.0, **ZERO_DATA)
    return replace(base, **kw)


def test_zero_state_energy():
    cfg = _cfg()
    s = init_state(cfg)
    E = compute_energy(s, cfg.kernel, 1.0, cfg.delay)
    assert E.total == 0.0
    ly = compute_lyapunov(s, cfg.kernel, LyapunovConfig(), E, 2.0, alpha=0.1, zeta=1.0,
                          delay=cfg.delay)
    assert (ly.psi, ly.phi, ly.I, ly.L, ly.H) == (0, 0, 0, 0, 0)


def test_constant_energy_components():
    cfg = _cfg(kernel=KernelSpec.zero(), delay=DelaySpec.constant(0.5),
               f0=Profile("constant", value=1.0))
    s = init_state(cfg)
    s.v[:] = 1.0
    E = compute_energy(s, cfg.kernel, 1.0, cfg.delay)
    assert E.kinetic == pytest.approx(0.5)
    assert E.boundary_kinetic == pytest.approx(0.5)
    assert E.delay_term == pytest.approx(0.25)
    assert E.elastic == 0.0 and E.memory == 0.0
    assert E.total == pytest.approx(1.25)


@pytest.mark.parametrize("mode", ["buffer", "zfield"])
def test_lyapunov_delay_functional_closed_form(mode):
    c, tau0, zeta = 0.7, 0.5, 1.3
    cfg = _cfg(delay=DelaySpec.constant(tau0), f0=Profile("constant", value=c),
               delay_mode=mode, zfield_m=512)
    s = init_state(cfg)
    E = compute_energy(s, cfg.kernel, zeta, cfg.delay)
    ly = compute_lyapunov(s, cfg.kernel, LyapunovConfig(), E, 2.0, alpha=0.1, zeta=zeta,
                          delay=cfg.delay)
    assert ly.I == pytest.approx(zeta * c * c * (1 - math.exp(-2 * tau0)) / 2, rel=1e-5)
    assert E.delay_term == pytest.approx(0.5 * zeta * tau0 * c * c, rel=1e-12)


def test_frozen_gradient_has_no_memory_energy():
    cfg = _cfg(u0=Profile("sine", amplitude=1.0, wavenumber=0.5), memory_mode="direct")
    s = init_state(cfg)
    for _ in range(100):
        s.memory.push(s.u)
        s.history.push(0.0)
        s.step += 1
        s.t += cfg.dt
    E = compute_energy(s, cfg.kernel, 1.0, cfg.delay)
    assert E.memory == pytest.approx(0.0, abs=1e-15)


def test_zero_weights_give_L_equal_E():
    cfg = _cfg(u0=Profile("sine", amplitude=1.0, wavenumber=0.5))
    s = init_state(cfg)
    stepper = Stepper(cfg, cfg.kernel)
    for _ in range(300):
        stepper.advance(s)
    E = compute_energy(s, cfg.kernel, 1.0, cfg.delay)
    ly = compute_lyapunov(s, cfg.kernel, LyapunovConfig(0, 0, 0, h_weight=1.0), E, 2.0,
                          alpha=0.1, zeta=1.0, delay=cfg.delay)
    assert ly.L == E.total
    assert ly.H == pytest.approx(3.0 * E.total)


# -- equivalence -------------------------------------------------------------

def test_equivalence_ratios_conventions():
    E = np.array([0.0, 2.0, 1.0])
    assert equivalence_ratios({"t": np.arange(3), "E_total": E, "L": E}) == (1.0, 1.0)
    zero = np.zeros(4)
    assert equivalence_ratios({"t": np.arange(4), "E_total": zero, "L": zero}) == (1.0, 1.0)
    lo, hi = equivalence_ratios({"t": np.arange(3), "E_total": E, "L": np.array([0, 4.0, 0.5])})
    assert (lo, hi) == (0.5, 2.0)


def test_equivalence_broken_reports_time():
    traj = {"t": np.array([0.0, 0.1, 0.2]), "E_total": np.array([1.0, 1.0, 1.0]),
            "L": np.array([1.0, -0.1, 1.0])}
    with pytest.raises(EquivalenceBroken) as info:
        equivalence_ratios(traj)
    assert info.value.t == pytest.approx(0.1)


def test_epsilons_halved_when_L_fails():
    from visco_decay.solver import _relax_lyapunov
    cols = {"E_total": np.array([1.0, 1.0]), "psi": np.array([-150.0, 0.0]),
            "phi": np.zeros(2), "I": np.zeros(2), "xi": np.ones(2)}
    used, halvings = _relax_lyapunov(cols, LyapunovConfig())
    assert halvings == 1 and used.eps1 == 0.005
    assert np.all(cols["L"] > 0)


# -- energy-rate identity ----------------------------------------------------

def test_residual_needs_every_step():
    cfg = _cfg(T=0.1, cadence=2)
    with pytest.raises(ConfigError):
        energy_rate_residual(run(cfg), cfg)


def test_residual_zero_trajectory():
    cfg = _cfg(T=0.1, cadence=1)
    _, r, sup = energy_rate_residual(run(cfg), cfg)
    assert sup == 0.0 and not r.any()


def test_residual_conservative_limit():
    cfg = SimConfig(kernel=KernelSpec.zero(), alpha=0.0, mu1=0.0, mu2=0.0, zeta=0.0,
                    grid=Grid1D(50), dt=1e-3, T=1.0, cadence=1, allow_unguaranteed=True)
    traj = run(cfg)
    _, r, sup = energy_rate_residual(traj, cfg)
    assert sup <= 1e-6 * traj["E_total"][0]
