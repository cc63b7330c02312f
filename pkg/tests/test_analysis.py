import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from visco_decay.analysis import (
    _orders,
    convergence_order,
    count_inversions,
    cross_validate_delay,
    delay_with_rate,
    feedback_series,
    fit_decay,
    integrate_xi,
    stability_sweep,
)
from visco_decay.delay import (
    BoundaryHistory,
    DelaySpec,
    ZField,
    delayed_velocity,
    tau_eval,
    z_step,
)
from visco_decay.errors import ConfigError, InconclusiveOrder, NonpositiveEnergy
from visco_decay.kernels import KernelSpec, xi_of
from visco_decay.profiles import Profile
from visco_decay.solver import Grid1D, SimConfig

EXP1 = KernelSpec.exponential(0.5, 1.0)
FAMILIES = [KernelSpec.exponential(0.5, 2.0), KernelSpec.polynomial(0.5, 2.0),
            KernelSpec.expsum([(0.1, 0.5), (0.2, 3.0)]), KernelSpec.zero()]


def test_integrate_xi_examples():
    assert integrate_xi(KernelSpec.exponential(0.5, 2.0), 0.0, 3.0) == pytest.approx(6.0)
    assert integrate_xi(KernelSpec.polynomial(0.5, 2.0), 0.0, 1.0) == pytest.approx(
        1.386294, abs=1e-6)
    for spec in FAMILIES:
        assert integrate_xi(spec, 1.3, 1.3) == 0.0


def test_integrate_xi_guard():
    with pytest.raises(ValueError):
        integrate_xi(EXP1, 2.0, 1.0)


@given(st.floats(0, 20), st.floats(0, 40))
def test_integrate_xi_matches_quadrature(t0, span):
    spec = KernelSpec.expsum([(0.1, 0.5), (0.2, 3.0), (0.05, 11.0)])
    ref, _ = quad(lambda s: xi_of(spec, s), t0, t0 + span, epsabs=1e-12, limit=200)
    assert integrate_xi(spec, t0, t0 + span) == pytest.approx(ref, rel=1e-9, abs=1e-10)


def test_integrate_xi_survives_underflow():
    spec = KernelSpec.expsum([(0.1, 5.0), (0.2, 9.0)])
    assert integrate_xi(spec, 0.0, 1000.0) == pytest.approx(5.0 * 1000 + math.log(0.3 / 0.1),
                                                            rel=1e-12)


# -- decay fits --------------------------------------------------------------

def test_fit_exact_exponential():
    t = np.linspace(0, 30, 601)
    fit = fit_decay(t, 3.0 * np.exp(-0.2 * t), EXP1, t0=0.0)
    assert fit.K == pytest.approx(3.0, rel=1e-12)
    assert fit.k == pytest.approx(0.2, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert not fit.no_decay and fit.regime == "exponential"


def test_fit_flat_energy_flags_no_decay():
    t = np.linspace(0, 30, 601)
    fit = fit_decay(t, np.full_like(t, 5.0), EXP1, t0=0.0)
    assert fit.k == 0.0 and fit.no_decay


def test_fit_errors():
    t = np.linspace(0, 30, 601)
    E = np.exp(-t)
    E[-3] = 0.0
    with pytest.raises(NonpositiveEnergy):
        fit_decay(t, E, EXP1)
    with pytest.raises(ConfigError):
        fit_decay(t[:30], np.exp(-t[:30]), EXP1)
    with pytest.raises(ConfigError):
        fit_decay(t, np.exp(-t), EXP1, window_fraction=0.0)


def test_fit_drops_samples_below_floor():
    t = np.linspace(0, 30, 601)
    E = np.exp(-2 * t)
    E[t > 15] = 1e-300
    fit = fit_decay(t, E, EXP1, t0=1.0)
    assert fit.window[1] <= 15.0 + 1e-12
    assert fit.k == pytest.approx(2.0, rel=1e-10)


@given(st.sampled_from(FAMILIES), st.floats(0.1, 100), st.floats(0.01, 3),
       st.floats(0.1, 5))
def test_fit_recovers_synthetic_envelope(spec, K0, k0, t0):
    t = np.linspace(0, 40, 801)
    keep = t >= t0
    X = integrate_xi(spec, t0, t[keep])
    E = np.ones_like(t)
    E[keep] = K0 * np.exp(-k0 * X)
    fit = fit_decay(t, E, spec, t0=t0, floor=0.0)
    assert fit.k == pytest.approx(k0, rel=1e-8)
    assert fit.K == pytest.approx(K0, rel=1e-8)


@given(st.sampled_from(FAMILIES[:3]), st.floats(0, 0.5), st.floats(0.5, 8.0),
       st.floats(0, 6.3))
def test_envelope_and_subsampling(spec, amp, omega, phase):
    t = np.linspace(0, 40, 801)
    X = np.zeros_like(t)
    X[t >= 1] = integrate_xi(spec, 1.0, t[t >= 1])
    E = 2.0 * np.exp(-0.4 * X) * (1 + amp * np.cos(omega * t + phase) ** 2)
    fit = fit_decay(t, E, spec, t0=1.0)
    w = (t >= fit.window[0]) & (t <= fit.window[1])
    Xw = integrate_xi(spec, 1.0, t[w])
    assert np.all(E[w] <= fit.K * np.exp(-fit.k * Xw) * (1 + 1e-9))
    assert 0 <= fit.r2 <= 1
    half = fit_decay(t[::2], E[::2], spec, t0=1.0)
    assert abs(half.r2 - fit.r2) <= 0.01


# -- cross validation and orders ---------------------------------------------

SMOOTH = Profile("polynomial", coefficients=(0.0, 1.0, -1.0, 1.0 / 3.0))


def test_delay_cross_validation_zero_data():
    cfg = SimConfig(grid=Grid1D(10), dt=2e-3, T=1.0, u0=Profile())
    res = cross_validate_delay(cfg)
    assert res.sup_error == 0.0 and res.refined_sup_error == 0.0 and res.ratio is None


@pytest.mark.parametrize("delay", [DelaySpec.constant(0.5), DelaySpec.sinusoid(0.5, 0.2, 1.0)])
def test_representations_agree_on_constant_signal(delay):
    c, dt = 0.7, 1e-3
    f0 = Profile("constant", value=c)
    tau, _ = tau_eval(delay, 0.0)
    hist = BoundaryHistory(dt, 2.0, f0, tau)
    hist.push(c)
    z = ZField.from_prehistory(f0, tau, 64)
    gap = 0.0
    for k in range(1, 3001):
        tau_n, dtau_n = tau_eval(delay, (k - 1) * dt)
        z = z_step(z, c, tau_n, dtau_n, dt)
        hist.push(c)
        tau1, _ = tau_eval(delay, k * dt)
        gap = max(gap, abs(z.outflow - delayed_velocity(hist, k * dt, tau1)))
    assert gap <= 1e-12


def test_feedback_series_starts_with_prehistory():
    cfg = SimConfig(grid=Grid1D(10), dt=1e-3, T=0.01,
                    f0=Profile("constant", value=0.25))
    assert feedback_series(cfg)[0] == 0.25


def test_orders_guard():
    with pytest.raises(InconclusiveOrder) as info:
        _orders([1e-3, 2e-3, 1e-4])
    assert info.value.errors == [1e-3, 2e-3, 1e-4]
    assert _orders([4e-3, 1e-3]) == pytest.approx([2.0])
    with pytest.raises(ValueError):
        convergence_order(SimConfig(), refinements=1)


def test_conservative_time_order():
    cfg = SimConfig(kernel=KernelSpec.zero(), alpha=0.0, mu1=0.0, mu2=0.0, zeta=0.0,
                    allow_unguaranteed=True, grid=Grid1D(25), dt=4e-3, T=1.0, u0=SMOOTH)
    order_time, order_space = convergence_order(cfg)
    assert 1.7 <= order_time <= 2.3


def test_demo_orders():
    cfg = SimConfig(grid=Grid1D(50), dt=1e-3, T=1.0)
    order_time, order_space = convergence_order(cfg)
    assert order_time >= 1.8
    assert order_space >= 1.8


# -- sweep -------------------------------------------------------------------

def test_delay_with_rate():
    assert delay_with_rate(0.5, 0.0) == DelaySpec.constant(0.5)
    spec = delay_with_rate(0.5, 0.3)
    assert spec.d == pytest.approx(0.3) and spec.tau_min == pytest.approx(0.25)


def test_count_inversions():
    assert count_inversions([5, 4, 3]) == 0
    assert count_inversions([5, 6, 3, 3]) == 2


def test_sweep_flags_and_completes():
    cfg = SimConfig(grid=Grid1D(16), dt=4e-3, T=6.0, cadence=5)
    pts = stability_sweep(cfg, [0.2, 1.2], [0.0, 0.2])
    assert [p.status for p in pts] == ["ok"] * 4
    assert [p.feasible for p in pts] == [True, False, True, False]
    assert all(p.k is not None for p in pts)


def test_sweep_needs_positive_mu1():
    with pytest.raises(ConfigError):
        stability_sweep(SimConfig(mu1=0.0, mu2=0.0), [0.1], [0.0])
