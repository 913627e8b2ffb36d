import numpy as np
import pytest
from scipy.optimize import brentq

from ssmr import models, nonautonomous as na, simulate as sim, steady_states as ss
from ssmr.errors import HorizonOverflowError, ModelFormatError
from ssmr.models import InputSchedule, PolynomialSystem, PolyTerm

from systems import make_tanh_network


def grid(T=30.0, dt=0.01):
    return np.arange(0.0, T, dt)


def spec_of(system, dim):
    fp = ss.find_fixed_points(system, None, [np.zeros(dim)])[0]
    return fp, ss.linearize(system, fp)


# --- first order ------------------------------------------------------------------

def test_order1_constant_forcing_scalar():
    system = PolynomialSystem(A=[[-1.0]])
    fp, spec = spec_of(system, 1)
    t = grid()
    forcing = na.ForcingRecord(times=t, values=np.full((len(t), 1), 0.7),
                               amplitude=0.1)
    y1 = na.anchor_order1(spec, forcing)
    assert y1.values[y1.valid][-1] == pytest.approx(0.7, abs=1e-12)


def test_order1_zero_forcing():
    system = PolynomialSystem(A=np.diag([-1.0, -3.0]))
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    forcing = na.ForcingRecord(times=t, values=np.zeros((len(t), 2)))
    y1 = na.anchor_order1(spec, forcing)
    assert np.all(y1.values == 0.0)


def test_order1_exact_for_linear_system():
    # direct noisy integration of the linear system is the oracle
    rng = np.random.default_rng(3)
    N = 10
    W = 0.3 * rng.standard_normal((N, N)) / np.sqrt(N)
    A = -np.eye(N) + W
    system = PolynomialSystem(A=A)
    fp, spec = spec_of(system, N)
    dt, T = 0.01, 120.0
    eps = 0.05
    noise = sim.NoiseSpec(amplitude=eps, bound=3.0, seed=11)
    traj = sim.integrate(system, np.zeros(N), None, dt, T, noise,
                         record_noise=True)
    forcing = na.forcing_from_noise(traj, tau=1.0, amplitude=eps)
    y1 = na.anchor_order1(spec, forcing)
    sl = y1.valid
    direct = traj.states[:-1][sl]
    composite = eps * y1.values[sl]
    sup = np.max(np.linalg.norm(direct - composite, axis=1))
    assert sup < 1e-6


def test_order1_unstable_block():
    # hyperbolic saddle: bounded solution exists and solves ydot = Ay + f
    system = PolynomialSystem(A=np.diag([1.5, -2.0]))
    fp, spec = spec_of(system, 2)
    t = grid(40.0)
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((len(t), 2))
    forcing = na.ForcingRecord(times=t, values=vals)
    y1 = na.anchor_order1(spec, forcing)
    sl = y1.valid
    # residual check on interior points: (y[k+1]-y[k])/dt ~ A y + f
    dt = forcing.dt
    ys = y1.values
    for k in range(sl.start + 1, sl.stop - 2, 97):
        lhs = (ys[k + 1] - ys[k]) / dt
        # exact per-step propagation: compare against the exponential update
        expect = spec.matrix @ (0.5 * (ys[k] + ys[k + 1])) + vals[k]
        assert np.linalg.norm(lhs - expect) < 5e-2 * max(1.0, np.linalg.norm(expect))
    assert np.all(np.isfinite(ys[sl]))


def test_horizon_overflow():
    system = PolynomialSystem(A=[[-1e-3]])
    fp, spec = spec_of(system, 1)
    t = grid(10.0)
    forcing = na.ForcingRecord(times=t, values=np.ones((len(t), 1)))
    with pytest.raises(HorizonOverflowError):
        na.anchor_order1(spec, forcing)


# --- higher orders -----------------------------------------------------------------

def test_orders_vanish_for_linear_system():
    system = PolynomialSystem(A=np.diag([-1.0, -2.0]))
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    rng = np.random.default_rng(5)
    forcing = na.ForcingRecord(times=t, values=rng.standard_normal((len(t), 2)))
    exp = na.anchor_expansion(system, fp, spec, forcing, order=3)
    assert np.max(np.abs(exp.orders[1].values)) == 0.0
    assert np.max(np.abs(exp.orders[2].values)) == 0.0


def test_scalar_root_oracle():
    # y' = -y + y^2 + eps*c: composite anchor matches the constant root to O(eps^4)
    system = PolynomialSystem(A=[[-1.0]], terms=[PolyTerm([1.0], [([1.0], 2)])])
    fp, spec = spec_of(system, 1)
    t = grid(30.0)
    eps, c = 0.01, 1.0
    forcing = na.ForcingRecord(times=t, values=np.full((len(t), 1), c),
                               amplitude=eps)
    exp = na.anchor_expansion(system, fp, spec, forcing, order=3)
    composite = exp.composite()[exp.valid][-1][0]
    root = brentq(lambda y: -y + y ** 2 + eps * c, -0.5, 0.4)
    e = eps * c
    assert composite == pytest.approx(e + e ** 2 + 2 * e ** 3, abs=1e-12)
    assert abs(composite - root) < 1e-7   # O(eps^4) remainder


def test_tanh_network_composite_accuracy():
    m = make_tanh_network(N=10, seed=6, scale=0.3)
    u = np.zeros(1)
    fp = ss.find_fixed_points(m, u, [np.zeros(10)])[0]
    spec = ss.linearize(m, fp)
    eps = 0.05
    noise = sim.NoiseSpec(amplitude=eps, bound=3.0, seed=21)
    sched = InputSchedule.constant(u)
    traj = sim.integrate(m, fp.x0, sched, 0.01, 120.0, noise, record_noise=True)
    forcing = na.forcing_from_noise(traj, tau=m.tau, amplitude=eps)
    exp = na.anchor_expansion(m, fp, spec, forcing, order=3)
    sl = exp.valid
    direct = traj.states[:-1][sl] - fp.x0[np.newaxis, :]
    comp = exp.composite()[sl]
    sup = np.max(np.linalg.norm(direct - comp, axis=1))
    assert sup < 2 * eps ** 2


def test_order_consistency_halving_eps():
    # biased anchor and a stronger nonlinearity keep the quartic remainder
    # above the per-step quadrature floor, so each halving shows it cleanly
    m = make_tanh_network(N=10, seed=6, scale=0.6)
    u = np.array([0.8])
    fp = ss.find_fixed_points(m, u, [np.zeros(10)])[0]
    spec = ss.linearize(m, fp)
    sched = InputSchedule.constant(u)
    sups = []
    for eps in (0.4, 0.2, 0.1):
        noise = sim.NoiseSpec(amplitude=eps, bound=3.0, seed=33)
        traj = sim.integrate(m, fp.x0, sched, 0.005, 120.0, noise,
                             record_noise=True)
        forcing = na.forcing_from_noise(traj, tau=m.tau, amplitude=eps)
        exp = na.anchor_expansion(m, fp, spec, forcing, order=3)
        sl = exp.valid
        direct = traj.states[:-1][sl] - fp.x0[np.newaxis, :]
        sups.append(np.max(np.linalg.norm(direct - exp.composite()[sl], axis=1)))
    assert sups[0] / sups[1] >= 6.0
    assert sups[1] / sups[2] >= 6.0


def test_expansion_bounded_by_forcing_norm():
    m = make_tanh_network(N=8, seed=2, scale=0.3)
    fp = ss.find_fixed_points(m, np.zeros(1), [np.zeros(8)])[0]
    spec = ss.linearize(m, fp)
    t = grid(60.0)
    rng = np.random.default_rng(9)
    forcing = na.ForcingRecord(times=t, values=rng.uniform(-1, 1, (len(t), 8)))
    exp = na.anchor_expansion(m, fp, spec, forcing, order=3)
    f_sup = forcing.sup_norm
    for nu, term in enumerate(exp.orders, start=1):
        sup = np.max(np.linalg.norm(term.values[term.valid], axis=1))
        C = sup / f_sup ** nu
        assert np.isfinite(C) and C < 1e3


def test_kernel_decays_monotonically():
    system = PolynomialSystem(A=np.diag([-1.0, -4.0, -9.0]))
    fp, spec = spec_of(system, 3)
    ts = np.linspace(0.0, 2.0, 9)
    for k in (1, 2):
        vals = np.array([np.abs(na.kernel_gk(spec, k, t)) for t in ts])
        assert np.all(np.diff(vals, axis=0) <= 1e-14)


# --- time-dependent chart coefficients ----------------------------------------------

def quad_system():
    A = np.diag([-1.0, -10.0])
    term = PolyTerm([0.0, 1.0], [([1.0, 0.0], 2)])
    return PolynomialSystem(A=A, terms=[term])


def test_td_h20_matches_autonomous():
    system = quad_system()
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    forcing = na.ForcingRecord(times=t, values=np.zeros((len(t), 2)), amplitude=0.0)
    y1 = na.anchor_order1(spec, forcing)
    td = na.td_ssm_coeffs(system, fp, spec, forcing, y1)
    assert td.h20[0].real == pytest.approx(0.125, abs=1e-12)
    # shared code path with the order-2 invariance solve, bit for bit
    from ssmr.ssm_geometry import _field_taylor_builder, solve_invariance_eigen

    ft = _field_taylor_builder(system, fp.x0, None, 2)
    w = solve_invariance_eigen(spec.eigenvalues, spec.eigenvectors, [0], [1], ft, 2)
    assert np.array_equal(td.h20, w[(2,)])


def test_td_h11_zero_without_forcing():
    system = quad_system()
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    forcing = na.ForcingRecord(times=t, values=np.zeros((len(t), 2)), amplitude=0.0)
    y1 = na.anchor_order1(spec, forcing)
    td = na.td_ssm_coeffs(system, fp, spec, forcing, y1)
    assert np.max(np.abs(td.h11)) == 0.0


def test_td_h11_constant_forcing_oracle():
    # oracle: the slow manifold of the constant-shifted system, recomputed
    # independently; its tangent tilt at the shifted anchor equals eps*h11
    system = quad_system()
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    c = np.array([1.0, 0.5])
    eps = 1e-3
    forcing = na.ForcingRecord(times=t, values=np.tile(c, (len(t), 1)),
                               amplitude=eps)
    y1 = na.anchor_order1(spec, forcing)
    td = na.td_ssm_coeffs(system, fp, spec, forcing, y1)
    h11 = td.h11[td.valid][-1][0].real
    assert h11 == pytest.approx(2.0 * c[0] / 9.0, rel=1e-3)

    # independent oracle: equation-driven chart of the shifted system, tilt
    # extracted by fitting v(u) over the original eigen coordinates
    shifted = PolynomialSystem(A=system.A, terms=system.terms,
                               B=np.eye(2))
    from ssmr import ssm_geometry as geo

    fp_s = ss.find_fixed_points(shifted, eps * c, [np.zeros(2)])[0]
    spec_s = ss.linearize(shifted, fp_s)
    sel_s = ss.select_slow_subspace(spec_s, d=1)
    chart_s = geo.ssm_taylor_equation_driven(shifted, fp_s, sel_s, M=2)
    anchor = fp.x0 + eps * y1.values[td.valid][-1]
    us = np.linspace(-0.05, 0.05, 11)
    pts = np.array([chart_s.lift([e]) for e in us])
    rel = pts - anchor[np.newaxis, :]
    coeff = np.polyfit(rel[:, 0], rel[:, 1], 2)
    tilt = coeff[1]  # linear term of v(u) around the anchor
    assert eps * h11 == pytest.approx(tilt, rel=1e-3, abs=1e-9)


def test_td_requires_real_slowest():
    A = np.zeros((3, 3))
    A[0, 0], A[0, 1], A[1, 0], A[1, 1] = -0.5, -2.0, 2.0, -0.5
    A[2, 2] = -5.0
    system = PolynomialSystem(A=A)
    fp, spec = spec_of(system, 3)
    t = grid(60.0)
    forcing = na.ForcingRecord(times=t, values=np.zeros((len(t), 3)))
    y1 = na.anchor_order1(spec, forcing)
    with pytest.raises(ModelFormatError):
        na.td_ssm_coeffs(system, fp, spec, forcing, y1)


def test_anchor_csv(tmp_path):
    system = quad_system()
    fp, spec = spec_of(system, 2)
    t = grid(30.0)
    rng = np.random.default_rng(2)
    forcing = na.ForcingRecord(times=t, values=rng.standard_normal((len(t), 2)),
                               amplitude=0.01)
    exp = na.anchor_expansion(system, fp, spec, forcing, order=2)
    path = tmp_path / "anchor.csv"
    na.save_anchor_csv(exp, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("t,y1_1,y1_2,y2_1,y2_2")
