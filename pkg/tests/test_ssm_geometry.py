import numpy as np
import pytest

from ssmr import simulate as sim, ssm_geometry as geo, steady_states as ss
from ssmr.errors import FixedPointLostError, ResonanceError
from ssmr.models import PolynomialSystem, PolyTerm
from ssmr.poly import MonomialBasis

from systems import make_fastslow_quadratic


def fastslow_2d(cubic=0.0, mu_factor=0.0):
    """x1' = -x1, x2' = -10 x2 + (1 + mu_factor) x1^2 (+ cubic x1^3)."""
    A = np.diag([-1.0, -10.0])
    terms = [PolyTerm([0.0, 1.0 + mu_factor], [([1.0, 0.0], 2)])]
    if cubic:
        terms.append(PolyTerm([0.0, cubic], [([1.0, 0.0], 3)]))
    return PolynomialSystem(A=A, terms=terms)


def chart_ingredients(system, d=1):
    fp = ss.find_fixed_points(system, None, [np.zeros(system.dim)])[0]
    spec = ss.linearize(system, fp)
    sel = ss.select_slow_subspace(spec, d=d)
    return fp, spec, sel


def sample_trajectories(system, n=24, radius=0.5, t_end=6.0, seed=3,
                        trim_rate=-10.0, trim_factor=8.0):
    sampler = sim.BallSampler(np.zeros(system.dim), radius)
    ens = sim.generate_ensemble(system, sampler, None, 0.01, t_end, n, None,
                                0.8, master_seed=seed)
    train = [sim.trim_transient(t, trim_rate, trim_factor) for t in ens.train]
    test = [sim.trim_transient(t, trim_rate, trim_factor) for t in ens.test]
    return train, test


# --- data-driven fit --------------------------------------------------------------

def test_fit_recovers_quadratic_coefficient():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    train, test = sample_trajectories(system, trim_rate=-10.0, trim_factor=8.0)
    chart = geo.fit_ssm_data(train, fp, sel, M=2)
    sign = np.sign(sel.V_E[0, 0])
    coeff = chart.H[1, 0]  # x2-row, eta^2 column (sign-invariant under eta flip)
    assert coeff == pytest.approx(0.125, abs=1e-3)
    assert geo.mfe(chart, test) < 1e-4


def test_fit_linear_data_gives_zero_chart():
    # samples lying exactly on the spectral subspace leave nothing to fit
    system = PolynomialSystem(A=np.diag([-1.0, -10.0, -12.0]))
    fp, spec, sel = chart_ingredients(system)
    etas = np.linspace(-0.5, 0.5, 200)[:, None]
    pts = etas @ sel.V_E.T
    chart = geo.fit_ssm_data([pts], fp, sel, M=3)
    assert np.linalg.norm(chart.H) < 1e-8


# --- equation-driven fit -----------------------------------------------------------

def test_taylor_quadratic_exact():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=3)
    assert chart.H[1, 0] == pytest.approx(0.125, abs=1e-12)
    assert chart.H[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_taylor_linear_system_zero():
    system = PolynomialSystem(A=np.diag([-1.0, -7.0, -9.0]))
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=4)
    assert np.linalg.norm(chart.H) == 0.0


def test_taylor_cubic_coefficient():
    # symbolic invariance recursion gives c3 = 1/(3*1 - 10)^-1... = 1/7
    system = fastslow_2d(cubic=1.0)
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=3)
    sign = sel.V_E[0, 0]
    assert chart.H[1, 0] == pytest.approx(0.125, abs=1e-12)
    assert chart.H[1, 1] == pytest.approx(sign * (1.0 / 7.0), abs=1e-12)


def test_taylor_resonance_error():
    system = PolynomialSystem(A=np.diag([-1.0, -2.0]),
                              terms=[PolyTerm([0.0, 1.0], [([1.0, 0.0], 2)])])
    fp, spec, sel = chart_ingredients(system)
    with pytest.raises(ResonanceError):
        geo.ssm_taylor_equation_driven(system, fp, sel, M=2)


def test_taylor_vanilla_rnn_nonzero_anchor():
    # biased tanh network: anchor away from 0 gives nonzero quadratic terms,
    # and the chart must satisfy the invariance equation pointwise
    from systems import make_tanh_network

    m = make_tanh_network(N=6, seed=10, scale=0.4)
    u = np.array([0.8])
    fps = ss.find_fixed_points(m, u, [np.zeros(6)])
    fp = fps[0]
    spec = ss.linearize(m, fp)
    sel = ss.select_slow_subspace(spec, d=1)
    chart = geo.ssm_taylor_equation_driven(m, fp, sel, M=3)
    etas = np.linspace(0.01, 0.06, 6)[:, None]
    assert geo.invariance_residual(chart, m, etas, u=u) < 1e-4


# --- lift / project ----------------------------------------------------------------

def test_lift_at_zero_is_anchor():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=2)
    assert np.allclose(chart.lift([0.0]), fp.x0, atol=1e-12)


def test_project_lift_identity(rng):
    system, info = make_fastslow_quadratic(N=8, seed=5)
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=3)
    for _ in range(20):
        eta = rng.uniform(-0.5, 0.5, 1)
        back = chart.project(chart.lift(eta))
        assert np.max(np.abs(back - eta)) < 1e-12


def test_zero_chart_is_orthogonal_projection(rng):
    system = PolynomialSystem(A=np.diag([-1.0, -8.0, -9.0]))
    fp, spec, sel = chart_ingredients(system)
    basis = MonomialBasis(1, 2, 2)
    chart = geo.SsmChart(anchor=fp, V_E=sel.V_E, basis=basis,
                         H=np.zeros((3, len(basis))))
    y = rng.standard_normal(3)
    recon = chart.lift(chart.project(y))
    P = sel.V_E @ sel.V_E.T
    assert np.allclose(recon, P @ y, atol=1e-12)


def test_tangency_at_origin():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=3)
    h = 1e-7
    d_lift = (chart.lift([h]) - chart.lift([-h])) / (2 * h)
    assert np.allclose(d_lift, sel.V_E[:, 0], atol=1e-6)


# --- mfe ---------------------------------------------------------------------------

def test_mfe_zero_on_chart():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=2)
    pts = np.array([chart.lift([e]) for e in np.linspace(-0.5, 0.5, 30)])
    assert geo.mfe(chart, [pts]) < 1e-14


def test_mfe_single_point_raw():
    system = PolynomialSystem(A=np.diag([-1.0, -10.0]))
    fp, spec, sel = chart_ingredients(system)
    basis = MonomialBasis(1, 2, 2)
    chart = geo.SsmChart(anchor=fp, V_E=sel.V_E, basis=basis, H=np.zeros((2, 1)))
    delta = 0.37
    perp = np.array([0.0, delta]) if abs(sel.V_E[0, 0]) > 0.9 else np.array([delta, 0.0])
    assert geo.mfe(chart, [perp[np.newaxis, :]], normalized=False) == \
        pytest.approx(delta, abs=1e-12)


def test_mfe_monotone_under_exact_samples():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=2)
    off = np.array([[0.3, 0.3 ** 2 / 8 + 0.05]])
    base = geo.mfe(chart, [off], normalized=False)
    exact = np.array([chart.lift([e]) for e in np.linspace(-0.4, 0.4, 10)])
    combined = geo.mfe(chart, [off, exact], normalized=False)
    assert combined <= base + 1e-15


# --- data-driven vs equation-driven ------------------------------------------------

def test_route_agreement_embedded():
    system, info = make_fastslow_quadratic(N=8, seed=7)
    fp, spec, sel = chart_ingredients(system)
    chart_eq = geo.ssm_taylor_equation_driven(system, fp, sel, M=2)
    train, _ = sample_trajectories(system, n=32, t_end=7.0,
                                   trim_rate=info["slowest_ignored"],
                                   trim_factor=10.0)
    chart_dd = geo.fit_ssm_data(train, fp, sel, M=2)
    assert np.max(np.abs(chart_dd.H - chart_eq.H)) < 1e-3


def test_invariance_residual_well_fit():
    system = fastslow_2d()
    fp, spec, sel = chart_ingredients(system)
    train, _ = sample_trajectories(system, trim_rate=-10.0, trim_factor=8.0)
    chart = geo.fit_ssm_data(train, fp, sel, M=2)
    etas = np.linspace(-0.2, 0.2, 9)[:, None]
    assert geo.invariance_residual(chart, system, etas) < 1e-2


# --- extended charts ----------------------------------------------------------------

def extended_family(mu_values, mu_factor=1.0, seed=0):
    data, fps = {}, {}
    sel0 = None
    for mu in mu_values:
        system = fastslow_2d(mu_factor=mu_factor * mu)
        fp, spec, sel = chart_ingredients(system)
        train, _ = sample_trajectories(system, n=16,
                                       seed=seed + abs(int(1000 * mu)) + (mu < 0),
                                       trim_rate=-10.0, trim_factor=8.0)
        data[mu] = train
        fps[mu] = fp
        if mu == 0.0 or sel0 is None:
            sel0 = sel
    return data, fps, sel0


def exact_manifold_family(mu_values, mu_factor):
    """Exact samples of the invariant graph x2 = 0.125 (1 + mu_factor*mu) x1^2."""
    system0 = fastslow_2d()
    fp, spec, sel = chart_ingredients(system0)
    data, fps = {}, {}
    etas = np.linspace(-0.5, 0.5, 60)
    for mu in mu_values:
        c = 0.125 * (1.0 + mu_factor * mu)
        sign = sel.V_E[0, 0]
        pts = np.column_stack([sign * etas, c * etas ** 2])
        data[mu] = [pts]
        fps[mu] = fp
    return data, fps, sel


def test_extended_mu_independent():
    # five parameter values keep every mu power identifiable at M=3
    data, fps, sel = exact_manifold_family([-0.2, -0.1, 0.0, 0.1, 0.2],
                                           mu_factor=0.0)
    ext = geo.fit_extended_ssm(data, fps, sel, M=3, mu0=0.0)
    mu_cols = [k for k, e in enumerate(ext.basis.exponent_table) if e[-1] > 0]
    assert np.max(np.abs(ext.H[:, mu_cols])) < 1e-6


def test_extended_linear_mu_dependence():
    data, fps, sel = extended_family([-0.2, 0.0, 0.2], mu_factor=1.0)
    ext = geo.fit_extended_ssm(data, fps, sel, M=3, mu0=0.0)
    for mu in (-0.2, 0.0, 0.2):
        _, _, eta_basis, H_eta = ext.slice_coefficients(mu)
        assert H_eta[1, 0] == pytest.approx(0.125 * (1 + mu), abs=1e-3)


def test_extended_slice_matches_plain_chart():
    data, fps, sel = exact_manifold_family([-0.2, 0.0, 0.2], mu_factor=1.0)
    ext = geo.fit_extended_ssm(data, fps, sel, M=3, mu0=0.0)
    plain = geo.fit_ssm_data(data[0.0], fps[0.0], sel, M=3)
    _, _, eta_basis, H_eta = ext.slice_coefficients(0.0)
    assert eta_basis.exponent_table == plain.basis.exponent_table
    assert np.max(np.abs(H_eta - plain.H)) < 1e-6


def test_extended_lost_anchor_error():
    data, fps, sel = extended_family([-0.1, 0.0, 0.1], mu_factor=0.0)
    fps[0.0] = None
    with pytest.raises(FixedPointLostError, match="per-mu"):
        geo.fit_extended_ssm(data, fps, sel, M=2, mu0=0.0)


# --- files --------------------------------------------------------------------------

def test_chart_roundtrip(tmp_path):
    system, info = make_fastslow_quadratic(N=6, seed=2)
    fp, spec, sel = chart_ingredients(system)
    chart = geo.ssm_taylor_equation_driven(system, fp, sel, M=3)
    path = tmp_path / "chart.json"
    geo.save_chart(chart, path)
    back = geo.load_chart(path)
    assert np.array_equal(back.H, chart.H)
    assert np.array_equal(back.V_E, chart.V_E)
    assert back.basis.exponent_table == chart.basis.exponent_table
    eta = np.array([0.3])
    assert np.allclose(back.lift(eta), chart.lift(eta))
