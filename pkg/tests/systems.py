"""Constructed benchmark systems with known reduced dynamics.

Each builder embeds an analytic low-dimensional field in a higher-dimensional
state space: slow block + random fast stable directions, conjugated by a
random orthogonal matrix.  The returned info dict carries the internal
directions needed to read coefficients back out.
"""

import numpy as np

from ssmr.models import PolynomialSystem, PolyTerm


def _rotation(N, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    return Q


def make_fastslow_quadratic(N=50, seed=0, fast_range=(-20.0, -5.0), cubic=0.0):
    """x1' = -x1,  x2' = -10 x2 + x1^2 (+ cubic x1^3), rest fast stable; rotated.

    Slow manifold: x2 = x1^2/8 (+ x1^3/7 when cubic=1).
    """
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[-1.0, -10.0], rng.uniform(*fast_range, N - 2)])
    Q = _rotation(N, rng)
    A = Q @ np.diag(lam) @ Q.T
    terms = [PolyTerm(coeff=Q[:, 1], factors=[(Q[:, 0], 2)])]
    if cubic:
        terms.append(PolyTerm(coeff=cubic * Q[:, 1], factors=[(Q[:, 0], 3)]))
    system = PolynomialSystem(A=A, terms=terms, readout_vector=Q[:, 0])
    return system, {"Q": Q, "slow": Q[:, 0], "fast_driven": Q[:, 1],
                    "eigenvalues": lam, "slowest_ignored": float(np.max(lam[1:]))}


def make_bistable(N=50, seed=0, fast_range=(-20.0, -5.0)):
    """eta' = mu + eta - eta^3 on the slow direction (mu through the input)."""
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[1.0], rng.uniform(*fast_range, N - 1)])
    Q = _rotation(N, rng)
    A = Q @ np.diag(lam) @ Q.T
    q1 = Q[:, 0]
    terms = [PolyTerm(coeff=-q1, factors=[(q1, 3)])]
    system = PolynomialSystem(A=A, terms=terms, B=q1[:, np.newaxis],
                              readout_vector=q1)
    return system, {"Q": Q, "slow": q1, "eigenvalues": lam,
                    "slowest_ignored": float(np.max(lam[1:]))}


def make_hopf(N=50, seed=0, attract=1.0, fast_range=(-20.0, -5.0),
              curvature=1.0):
    """Input-tuned oscillator: the scalar input u is the target frequency.

    Slow block (s1, s2):  s1' = a s1 - 2 pi u s2 - a s1 r^2,
                          s2' = a s2 + 2 pi u s1 - a s2 r^2,  r^2 = s1^2+s2^2.
    The limit cycle is the unit circle traversed at frequency u.  A quadratic
    drive into one fast coordinate bends the manifold when curvature != 0.
    """
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[attract, attract], rng.uniform(*fast_range, N - 2)])
    Q = _rotation(N, rng)
    A = Q @ np.diag(lam) @ Q.T
    q1, q2 = Q[:, 0], Q[:, 1]
    a = attract
    two_pi = 2.0 * np.pi
    e_u = np.array([1.0])
    terms = [
        PolyTerm(coeff=-two_pi * q1, factors=[(e_u, 1, "input"), (q2, 1, "state")]),
        PolyTerm(coeff=two_pi * q2, factors=[(e_u, 1, "input"), (q1, 1, "state")]),
        PolyTerm(coeff=-a * q1, factors=[(q1, 3)]),
        PolyTerm(coeff=-a * q1, factors=[(q1, 1), (q2, 2)]),
        PolyTerm(coeff=-a * q2, factors=[(q2, 3)]),
        PolyTerm(coeff=-a * q2, factors=[(q2, 1), (q1, 2)]),
    ]
    if curvature:
        terms.append(PolyTerm(coeff=curvature * Q[:, 2], factors=[(q1, 2)]))
    system = PolynomialSystem(A=A, terms=terms, readout_vector=q1)
    return system, {"Q": Q, "slow": np.column_stack([q1, q2]),
                    "eigenvalues": lam,
                    "slowest_ignored": float(np.max(lam[2:]))}


def make_ring(N=50, seed=0, fast_range=(-20.0, -5.0), curvature=1.0):
    """Heteroclinic ring on the unit circle of the slow plane.

    Slow block:  s1' = s1 (1 - r^2) + s2^2,   s2' = s2 (1 - r^2) - s1 s2.
    Saddle at (-1, 0), sink at (1, 0), source at the origin; the two arcs of
    the unit circle connect saddle to sink.
    """
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[1.0, 1.0], rng.uniform(*fast_range, N - 2)])
    Q = _rotation(N, rng)
    A = Q @ np.diag(lam) @ Q.T
    q1, q2 = Q[:, 0], Q[:, 1]
    terms = [
        PolyTerm(coeff=-q1, factors=[(q1, 3)]),
        PolyTerm(coeff=-q1, factors=[(q1, 1), (q2, 2)]),
        PolyTerm(coeff=q1, factors=[(q2, 2)]),
        PolyTerm(coeff=-q2, factors=[(q2, 3)]),
        PolyTerm(coeff=-q2, factors=[(q2, 1), (q1, 2)]),
        PolyTerm(coeff=-q2, factors=[(q1, 1), (q2, 1)]),
    ]
    if curvature:
        terms.append(PolyTerm(coeff=curvature * Q[:, 2], factors=[(q1, 2)]))
    system = PolynomialSystem(A=A, terms=terms, readout_vector=q1)
    return system, {"Q": Q, "slow": np.column_stack([q1, q2]),
                    "eigenvalues": lam,
                    "slowest_ignored": float(np.max(lam[2:]))}


def make_saddle_node(N=50, seed=0, fast_range=(-10.0, -1.0)):
    """x1' = mu + x1^2 on the slow direction, fast stable rest; rotated."""
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[0.0], rng.uniform(*fast_range, N - 1)])
    Q = _rotation(N, rng)
    A = Q @ np.diag(lam) @ Q.T
    q1 = Q[:, 0]
    terms = [PolyTerm(coeff=q1, factors=[(q1, 2)])]
    system = PolynomialSystem(A=A, terms=terms, B=q1[:, np.newaxis],
                              readout_vector=q1)
    return system, {"Q": Q, "slow": q1, "eigenvalues": lam,
                    "fast_max": float(np.max(lam[1:]))}


def measure_frequency(signal, times, settle_fraction=0.4):
    """Oscillation frequency from mean-level upward crossings (linear interp)."""
    n0 = int(settle_fraction * len(signal))
    s = np.asarray(signal[n0:], dtype=float)
    t = np.asarray(times[n0:], dtype=float)
    s = s - np.mean(s)
    crossings = []
    for i in range(len(s) - 1):
        if s[i] < 0 <= s[i + 1]:
            frac = -s[i] / (s[i + 1] - s[i])
            crossings.append(t[i] + frac * (t[i + 1] - t[i]))
    if len(crossings) < 3:
        raise ValueError("too few oscillations to measure a frequency")
    periods = np.diff(crossings)
    return 1.0 / float(np.mean(periods))


def make_tanh_network(N=10, seed=0, scale=0.3, n_inputs=1, n_outputs=1, tau=1.0):
    """Random stable vanilla network: origin is a fixed point for u = 0."""
    from ssmr.models import RnnModel

    rng = np.random.default_rng(seed)
    W = scale * rng.standard_normal((N, N)) / np.sqrt(N)
    B = rng.standard_normal((N, n_inputs)) / np.sqrt(N)
    Y = rng.standard_normal((n_outputs, N)) / np.sqrt(N)
    return RnnModel(n_units=N, n_inputs=n_inputs, n_outputs=n_outputs, tau=tau,
                    W=W, B=B, Y=Y)
