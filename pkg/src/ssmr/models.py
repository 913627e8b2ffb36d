"""System families: continuous-time recurrent networks and analytic test systems.

Vanilla networks evolve as  tau * dx/dt = -x + W tanh(x) + B u(t);  the gated
variant as  tau * dx/dt = -x + tanh(W x + B u + bias).  All operations return
derivatives with the 1/tau factor applied, so a single time variable (physical
time) is used throughout; with tau = 1 this coincides with the rescaled-time
formulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, ModelFormatError

VARIANTS = ("vanilla", "gated")
ACTIVATIONS = ("tanh",)


def _as_matrix(value, shape, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ModelFormatError(f"field '{name}' has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"field '{name}' contains NaN/Inf entries")
    return arr


@dataclass(frozen=True)
class RnnModel:
    """Recurrent-network vector field with exact derivatives up to third order."""

    n_units: int
    n_inputs: int
    n_outputs: int
    tau: float
    W: np.ndarray
    B: np.ndarray
    Y: np.ndarray
    variant: str = "vanilla"
    activation: str = "tanh"
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_units < 1 or self.n_inputs < 1 or self.n_outputs < 1:
            raise ModelFormatError("n_units/n_inputs/n_outputs must be positive")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ModelFormatError(f"field 'tau' must be a positive real, got {self.tau}")
        if self.variant not in VARIANTS:
            raise ModelFormatError(f"field 'variant' must be one of {VARIANTS}")
        if self.activation not in ACTIVATIONS:
            raise ModelFormatError(f"field 'activation' must be one of {ACTIVATIONS}")
        object.__setattr__(self, "W", _as_matrix(self.W, (self.n_units, self.n_units), "W"))
        object.__setattr__(self, "B", _as_matrix(self.B, (self.n_units, self.n_inputs), "B"))
        object.__setattr__(self, "Y", _as_matrix(self.Y, (self.n_outputs, self.n_units), "Y"))
        if self.bias is not None:
            object.__setattr__(self, "bias", _as_matrix(self.bias, (self.n_units,), "bias"))

    @property
    def dim(self) -> int:
        return self.n_units

    def __eq__(self, other):
        if not isinstance(other, RnnModel):
            return NotImplemented
        return (
            self.n_units == other.n_units
            and self.n_inputs == other.n_inputs
            and self.n_outputs == other.n_outputs
            and self.tau == other.tau
            and self.variant == other.variant
            and self.activation == other.activation
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.Y, other.Y)
            and (
                (self.bias is None and other.bias is None)
                or (self.bias is not None and other.bias is not None
                    and np.array_equal(self.bias, other.bias))
            )
        )


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant input: each segment's u holds from its t_start to the next."""

    segments: tuple

    def __init__(self, segments: Sequence):
        segs = tuple((float(t), np.asarray(u, dtype=float)) for t, u in segments)
        if not segs:
            raise ModelFormatError("InputSchedule needs at least one segment")
        times = [t for t, _ in segs]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ModelFormatError("segment t_start values must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    @property
    def t_start(self) -> float:
        return self.segments[0][0]

    def u_at(self, t: float) -> np.ndarray:
        u = self.segments[0][1]
        for t_seg, u_seg in self.segments:
            if t_seg <= t + 1e-12:
                u = u_seg
            else:
                break
        return u

    @classmethod
    def constant(cls, u, t_start: float = 0.0) -> "InputSchedule":
        return cls([(t_start, np.atleast_1d(np.asarray(u, dtype=float)))])


@dataclass(frozen=True)
class GenericSystem:
    """User-supplied vector field: rhs(x, t) -> dx/dt, with optional analytic Jacobian."""

    dimension: int
    rhs: Callable[[np.ndarray, float], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    @property
    def dim(self) -> int:
        return self.dimension


@dataclass(frozen=True)
class PolyTerm:
    """One polynomial term  coeff * prod_k (v_k . x)^(p_k), factors over state or input."""

    coeff: np.ndarray
    factors: tuple  # of (vector, power, "state" | "input")

    def __init__(self, coeff, factors):
        object.__setattr__(self, "coeff", np.asarray(coeff, dtype=float))
        norm = []
        for f in factors:
            if len(f) == 2:
                v, p = f
                kind = "state"
            else:
                v, p, kind = f
            if kind not in ("state", "input"):
                raise ModelFormatError(f"factor kind must be state/input, got {kind!r}")
            norm.append((np.asarray(v, dtype=float), int(p), kind))
        object.__setattr__(self, "factors", tuple(norm))


@dataclass(frozen=True)
class PolynomialSystem:
    """Analytic vector field  dx/dt = A x + B u + sum of PolyTerms, with exact derivatives.

    Terms use linear forms of the state (and optionally of the constant input),
    which keeps second/third derivative contractions exact and cheap for the
    low-rank nonlinearities used to embed low-dimensional dynamics in high
    dimensions.
    """

    A: np.ndarray
    terms: tuple = ()
    B: Optional[np.ndarray] = None
    readout_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelFormatError("field 'A' must be a square matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.B is not None:
            B = np.asarray(self.B, dtype=float)
            if B.ndim != 2 or B.shape[0] != A.shape[0]:
                raise ModelFormatError("field 'B' row count must match A")
            object.__setattr__(self, "B", B)
        if self.readout_vector is not None:
            object.__setattr__(
                self, "readout_vector",
                _as_matrix(self.readout_vector, (A.shape[0],), "readout_vector"))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return 0 if self.B is None else self.B.shape[1]


def _check_x(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(f"state has shape {x.shape}, expected ({model.dim},)")
    return x


def _check_u(model, u):
    n_in = model.n_inputs
    if u is None:
        return np.zeros(n_in)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (n_in,):
        raise DimensionMismatchError(f"input has shape {u.shape}, expected ({n_in},)")
    return u


def rhs(model, x, u=None, t: float = 0.0) -> np.ndarray:
    """Vector field dx/dt for any supported system type (no noise term)."""
    if isinstance(model, GenericSystem):
        return np.asarray(model.rhs(np.asarray(x, dtype=float), t), dtype=float)
    x = _check_x(model, x)
    if isinstance(model, PolynomialSystem):
        dx = model.A @ x
        if model.B is not None:
            dx = dx + model.B @ _check_u(model, u)
        for term in model.terms:
            dx = dx + term.coeff * _eval_term_scalar(term, x, u)
        return dx
    u = _check_u(model, u)
    if model.variant == "vanilla":
        return (-x + model.W @ np.tanh(x) + model.B @ u) / model.tau
    a = model.W @ x + model.B @ u
    if model.bias is not None:
        a = a + model.bias
    return (-x + np.tanh(a)) / model.tau


def rhs_batch(model, X, u=None, t: float = 0.0) -> np.ndarray:
    """Vectorized rhs over a batch of states X with shape (n, N)."""
    X = np.asarray(X, dtype=float)
    if isinstance(model, GenericSystem):
        return np.stack([rhs(model, row, u, t) for row in X])
    if isinstance(model, PolynomialSystem):
        dX = X @ model.A.T
        if model.B is not None:
            dX = dX + (model.B @ _check_u(model, u))[np.newaxis, :]
        for term in model.terms:
            s = np.ones(X.shape[0])
            for v, p, kind in term.factors:
                base = X @ v if kind == "state" else np.full(X.shape[0], v @ _input_vec(u))
                s = s * base ** p
            dX = dX + s[:, np.newaxis] * term.coeff[np.newaxis, :]
        return dX
    u = _check_u(model, u)
    if model.variant == "vanilla":
        return (-X + np.tanh(X) @ model.W.T + (model.B @ u)[np.newaxis, :]) / model.tau
    a = X @ model.W.T + (model.B @ u)[np.newaxis, :]
    if model.bias is not None:
        a = a + model.bias[np.newaxis, :]
    return (-X + np.tanh(a)) / model.tau


def _input_vec(u) -> np.ndarray:
    if u is None:
        raise DimensionMismatchError("this system's terms reference the input, but u is None")
    return np.atleast_1d(np.asarray(u, dtype=float))


def _eval_term_scalar(term: PolyTerm, x, u) -> float:
    s = 1.0
    for v, p, kind in term.factors:
        base = v @ x if kind == "state" else v @ _input_vec(u)
        s *= base ** p
    return s


def jacobian(model, x, u=None, t: float = 0.0) -> np.ndarray:
    """Exact state Jacobian of rhs (finite differences only for bare GenericSystem)."""
    if isinstance(model, GenericSystem):
        if model.jacobian is not None:
            return np.asarray(model.jacobian(np.asarray(x, dtype=float), t), dtype=float)
        return finite_difference_jacobian(lambda y: rhs(model, y, u, t), np.asarray(x, float))
    x = _check_x(model, x)
    if isinstance(model, PolynomialSystem):
        J = model.A.copy()
        for term in model.terms:
            state_factors = [(i, f) for i, f in enumerate(term.factors)
                             if f[2] == "state" and f[1] > 0]
            for i, (v, p, _) in state_factors:
                partial = p * (v @ x) ** (p - 1)
                for j, (w, q, kind) in enumerate(term.factors):
                    if j == i:
                        continue
                    base = w @ x if kind == "state" else w @ _input_vec(u)
                    partial *= base ** q
                J += np.outer(term.coeff, partial * v)
        return J
    u = _check_u(model, u)
    n = model.n_units
    if model.variant == "vanilla":
        sech2 = 1.0 / np.cosh(x) ** 2
        return (-np.eye(n) + model.W * sech2[np.newaxis, :]) / model.tau
    a = model.W @ x + model.B @ u
    if model.bias is not None:
        a = a + model.bias
    sech2 = 1.0 / np.cosh(a) ** 2
    return (-np.eye(n) + sech2[:, np.newaxis] * model.W) / model.tau


def derivative_tensor_2(model, x) -> np.ndarray:
    """Diagonal slice D2[i, j] = d^2 rhs_i / dx_j^2; the full tensor is zero off j=k.

    Stored as an (N, N) array since the trailing indices of the elementwise
    tanh make the Hessians diagonal.
    """
    if isinstance(model, PolynomialSystem):
        raise NotImplementedError("use polynomial_tensor_2 for PolynomialSystem")
    if not isinstance(model, RnnModel) or model.variant != "vanilla":
        raise ModelFormatError("derivative_tensor_2 supports the vanilla variant only")
    x = _check_x(model, x)
    d2 = -2.0 * np.sinh(x) / np.cosh(x) ** 3
    return model.W * d2[np.newaxis, :] / model.tau


def derivative_tensor_3(model, x) -> np.ndarray:
    """Diagonal slice D3[i, j] = d^3 rhs_i / dx_j^3 of the order-4 tensor."""
    if isinstance(model, PolynomialSystem):
        raise NotImplementedError("use polynomial_tensor_3 for PolynomialSystem")
    if not isinstance(model, RnnModel) or model.variant != "vanilla":
        raise ModelFormatError("derivative_tensor_3 supports the vanilla variant only")
    x = _check_x(model, x)
    d3 = (4.0 * np.sinh(x) ** 2 - 2.0) / np.cosh(x) ** 4
    return model.W * d3[np.newaxis, :] / model.tau


def contract_tensor_2(model, x, v, w, u=None) -> np.ndarray:
    """Bilinear form  d2 rhs(x)[v, w]  (exact for vanilla RNNs and polynomial systems)."""
    if isinstance(model, PolynomialSystem):
        return _poly_bilinear(model, x, v, w, u)
    D2 = derivative_tensor_2(model, x)
    return D2 @ (np.asarray(v) * np.asarray(w))


def contract_tensor_3(model, x, v, w, z, u=None) -> np.ndarray:
    """Trilinear form  d3 rhs(x)[v, w, z]."""
    if isinstance(model, PolynomialSystem):
        return _poly_trilinear(model, x, v, w, z, u)
    D3 = derivative_tensor_3(model, x)
    return D3 @ (np.asarray(v) * np.asarray(w) * np.asarray(z))


def _poly_directional(model, x, dirs, u):
    """Exact k-th directional derivative of a PolynomialSystem's nonlinearity.

    Differentiates each term symbolically over all assignments of the k
    directions to its state factors (product rule on powers of linear forms).
    """
    x = _check_x(model, x)
    k = len(dirs)
    out = np.zeros(model.dim)
    for term in model.terms:
        vals, vdots = [], []
        for v, p, kind in term.factors:
            if kind == "input":
                base = v @ _input_vec(u)
                vals.append((base, p, None))
            else:
                vals.append((v @ x, p, [v @ np.asarray(d) for d in dirs]))
        # distribute the k derivative slots over the state factors
        n_f = len(vals)
        total = 0.0
        for assign in _assignments(k, n_f):
            prod = 1.0
            ok = True
            for idx, (base, p, dd) in enumerate(vals):
                m = assign.count(idx)
                if m == 0:
                    prod *= base ** p
                    continue
                if dd is None or m > p:
                    ok = False
                    break
                # falling factorial p(p-1)...(p-m+1) * base^(p-m) * prod of v.dir
                c = 1.0
                for r in range(m):
                    c *= (p - r)
                prod *= c * base ** (p - m)
                for slot, fidx in enumerate(assign):
                    if fidx == idx:
                        prod *= dd[slot]
            if ok:
                total += prod
        out += term.coeff * total
    return out


def _assignments(k, n_f):
    """All ways to assign each of k derivative slots to one of n_f factors."""
    if k == 0:
        return [()]
    smaller = _assignments(k - 1, n_f)
    return [a + (i,) for a in smaller for i in range(n_f)]


def _poly_bilinear(model, x, v, w, u):
    return _poly_directional(model, x, [v, w], u)


def _poly_trilinear(model, x, v, w, z, u):
    return _poly_directional(model, x, [v, w, z], u)


def readout(model: RnnModel, x, linear: bool = False) -> np.ndarray:
    """Readout z = Y tanh(x) (or Y x when linear=True, the alternate convention)."""
    if isinstance(model, PolynomialSystem):
        vec = model.readout_vector
        x = _check_x(model, x)
        return np.array([x[0]]) if vec is None else np.array([vec @ x])
    x = _check_x(model, x)
    return model.Y @ (x if linear else np.tanh(x))


def finite_difference_jacobian(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, used as the oracle against analytic Jacobians."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(f(x))
    J = np.empty((f0.size, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return J


# ---------------------------------------------------------------------------
# Model file I/O.  A model file is a single JSON document; matrices are
# row-major nested arrays of finite doubles.  The "kind" field defaults to
# "rnn" (the interchange contract); "polynomial" files carry analytic systems.
# ---------------------------------------------------------------------------

_RNN_REQUIRED = ("n_units", "n_inputs", "n_outputs", "tau", "variant", "activation",
                 "W", "B", "Y")


def save_model(model, path) -> None:
    if isinstance(model, RnnModel):
        doc = {
            "kind": "rnn",
            "n_units": model.n_units,
            "n_inputs": model.n_inputs,
            "n_outputs": model.n_outputs,
            "tau": model.tau,
            "variant": model.variant,
            "activation": model.activation,
            "W": model.W.tolist(),
            "B": model.B.tolist(),
            "Y": model.Y.tolist(),
        }
        if model.bias is not None:
            doc["bias"] = model.bias.tolist()
    elif isinstance(model, PolynomialSystem):
        doc = {
            "kind": "polynomial",
            "A": model.A.tolist(),
            "terms": [
                {
                    "coeff": t.coeff.tolist(),
                    "factors": [
                        {"vector": v.tolist(), "power": p, "of": kind}
                        for v, p, kind in t.factors
                    ],
                }
                for t in model.terms
            ],
        }
        if model.B is not None:
            doc["B"] = model.B.tolist()
        if model.readout_vector is not None:
            doc["readout_vector"] = model.readout_vector.tolist()
    else:
        raise ModelFormatError(f"cannot serialize model of type {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Load a model file; round-trips save_model bit-exactly for finite entries."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must contain a JSON object")
    kind = doc.get("kind", "rnn")
    if kind == "rnn":
        missing = [k for k in _RNN_REQUIRED if k not in doc]
        if missing:
            raise ModelFormatError(f"missing field(s): {', '.join(missing)}")
        return RnnModel(
            n_units=int(doc["n_units"]),
            n_inputs=int(doc["n_inputs"]),
            n_outputs=int(doc["n_outputs"]),
            tau=float(doc["tau"]),
            W=doc["W"],
            B=doc["B"],
            Y=doc["Y"],
            variant=doc["variant"],
            activation=doc["activation"],
            bias=doc.get("bias"),
        )
    if kind == "polynomial":
        if "A" not in doc:
            raise ModelFormatError("missing field(s): A")
        terms = [
            PolyTerm(t["coeff"],
                     [(f["vector"], f["power"], f.get("of", "state"))
                      for f in t.get("factors", [])])
            for t in doc.get("terms", [])
        ]
        return PolynomialSystem(A=doc["A"], terms=terms, B=doc.get("B"),
                                readout_vector=doc.get("readout_vector"))
    raise ModelFormatError(f"unknown model kind {kind!r}")
