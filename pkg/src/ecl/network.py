"""Tanh multilayer perceptron with exact derivative engines.

The network family is fixed: ``input_dim`` coordinates feed ``hidden_layers``
tanh layers of ``hidden_width`` neurons each, followed by a single linear
output.  All parameters live in one flat float64 vector with a canonical
layout (layer by layer: weight matrix in row-major order, then the bias
vector), so diagnostics can address per-layer and per-neuron slices by index
arithmetic alone.

Derivatives are analytic, not finite-difference and not from an autodiff
framework.  A forward pass propagates, per input coordinate, the triple
(value, first derivative, second derivative) through every layer using
tanh' = 1 - tanh^2 and tanh'' = -2 tanh (1 - tanh^2); a matching reverse
pass accumulates the gradient of scalar objectives built from those outputs
with respect to every parameter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

PARAMS_MAGIC = b"ECL1"


class DivergenceError(RuntimeError):
    """Raised when a loss or its gradient stops being finite."""


@dataclass(frozen=True)
class MLPConfig:
    """Architecture of the fixed tanh MLP family.

    The activation is always tanh and the output is always a single scalar;
    only the input dimension and the hidden geometry vary.
    """

    input_dim: int
    hidden_layers: int = 8
    hidden_width: int = 20

    def __post_init__(self):
        if self.input_dim not in (1, 2):
            raise ValueError(f"input_dim must be 1 or 2, got {self.input_dim}")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) for every affine layer, input to output."""
        dims = [(self.input_dim, self.hidden_width)]
        dims += [(self.hidden_width, self.hidden_width)] * (self.hidden_layers - 1)
        dims.append((self.hidden_width, 1))
        return dims

    @property
    def parameter_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


@dataclass(frozen=True)
class FieldEvaluation:
    """Network output and its exact input derivatives at one point."""

    value: float
    gradient: np.ndarray
    laplacian: float


@dataclass(frozen=True)
class FieldBatch:
    """Batched network outputs; derivative arrays are None for value-only passes."""

    values: np.ndarray
    gradients: np.ndarray | None
    laplacians: np.ndarray | None


@dataclass(frozen=True)
class LossGradient:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class ObjectiveTerm:
    """One additive piece of a batch objective.

    ``evaluate`` maps the network outputs at ``points`` to the term's scalar
    value plus the cotangents (partial derivatives of that value with respect
    to each output array), as a tuple ``(u_bar, grad_bar, lap_bar)``.  Terms
    with ``needs_derivatives=False`` receive a FieldBatch whose gradients and
    laplacians are None and must return None for the matching cotangents.
    """

    points: np.ndarray
    evaluate: Callable[[FieldBatch], tuple[float, tuple]]
    needs_derivatives: bool = False


@dataclass(frozen=True)
class BatchObjective:
    """A scalar objective: a constant plus a sum of point-batch terms."""

    terms: tuple[ObjectiveTerm, ...] = ()
    constant: float = 0.0


def _flat(a: np.ndarray) -> np.ndarray:
    n, d, k = a.shape
    return a.reshape(n * d, k)


def _mm3(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply ``x -> x @ w.T`` to the trailing axis of a (n, d, k) array."""
    n, d, k = a.shape
    return (a.reshape(n * d, k) @ w.T).reshape(n, d, w.shape[0])


def _mm3_t(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply ``x -> x @ w`` to the trailing axis of a (n, d, k) array."""
    n, d, k = a.shape
    return (a.reshape(n * d, k) @ w).reshape(n, d, w.shape[1])


class FieldNetwork:
    """The MLP plus its differentiation engine for a fixed architecture.

    Every method is a pure function of its arguments; parameter vectors are
    treated as read-only, so one network object may be shared across threads.
    """

    def __init__(self, config: MLPConfig):
        self.config = config
        self.n_params = config.parameter_count
        self._dims = config.layer_dims
        self._wslices: list[slice] = []
        self._bslices: list[slice] = []
        offset = 0
        for fi, fo in self._dims:
            self._wslices.append(slice(offset, offset + fi * fo))
            offset += fi * fo
            self._bslices.append(slice(offset, offset + fo))
            offset += fo
        assert offset == self.n_params

    # ------------------------------------------------------------------
    # parameter handling

    def init_params(self, seed: int) -> np.ndarray:
        """Glorot-uniform weights, zero biases, deterministic for a seed.

        Per layer the weights are drawn i.i.d. from
        U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), in layout
        order, from a single PCG64 stream.
        """
        rng = np.random.default_rng(seed)
        params = np.zeros(self.n_params)
        for (fi, fo), wsl in zip(self._dims, self._wslices):
            limit = np.sqrt(6.0 / (fi + fo))
            params[wsl] = rng.uniform(-limit, limit, size=fi * fo)
        return params

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of (weight matrix, bias vector) per layer; no copies."""
        params = self._check_params(params)
        return [
            (params[wsl].reshape(fo, fi), params[bsl])
            for (fi, fo), wsl, bsl in zip(self._dims, self._wslices, self._bslices)
        ]

    def layer_weight_slices(self) -> list[slice]:
        """Flat-vector slice of each layer's weight matrix (biases excluded)."""
        return list(self._wslices)

    def neuron_slices(self) -> list[np.ndarray]:
        """Index array per neuron: its incoming weight row plus its bias.

        Slices partition the parameter vector; the granularity used for
        filter-style direction normalization.
        """
        out = []
        for (fi, fo), wsl, bsl in zip(self._dims, self._wslices, self._bslices):
            for k in range(fo):
                row = np.arange(wsl.start + k * fi, wsl.start + (k + 1) * fi)
                out.append(np.append(row, bsl.start + k))
        return out

    def _check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(
                f"parameter vector has shape {params.shape}, "
                f"expected ({self.n_params},)"
            )
        return params

    def _check_points(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.config.input_dim == 1 else X[None, :]
        if X.ndim != 2 or X.shape[1] != self.config.input_dim:
            raise ValueError(
                f"points have shape {np.shape(x)}, expected (n, {self.config.input_dim})"
            )
        return X

    # ------------------------------------------------------------------
    # value pass

    def _value_forward(self, layers, X):
        h = X
        tape = []
        for W, b in layers[:-1]:
            t = np.tanh(h @ W.T + b)
            tape.append((h, t))
            h = t
        W, b = layers[-1]
        tape.append((h, None))
        return (h @ W.T + b)[:, 0], tape

    def _value_backward(self, layers, tape, u_bar):
        grads = [None] * len(layers)
        W, _ = layers[-1]
        h_last = tape[-1][0]
        grads[-1] = ((h_last.T @ u_bar)[None, :], np.array([u_bar.sum()]))
        h_bar = u_bar[:, None] * W
        for l in range(len(layers) - 2, -1, -1):
            W, _ = layers[l]
            h_in, t = tape[l]
            a_bar = (1.0 - t * t) * h_bar
            grads[l] = (a_bar.T @ h_in, a_bar.sum(axis=0))
            h_bar = a_bar @ W
        return self._pack_grads(grads)

    # ------------------------------------------------------------------
    # field pass: value + input gradient + laplacian

    def _field_forward(self, layers, X):
        n, d = X.shape
        h = X
        J = np.tile(np.eye(d), (n, 1, 1))     # J[n, i, :] = d h / d x_i
        S = np.zeros((n, d, d))               # S[n, i, :] = d^2 h / d x_i^2
        tape = []
        for W, b in layers[:-1]:
            a = h @ W.T + b
            p = _mm3(J, W)
            q = _mm3(S, W)
            t = np.tanh(a)
            d1 = 1.0 - t * t
            d2 = -2.0 * t * d1
            tape.append((h, J, S, t, d1, d2, p, q))
            h = t
            J = d1[:, None, :] * p
            S = d2[:, None, :] * (p * p) + d1[:, None, :] * q
        W, b = layers[-1]
        tape.append((h, J, S))
        u = (h @ W.T + b)[:, 0]
        g = _mm3(J, W)[:, :, 0]
        lap = _mm3(S, W)[:, :, 0].sum(axis=1)
        return u, g, lap, tape

    def _field_backward(self, layers, tape, u_bar, g_bar, lap_bar):
        grads = [None] * len(layers)
        W_out, _ = layers[-1]
        w = W_out[0]
        h_L, J_L, S_L = tape[-1]
        n, d = J_L.shape[:2]

        gW = h_L.T @ u_bar
        gW += np.einsum("nij,ni->j", J_L, g_bar)
        gW += np.einsum("nij,n->j", S_L, lap_bar)
        grads[-1] = (gW[None, :], np.array([u_bar.sum()]))

        h_bar = u_bar[:, None] * w
        J_bar = g_bar[:, :, None] * w
        S_bar = np.broadcast_to(
            (lap_bar[:, None] * w)[:, None, :], (n, d, w.shape[0])
        )

        for l in range(len(layers) - 2, -1, -1):
            W, _ = layers[l]
            h_in, J_in, S_in, t, d1, d2, p, q = tape[l]

            d2_bar = (p * p * S_bar).sum(axis=1)
            d1_bar = (q * S_bar).sum(axis=1) + (p * J_bar).sum(axis=1) - 2.0 * t * d2_bar
            t_bar = h_bar - 2.0 * d1 * d2_bar - 2.0 * t * d1_bar
            a_bar = d1 * t_bar
            p_bar = 2.0 * (d2[:, None, :] * p) * S_bar + d1[:, None, :] * J_bar
            q_bar = d1[:, None, :] * S_bar

            gW = a_bar.T @ h_in
            gW += _flat(p_bar).T @ _flat(J_in)
            gW += _flat(q_bar).T @ _flat(S_in)
            grads[l] = (gW, a_bar.sum(axis=0))

            h_bar = a_bar @ W
            J_bar = _mm3_t(p_bar, W)
            S_bar = _mm3_t(q_bar, W)
        return self._pack_grads(grads)

    def _pack_grads(self, grads) -> np.ndarray:
        out = np.empty(self.n_params)
        for (gW, gb), wsl, bsl in zip(grads, self._wslices, self._bslices):
            out[wsl] = gW.ravel()
            out[bsl] = gb
        return out

    # ------------------------------------------------------------------
    # public evaluation API

    def forward_batch(self, params, X) -> np.ndarray:
        layers = self.unpack(params)
        u, _ = self._value_forward(layers, self._check_points(X))
        return u

    def forward(self, params, x) -> float:
        """u_theta at a single point."""
        return float(self.forward_batch(params, np.atleast_1d(x))[0])

    def evaluate_field_batch(self, params, X) -> FieldBatch:
        layers = self.unpack(params)
        u, g, lap, _ = self._field_forward(layers, self._check_points(X))
        return FieldBatch(values=u, gradients=g, laplacians=lap)

    def evaluate_field(self, params, x) -> FieldEvaluation:
        """Value, input gradient, and laplacian at a single point."""
        batch = self.evaluate_field_batch(params, np.atleast_1d(x))
        return FieldEvaluation(
            value=float(batch.values[0]),
            gradient=batch.gradients[0].copy(),
            laplacian=float(batch.laplacians[0]),
        )

    # ------------------------------------------------------------------
    # objectives

    def objective_value(self, params, objective: BatchObjective) -> float:
        """Objective value only (no gradient); raises DivergenceError if non-finite."""
        total, _ = self._objective_terms(params, objective, with_grad=False)[:2]
        return total

    def objective_value_terms(
        self, params, objective: BatchObjective
    ) -> tuple[float, tuple[float, ...]]:
        """Objective value plus each term's own value, without a gradient pass."""
        total, parts, _ = self._objective_terms(params, objective, with_grad=False)
        return total, parts

    def loss_gradient(self, params, objective: BatchObjective) -> LossGradient:
        """Exact parameter gradient of a batch objective.

        Gradient paths run through the value, the input gradient, and the
        laplacian outputs of every term, so the three loss formulations are
        all covered by this one entry point.
        """
        value, _, grad = self._objective_terms(params, objective, with_grad=True)
        return LossGradient(value=value, grad=grad)

    def loss_gradient_terms(
        self, params, objective: BatchObjective
    ) -> tuple[LossGradient, tuple[float, ...]]:
        """Like loss_gradient, but also reports each term's own value."""
        value, parts, grad = self._objective_terms(params, objective, with_grad=True)
        return LossGradient(value=value, grad=grad), parts

    def _objective_terms(self, params, objective, with_grad):
        layers = self.unpack(params)
        total = float(objective.constant)
        parts = []
        grad = np.zeros(self.n_params) if with_grad else None
        for term in objective.terms:
            X = self._check_points(term.points)
            if term.needs_derivatives:
                u, g, lap, tape = self._field_forward(layers, X)
                value, (u_bar, g_bar, lap_bar) = term.evaluate(FieldBatch(u, g, lap))
                if with_grad:
                    zeros = lambda shape: np.zeros(shape)
                    u_bar = zeros(u.shape) if u_bar is None else np.asarray(u_bar)
                    g_bar = zeros(g.shape) if g_bar is None else np.asarray(g_bar)
                    lap_bar = zeros(lap.shape) if lap_bar is None else np.asarray(lap_bar)
                    grad += self._field_backward(layers, tape, u_bar, g_bar, lap_bar)
            else:
                u, tape = self._value_forward(layers, X)
                value, (u_bar, g_bar, lap_bar) = term.evaluate(FieldBatch(u, None, None))
                if g_bar is not None or lap_bar is not None:
                    raise ValueError(
                        "value-only term returned derivative cotangents; "
                        "set needs_derivatives=True"
                    )
                if with_grad:
                    u_bar = np.zeros(u.shape) if u_bar is None else np.asarray(u_bar)
                    grad += self._value_backward(layers, tape, u_bar)
            total += float(value)
            parts.append(float(value))
        if not np.isfinite(total):
            raise DivergenceError(f"objective evaluated to {total}")
        if with_grad and not np.all(np.isfinite(grad)):
            raise DivergenceError("objective gradient contains non-finite entries")
        return total, tuple(parts), grad


# ----------------------------------------------------------------------
# serialization

def save_params(path, config: MLPConfig, params: Sequence[float]) -> None:
    """Binary dump: 16-byte header (magic + architecture) then float64 LE values."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (config.parameter_count,):
        raise ValueError("parameter vector does not match the configuration")
    header = struct.pack(
        "<4sIII", PARAMS_MAGIC, config.input_dim, config.hidden_layers, config.hidden_width
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.astype("<f8").tobytes())


def load_params(path) -> tuple[MLPConfig, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated parameter file")
    magic, input_dim, hidden_layers, hidden_width = struct.unpack("<4sIII", raw[:16])
    if magic != PARAMS_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {PARAMS_MAGIC!r}")
    config = MLPConfig(
        input_dim=int(input_dim),
        hidden_layers=int(hidden_layers),
        hidden_width=int(hidden_width),
    )
    params = np.frombuffer(raw[16:], dtype="<f8").astype(np.float64)
    if params.shape != (config.parameter_count,):
        raise ValueError(
            f"{path}: {params.size} values for an architecture needing "
            f"{config.parameter_count}"
        )
    return config, params


def save_params_csv(path, params: Sequence[float]) -> None:
    """Plain text export, one value per line."""
    with open(path, "w") as fh:
        for v in np.asarray(params, dtype=np.float64):
            fh.write(repr(float(v)) + "\n")


def load_params_csv(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=1)
