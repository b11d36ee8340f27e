"""Objectives, optimizer, scheduler, and the epoch loop.

Three objective formulations share one gradient engine:

* supervised -- mean-squared mismatch against the exact solution in the
  domain plus on the boundary (no derivative terms);
* pinn -- mean-squared PDE residual in the domain plus the boundary MSE,
  aggregated as soft penalties;
* pecann -- the residual sum constrained by the boundary conditions, relaxed
  with an augmented Lagrangian: L = sum r^2 + lambda.C + (mu/2) sum C, where
  C_j = (g_j - u_j)^2 and the multipliers follow lambda <- lambda + mu C.

Note the pecann domain term is an unnormalized sum, and its penalty uses the
squared norm of the raw mismatch vector (equivalently sum C_j), which makes
the lambda=0, mu=2/N_boundary case collapse to the pinn objective exactly
once the domain term is divided by N_domain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .network import (
    BatchObjective,
    DivergenceError,
    FieldNetwork,
    LossGradient,
    MLPConfig,
    ObjectiveTerm,
)
from .problems import Problem, SampleBatch, batch_from_rng

__all__ = [
    "ObjectiveKind",
    "AdamState",
    "PlateauScheduler",
    "AlmState",
    "TrainConfig",
    "TrainRecord",
    "TrainResult",
    "build_objective",
    "loss_value",
    "supervised_loss",
    "pinn_loss",
    "pecann_loss",
    "adam_step",
    "scheduler_step",
    "alm_update",
    "train",
]


class ObjectiveKind(str, Enum):
    SUPERVISED = "supervised"
    PINN = "pinn"
    PECANN = "pecann"


# ----------------------------------------------------------------------
# optimizer / scheduler / multiplier state

@dataclass(frozen=True)
class AdamState:
    """Adam moments plus the current learning rate; updates are functional."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def init(cls, n_params: int, lr: float = 1e-2, beta1: float = 0.9,
             beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0, lr=lr,
                   beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray
              ) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; raises DivergenceError on non-finite grads."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ValueError("gradient and parameter shapes disagree")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient passed to adam_step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, m=m, v=v, t=t)


@dataclass(frozen=True)
class PlateauScheduler:
    """Reduce-on-plateau: multiply lr by ``factor`` after ``patience`` stalled epochs.

    An epoch counts as improvement when its loss drops below
    best * (1 - threshold); the lr never increases and never falls below
    ``min_lr``.
    """

    lr: float = 1e-2
    patience: int = 100
    factor: float = 0.90
    threshold: float = 1e-4
    # floor = lr0/100: a noisy or briefly-flat loss can rack up enough
    # consecutive stalls to anneal lr into the 1e-6 range long before the
    # model converges, after which training is effectively frozen
    min_lr: float = 1e-4
    best: float = np.inf
    stall_count: int = 0


def scheduler_step(s: PlateauScheduler, epoch_loss: float) -> PlateauScheduler:
    if not np.isfinite(epoch_loss):
        raise ValueError("scheduler_step expects a finite loss")
    if epoch_loss < s.best * (1.0 - s.threshold):
        return replace(s, best=float(epoch_loss), stall_count=0)
    stall = s.stall_count + 1
    if stall > s.patience:
        return replace(s, lr=max(s.lr * s.factor, s.min_lr), stall_count=0)
    return replace(s, stall_count=stall)


@dataclass(frozen=True)
class AlmState:
    """Lagrange multipliers and the safeguarded penalty of the pecann objective."""

    lam: np.ndarray
    mu: float = 1.0
    mu_max: float = 500.0
    growth: float = 2.0
    prev_mean_constraint: float | None = None

    def __post_init__(self):
        if not (0.0 < self.mu <= self.mu_max):
            raise ValueError("penalty must satisfy 0 < mu <= mu_max")

    @classmethod
    def init(cls, n_boundary: int, mu0: float = 1.0, growth: float = 2.0,
             mu_max: float = 500.0) -> "AlmState":
        return cls(lam=np.zeros(n_boundary), mu=mu0, mu_max=mu_max, growth=growth)


def alm_update(alm: AlmState, constraints: np.ndarray) -> AlmState:
    """Multiplier ascent lambda += mu*C, then grow mu unless C shrank 4x.

    Constraints are squared boundary mismatches, so every multiplier is
    nondecreasing.  The penalty doubles whenever the mean violation failed to
    drop below a quarter of its value at the previous update, clamped at
    mu_max.
    """
    C = np.asarray(constraints, dtype=np.float64)
    if C.shape != alm.lam.shape:
        raise ValueError("constraint vector length does not match multipliers")
    if np.any(C < 0.0):
        raise ValueError("constraints are squares and must be nonnegative")
    lam = alm.lam + alm.mu * C
    mean_c = float(C.mean())
    mu = alm.mu
    if alm.prev_mean_constraint is not None and mean_c > 0.25 * alm.prev_mean_constraint:
        mu = min(alm.growth * alm.mu, alm.mu_max)
    return replace(alm, lam=lam, mu=mu, prev_mean_constraint=mean_c)


# ----------------------------------------------------------------------
# objectives

def build_objective(kind: ObjectiveKind, batch: SampleBatch, problem: Problem,
                    alm: AlmState | None = None, constraint_sink: dict | None = None
                    ) -> BatchObjective:
    """Assemble the batch objective for one epoch.

    The returned objective always has two terms, (domain, boundary), so term
    breakdowns line up across formulations.  For pecann, pass a dict as
    ``constraint_sink`` to receive the constraint vector evaluated alongside
    the loss (key ``"constraints"``).
    """
    kind = ObjectiveKind(kind)
    X_dom = batch.domain_points
    X_bnd = batch.boundary_points
    g = batch.boundary_values
    n_dom = X_dom.shape[0]
    n_bnd = X_bnd.shape[0]

    if kind is ObjectiveKind.SUPERVISED:
        targets = problem.exact(X_dom)

        def domain_eval(fb):
            r = fb.values - targets
            return float(r @ r) / n_dom, (2.0 * r / n_dom, None, None)

        def boundary_eval(fb):
            r = fb.values - g
            return float(r @ r) / n_bnd, (2.0 * r / n_bnd, None, None)

        return BatchObjective(terms=(
            ObjectiveTerm(X_dom, domain_eval, needs_derivatives=False),
            ObjectiveTerm(X_bnd, boundary_eval, needs_derivatives=False),
        ))

    f = problem.forcing(X_dom)

    if kind is ObjectiveKind.PINN:
        def domain_eval(fb):
            r = fb.laplacians - f
            return float(r @ r) / n_dom, (None, None, 2.0 * r / n_dom)

        def boundary_eval(fb):
            r = fb.values - g
            return float(r @ r) / n_bnd, (2.0 * r / n_bnd, None, None)

        return BatchObjective(terms=(
            ObjectiveTerm(X_dom, domain_eval, needs_derivatives=True),
            ObjectiveTerm(X_bnd, boundary_eval, needs_derivatives=False),
        ))

    if alm is None:
        raise ValueError("pecann objective needs an AlmState")
    lam, mu = alm.lam, alm.mu

    def domain_eval(fb):
        r = fb.laplacians - f
        return float(r @ r), (None, None, 2.0 * r)

    def boundary_eval(fb):
        mismatch = g - fb.values
        C = mismatch * mismatch
        if constraint_sink is not None:
            constraint_sink["constraints"] = C
        value = float(lam @ C) + 0.5 * mu * float(C.sum())
        u_bar = -2.0 * (lam + 0.5 * mu) * mismatch
        return value, (u_bar, None, None)

    return BatchObjective(terms=(
        ObjectiveTerm(X_dom, domain_eval, needs_derivatives=True),
        ObjectiveTerm(X_bnd, boundary_eval, needs_derivatives=False),
    ))


def loss_value(network: FieldNetwork, params, kind: ObjectiveKind, batch: SampleBatch,
               problem: Problem, alm: AlmState | None = None) -> float:
    """Objective value at fixed parameters, through the same code path as training."""
    return network.objective_value(params, build_objective(kind, batch, problem, alm))


def supervised_loss(network: FieldNetwork, params, batch: SampleBatch, problem: Problem
                    ) -> tuple[LossGradient, tuple[float, float]]:
    """Data-fit MSE (domain + boundary) with its exact parameter gradient."""
    obj = build_objective(ObjectiveKind.SUPERVISED, batch, problem)
    lg, parts = network.loss_gradient_terms(params, obj)
    return lg, parts


def pinn_loss(network: FieldNetwork, params, batch: SampleBatch, problem: Problem
              ) -> tuple[LossGradient, tuple[float, float]]:
    """Soft-penalty residual MSE plus boundary MSE, with exact gradient."""
    obj = build_objective(ObjectiveKind.PINN, batch, problem)
    lg, parts = network.loss_gradient_terms(params, obj)
    return lg, parts


def pecann_loss(network: FieldNetwork, params, batch: SampleBatch, problem: Problem,
                alm: AlmState) -> tuple[LossGradient, tuple[float, float], np.ndarray]:
    """Augmented-Lagrangian objective; also returns the constraint vector.

    The constraints come from the very boundary evaluation that produced the
    loss, so they are exactly the C used in the multiplier update.
    """
    sink: dict = {}
    obj = build_objective(ObjectiveKind.PECANN, batch, problem, alm, constraint_sink=sink)
    lg, parts = network.loss_gradient_terms(params, obj)
    return lg, parts, sink["constraints"]


# ----------------------------------------------------------------------
# the epoch loop

@dataclass(frozen=True)
class TrainConfig:
    """Everything the epoch loop needs besides the problem itself."""

    network: MLPConfig
    epochs: int
    n_domain: int = 600
    n_boundary: int = 2
    init_seed: int = 7001
    sample_seed: int = 7002
    resample_every_epoch: bool = False
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 100
    factor: float = 0.90
    threshold: float = 1e-4
    min_lr: float = 1e-4
    mu0: float = 1.0
    growth: float = 2.0
    mu_max: float = 500.0


@dataclass
class TrainRecord:
    """Per-epoch history of one run; one row per completed epoch."""

    objective: ObjectiveKind
    epoch: list[int] = field(default_factory=list)
    total_loss: list[float] = field(default_factory=list)
    domain_loss: list[float] = field(default_factory=list)
    boundary_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    mu: list[float] = field(default_factory=list)
    mean_lambda: list[float] = field(default_factory=list)
    mean_constraint: list[float] = field(default_factory=list)
    diverged: bool = False
    wall_time: float = 0.0

    def __len__(self) -> int:
        return len(self.epoch)

    @property
    def columns(self) -> list[str]:
        cols = ["epoch", "total_loss", "domain_loss", "boundary_loss", "lr"]
        if self.objective is ObjectiveKind.PECANN:
            cols += ["mu", "mean_lambda", "mean_constraint"]
        return cols

    def to_csv(self, path) -> None:
        pecann = self.objective is ObjectiveKind.PECANN
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for i in range(len(self)):
                row = [str(self.epoch[i])] + [
                    repr(float(v))
                    for v in (self.total_loss[i], self.domain_loss[i],
                              self.boundary_loss[i], self.lr[i])
                ]
                if pecann:
                    row += [repr(float(v)) for v in
                            (self.mu[i], self.mean_lambda[i], self.mean_constraint[i])]
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class TrainResult:
    params: np.ndarray
    record: TrainRecord
    batch: SampleBatch
    alm: AlmState | None = None


def train(problem: Problem, objective: ObjectiveKind, config: TrainConfig,
          batch: SampleBatch | None = None) -> TrainResult:
    """Run the epoch loop and return final parameters plus the full record.

    The batch is sampled once up front unless ``resample_every_epoch`` is
    set, in which case fresh points are drawn from the same seeded stream
    each epoch.  Non-finite losses or gradients abort the loop; the partial
    record is flagged ``diverged`` and the last finite parameters are
    returned.  A caller-supplied ``batch`` overrides sampling entirely.
    """
    objective = ObjectiveKind(objective)
    if config.network.input_dim != problem.input_dim:
        raise ValueError(
            f"network input_dim {config.network.input_dim} does not match "
            f"problem dimension {problem.input_dim}"
        )
    if batch is not None and config.resample_every_epoch:
        raise ValueError("resample_every_epoch conflicts with an explicit batch")

    network = FieldNetwork(config.network)
    params = network.init_params(config.init_seed)

    sample_rng = np.random.default_rng(config.sample_seed)
    if batch is None:
        batch = batch_from_rng(problem, config.n_domain, config.n_boundary, sample_rng)

    adam = AdamState.init(network.n_params, lr=config.lr, beta1=config.beta1,
                          beta2=config.beta2, epsilon=config.epsilon)
    sched = PlateauScheduler(lr=config.lr, patience=config.patience,
                             factor=config.factor, threshold=config.threshold,
                             min_lr=config.min_lr)
    alm = None
    if objective is ObjectiveKind.PECANN:
        alm = AlmState.init(batch.boundary_points.shape[0], mu0=config.mu0,
                            growth=config.growth, mu_max=config.mu_max)

    record = TrainRecord(objective=objective)
    start = time.perf_counter()
    for epoch in range(config.epochs):
        if config.resample_every_epoch and epoch > 0:
            batch = batch_from_rng(problem, config.n_domain, config.n_boundary,
                                   sample_rng)
        try:
            if objective is ObjectiveKind.SUPERVISED:
                lg, parts = supervised_loss(network, params, batch, problem)
                constraints = None
            elif objective is ObjectiveKind.PINN:
                lg, parts = pinn_loss(network, params, batch, problem)
                constraints = None
            else:
                lg, parts, constraints = pecann_loss(network, params, batch,
                                                     problem, alm)
            params, adam = adam_step(adam, params, lg.grad)
        except DivergenceError:
            record.diverged = True
            break

        record.epoch.append(epoch)
        record.total_loss.append(lg.value)
        record.domain_loss.append(parts[0])
        record.boundary_loss.append(parts[1])
        record.lr.append(adam.lr)
        if objective is ObjectiveKind.PECANN:
            record.mu.append(alm.mu)
            record.mean_lambda.append(float(alm.lam.mean()))
            record.mean_constraint.append(float(constraints.mean()))
            alm = alm_update(alm, constraints)

        sched = scheduler_step(sched, lg.value)
        if sched.lr != adam.lr:
            adam = replace(adam, lr=sched.lr)
    record.wall_time = time.perf_counter() - start

    return TrainResult(params=params, record=record, batch=batch, alm=alm)
