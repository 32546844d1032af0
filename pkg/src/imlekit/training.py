"""Implicit maximum likelihood estimation: sample, match, then descend.

Each outer iteration draws ``m`` latent codes, pushes them through the
generator, matches every example of a random batch to its nearest sample,
and then runs ``L`` minibatch gradient steps on

    n / |minibatch| * sum_i || x_i - T_theta(z_sigma(i)) ||^2

with the matching ``sigma`` held fixed but the matched samples recomputed
from their latent codes at the current parameters.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import Dataset
from .models import AnalyticFamily, GeneratorNet
from .nnsearch import STRUCTURES, NearestIndex
from .numerics import RngStream, sq_dists_to

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


class TrainingDiverged(FloatingPointError):
    """A minibatch loss became non-finite; carries the trace up to the failure."""

    def __init__(self, message: str, trace: "TrainTrace", diagnostic: dict):
        super().__init__(message)
        self.trace = trace
        self.diagnostic = diagnostic


@dataclass
class ImleConfig:
    """Hyperparameters of one training run.

    ``m`` and ``batch_size`` default to ``4 * batch_size`` and
    ``min(n, 256)`` once the dataset size is known (see :meth:`resolved`).
    """

    m: int | None = None
    K: int = 300
    L: int = 50
    eta: float = 1e-4
    batch_size: int | None = None
    minibatch_size: int = 64
    optimizer: str = "sgd"
    seed: int = 0
    index_structure: str = "brute"
    stale_matching: bool = False
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def resolved(self, n: int) -> "ImleConfig":
        """Fill dataset-dependent defaults and validate."""
        cfg = ImleConfig(**asdict(self))
        if cfg.batch_size is None:
            cfg.batch_size = min(n, 256)
        cfg.minibatch_size = min(cfg.minibatch_size, cfg.batch_size)
        if cfg.m is None:
            cfg.m = 4 * cfg.batch_size
        cfg.validate(n)
        return cfg

    def validate(self, n: int | None = None) -> None:
        if self.m is None or self.m < 1:
            raise ValueError("m must be >= 1")
        if self.K < 0 or self.L < 0:
            raise ValueError("K and L must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.batch_size is None or not 1 <= self.minibatch_size <= self.batch_size:
            raise ValueError("need 1 <= minibatch_size <= batch_size")
        if n is not None and self.batch_size > n:
            raise ValueError(f"batch_size {self.batch_size} exceeds dataset size {n}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.index_structure not in STRUCTURES:
            raise ValueError(f"index_structure must be one of {STRUCTURES}")
        if self.m < self.batch_size:
            warnings.warn(f"m={self.m} is smaller than batch_size={self.batch_size}; "
                          "the estimator assumes at least as many samples as examples",
                          stacklevel=3)


@dataclass
class Matching:
    """Frozen assignment of batch examples to samples for one outer iteration."""

    data_indices: np.ndarray
    sample_indices: np.ndarray
    latents: np.ndarray        # z_{sigma(i)}, aligned with data_indices
    matched_samples: np.ndarray  # samples at matching time, aligned likewise
    sq_dists: np.ndarray
    built_at_outer: int = 0

    def __len__(self) -> int:
        return self.data_indices.size


@dataclass
class TraceRecord:
    outer_iter: int
    mean_sqdist_pre: float
    mean_sqdist_post: float
    wall_ms: float
    param_norm: float


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    CSV_HEADER = "outer_iter,mean_sqdist_pre,mean_sqdist_post,wall_ms,param_norm"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(f"{r.outer_iter},{r.mean_sqdist_pre!r},{r.mean_sqdist_post!r},"
                         f"{r.wall_ms!r},{r.param_norm!r}")
        return "\n".join(lines) + "\n"


def draw_model_samples(net: GeneratorNet, rng: RngStream, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``m`` latents z ~ N(0, I) and their images; both (m, .) arrays."""
    if m < 1:
        raise ValueError("m must be >= 1")
    latents = rng.normal((m, net.latent_dim))
    return latents, net.forward(latents)


def match_batch(data: Dataset, batch, samples: np.ndarray, latents: np.ndarray,
                structure: str = "brute", rng: RngStream | None = None,
                built_at_outer: int = 0) -> Matching:
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("batch is empty")
    if batch.min() < 0 or batch.max() >= data.n:
        raise IndexError("batch index out of range")
    index = NearestIndex(samples, structure, rng)
    sigma, dist = index.query_arrays(data.points[batch])
    return Matching(batch, sigma, np.asarray(latents)[sigma], index.points[sigma], dist, built_at_outer)


class _Sgd:
    def __init__(self, cfg: ImleConfig, size: int):
        self.eta = cfg.eta

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.eta * grad


class _Adam:
    def __init__(self, cfg: ImleConfig, size: int):
        self.eta = cfg.eta
        self.b1, self.b2 = cfg.adam_betas
        self.eps = cfg.adam_eps
        self.m1 = np.zeros(size)
        self.m2 = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m1 = self.b1 * self.m1 + (1 - self.b1) * grad
        self.m2 = self.b2 * self.m2 + (1 - self.b2) * grad * grad
        mhat = self.m1 / (1 - self.b1 ** self.t)
        vhat = self.m2 / (1 - self.b2 ** self.t)
        params -= self.eta * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(cfg: ImleConfig, size: int):
    return (_Adam if cfg.optimizer == "adam" else _Sgd)(cfg, size)


def minibatch_loss_and_grad(net: GeneratorNet, targets: np.ndarray, latents: np.ndarray,
                            n: int, frozen_samples: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Loss ``n/|B| * sum ||x - T(z)||^2`` and its parameter gradient.

    With ``frozen_samples`` the residual uses those vectors instead of the
    current network output (stale-matching ablation); the Jacobian is still
    taken at the current parameters.
    """
    scale = n / targets.shape[0]
    out = net.forward(latents)
    resid = out - targets
    loss = scale * float(np.sum(resid * resid))
    used = resid if frozen_samples is None else frozen_samples - targets
    grad = net.backward(latents, 2.0 * scale * used)
    return loss, grad


def inner_sgd(net: GeneratorNet, data: Dataset, matching: Matching, cfg: ImleConfig,
              rng: RngStream, optimizer=None) -> tuple[GeneratorNet, list[float]]:
    """Run ``cfg.L`` minibatch steps on the frozen matching. Updates ``net`` in place."""
    opt = optimizer or make_optimizer(cfg, net.n_params)
    losses = []
    size = min(cfg.minibatch_size, len(matching))
    for step in range(cfg.L):
        pick = rng.choice(len(matching), size=size, replace=False)
        targets = data.points[matching.data_indices[pick]]
        frozen = matching.matched_samples[pick] if cfg.stale_matching else None
        loss, grad = minibatch_loss_and_grad(net, targets, matching.latents[pick], data.n, frozen)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDiverged(
                f"non-finite loss at inner step {step}; the learning rate is probably too high",
                TrainTrace(),
                {"inner_step": step, "loss": loss, "eta": cfg.eta,
                 "outer_iter": matching.built_at_outer},
            )
        opt.step(net.params, grad)
        losses.append(loss)
    return net, losses


def _matched_mean(net: GeneratorNet, data: Dataset, matching: Matching) -> float:
    out = net.forward(matching.latents)
    resid = out - data.points[matching.data_indices]
    return float(np.mean(np.sum(resid * resid, axis=1)))


def _audit_matching(data: Dataset, samples: np.ndarray, matching: Matching) -> None:
    for i, j, d in zip(matching.data_indices, matching.sample_indices, matching.sq_dists):
        best = sq_dists_to(samples, data.points[i]).min()
        if best < d:
            raise AssertionError(f"example {i} matched to sample {j} at {d}, but {best} exists")


def imle_train(net: GeneratorNet, data: Dataset, cfg: ImleConfig, rng: RngStream | None = None,
               on_outer=None, record_wall_time: bool = True) -> tuple[GeneratorNet, TrainTrace]:
    """Train a copy of ``net`` for ``cfg.K`` outer iterations.

    ``on_outer(k, net, record)`` is called after every outer iteration
    (checkpointing hooks live there). On divergence the raised
    :class:`TrainingDiverged` carries the trace of completed iterations.
    Matchings are re-verified against a linear scan every 100th iteration.
    """
    cfg = cfg.resolved(data.n)
    rng = rng or RngStream(cfg.seed)
    net = net.copy()
    if net.data_dim != data.dim:
        raise ValueError(f"generator emits dim {net.data_dim}, data has dim {data.dim}")
    opt = make_optimizer(cfg, net.n_params)
    trace = TrainTrace()
    for k in range(1, cfg.K + 1):
        t0 = time.perf_counter()
        latents, samples = draw_model_samples(net, rng, cfg.m)
        batch = rng.choice(data.n, size=cfg.batch_size, replace=False)
        # the tree's pivot order comes from its own fixed stream, so the choice of
        # index never perturbs the training stream
        matching = match_batch(data, batch, samples, latents, cfg.index_structure, None, k)
        if k % 100 == 1:
            _audit_matching(data, samples, matching)
        pre = float(matching.sq_dists.mean())
        try:
            inner_sgd(net, data, matching, cfg, rng, opt)
        except TrainingDiverged as exc:
            exc.trace = trace
            log.error("diverged at outer iteration %d: %s", k, exc)
            raise
        post = _matched_mean(net, data, matching)
        wall = (time.perf_counter() - t0) * 1000.0 if record_wall_time else 0.0
        rec = TraceRecord(k, pre, post, wall, float(np.linalg.norm(net.params)))
        trace.records.append(rec)
        if on_outer is not None:
            on_outer(k, net, rec)
    return net, trace


def imle_objective_mc(model, data: Dataset, m: int, trials: int, rng: RngStream) -> tuple[float, float]:
    """Monte Carlo estimate of ``sum_i E[min_j ||x_j~ - x_i||^2]`` with its standard error."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    totals = np.empty(trials)
    for t in range(trials):
        if isinstance(model, GeneratorNet):
            samples = draw_model_samples(model, rng, m)[1]
        elif isinstance(model, AnalyticFamily):
            samples = model.sample(rng, m)
        else:
            raise TypeError(f"cannot sample from {type(model).__name__}")
        totals[t] = sum(sq_dists_to(samples, x).min() for x in data.points)
    stderr = float(totals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(totals.mean()), stderr
