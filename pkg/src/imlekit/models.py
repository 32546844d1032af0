"""Analytic distribution families and the feed-forward implicit generator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .datasets import Dataset, MixtureSpec
from .numerics import DimensionMismatch, RngStream, as_vec

LOG_2PI = math.log(2.0 * math.pi)


class AnalyticFamily:
    """A distribution with exact log-density and an exact sampler."""

    dim: int

    @property
    def theta(self) -> np.ndarray:
        raise NotImplementedError

    def log_density_batch(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: RngStream, m: int) -> np.ndarray:
        """Return an (m, dim) array of i.i.d. draws."""
        raise NotImplementedError

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1 and self.dim == 1 and x.size != 1:
            x = x[:, None]
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"family dim {self.dim}, point dim {x.shape[1]}")
        return x


@dataclass(frozen=True)
class Gaussian1D(AnalyticFamily):
    """N(mean, std^2) on the real line; theta = (mean, std)."""

    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")

    dim = 1

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.mean, self.std])

    def log_density_batch(self, x):
        x = self._check(x)[:, 0]
        u = (x - self.mean) / self.std
        return -0.5 * LOG_2PI - math.log(self.std) - 0.5 * u * u

    def sample(self, rng, m):
        return self.mean + self.std * rng.normal((m, 1))


@dataclass(frozen=True)
class IsotropicGaussian(AnalyticFamily):
    """N(mean, std^2 I) in ``len(mean)`` dimensions; theta = (mean..., std)."""

    mean: tuple = (0.0,)
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", tuple(float(v) for v in as_vec(self.mean)))

    @classmethod
    def standard(cls, dim: int) -> "IsotropicGaussian":
        return cls(tuple([0.0] * dim), 1.0)

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def theta(self) -> np.ndarray:
        return np.array([*self.mean, self.std])

    def log_density_batch(self, x):
        x = self._check(x)
        u = (x - np.array(self.mean)) / self.std
        return -0.5 * self.dim * (LOG_2PI + 2 * math.log(self.std)) - 0.5 * np.einsum("ij,ij->i", u, u)

    def sample(self, rng, m):
        return np.array(self.mean) + self.std * rng.normal((m, self.dim))


class GaussianMixture(AnalyticFamily):
    """Isotropic mixture; theta = (means row-major..., std, weights...)."""

    def __init__(self, spec: MixtureSpec):
        self.spec = spec
        self.dim = spec.dim

    @property
    def theta(self) -> np.ndarray:
        s = self.spec
        return np.concatenate([s.component_means.ravel(), [s.component_std], s.weights])

    def log_density_batch(self, x):
        x = self._check(x)
        s = self.spec
        comp = IsotropicGaussian.standard(self.dim)
        per = np.stack([comp.log_density_batch((x - mu) / s.component_std) for mu in s.component_means], axis=1)
        per -= self.dim * math.log(s.component_std)
        with np.errstate(divide="ignore"):
            logw = np.log(s.weights)
        return logsumexp(per + logw, axis=1)

    def sample(self, rng, m):
        s = self.spec
        labels = rng.choice(s.k, size=m, p=s.weights)
        return s.component_means[labels] + s.component_std * rng.normal((m, self.dim))


def log_density(fam: AnalyticFamily, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != fam.dim:
        raise DimensionMismatch(f"family dim {fam.dim}, point dim {x.size}")
    return float(fam.log_density_batch(x[None, :])[0])


def family_sample(fam: AnalyticFamily, rng: RngStream, m: int) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return fam.sample(rng, m)


@dataclass(frozen=True)
class MLESolution:
    theta: np.ndarray
    loglik: float


class UnsupportedFamily(TypeError):
    """The requested operation has no closed form for this family."""


def closed_form_mle(family: AnalyticFamily, data: Dataset) -> MLESolution:
    """Maximum-likelihood location for a Gaussian with known std.

    ``family`` serves as a template: only its std is used.
    """
    if isinstance(family, Gaussian1D):
        if data.dim != 1:
            raise DimensionMismatch("1-D family, multi-dimensional data")
        mu = float(data.points[:, 0].mean())
        best = Gaussian1D(mu, family.std)
        theta = np.array([mu])
    elif isinstance(family, IsotropicGaussian):
        mu = data.points.mean(axis=0)
        best = IsotropicGaussian(tuple(mu), family.std)
        theta = mu
    else:
        raise UnsupportedFamily(f"no closed-form MLE for {type(family).__name__}")
    return MLESolution(theta, float(best.log_density_batch(data.points).sum()))


def location_loglik(family: AnalyticFamily, data: Dataset, theta) -> float:
    """Total log-likelihood of ``data`` with the template's mean replaced by ``theta``."""
    theta = as_vec(theta)
    if isinstance(family, Gaussian1D):
        fam = Gaussian1D(float(theta[0]), family.std)
    elif isinstance(family, IsotropicGaussian):
        fam = IsotropicGaussian(tuple(theta), family.std)
    else:
        raise UnsupportedFamily(type(family).__name__)
    return float(fam.log_density_batch(data.points).sum())


# ---------------------------------------------------------------------------
# Generator network


ACTIVATIONS = ("sigmoid", "identity")

PRESETS = {
    # noise dim, hidden widths (output width comes from the data)
    "mnist": (100, (1200, 1200)),
    "desk": (16, (64, 64)),
}


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class GeneratorNet:
    """Fully connected ReLU network mapping Gaussian noise to data space.

    All parameters live in one flat float64 vector ``params``; per-layer
    weights (shape ``(fan_out, fan_in)``, row-major) and biases are views
    into it, laid out layer by layer as weights then biases.
    """

    def __init__(self, layer_sizes, output_activation: str = "identity", params=None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least input and output sizes, all positive")
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        self.layer_sizes = sizes
        self.output_activation = output_activation
        count = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.zeros(count)
        params = np.array(params, dtype=np.float64)
        if params.shape != (count,):
            raise ValueError(f"expected {count} parameters, got {params.shape}")
        self.params = params
        self._bind_views()

    def _bind_views(self):
        self.weights, self.biases = [], []
        pos = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.params[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in))
            pos += fan_in * fan_out
            self.biases.append(self.params[pos:pos + fan_out])
            pos += fan_out

    @classmethod
    def initialized(cls, layer_sizes, rng: RngStream, output_activation: str = "identity"):
        """He initialization: weights ~ N(0, 2 / fan_in), biases zero."""
        net = cls(layer_sizes, output_activation)
        for w in net.weights:
            w[...] = rng.normal(w.shape) * math.sqrt(2.0 / w.shape[1])
        return net

    @classmethod
    def from_preset(cls, name: str, data_dim: int, rng: RngStream, output_activation: str = "identity"):
        latent, hidden = PRESETS[name]
        return cls.initialized((latent, *hidden, data_dim), rng, output_activation)

    @property
    def latent_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def data_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "GeneratorNet":
        return GeneratorNet(self.layer_sizes, self.output_activation, self.params.copy())

    def with_params(self, params) -> "GeneratorNet":
        return GeneratorNet(self.layer_sizes, self.output_activation, params)

    def _check_latents(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionMismatch(f"latent dim is {self.latent_dim}, got shape {z.shape}")
        return z

    def _forward_cache(self, z):
        pre, acts = [], [z]
        h = z
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w.T + b
            pre.append(a)
            if i < last:
                h = np.maximum(a, 0.0)
            elif self.output_activation == "sigmoid":
                h = _sigmoid(a)
            else:
                h = a
            acts.append(h)
        return pre, acts

    def forward(self, z) -> np.ndarray:
        """Batched forward pass: (B, latent_dim) -> (B, data_dim)."""
        return self._forward_cache(self._check_latents(z))[1][-1]

    def backward(self, z, upstream) -> np.ndarray:
        """Gradient of ``sum_b upstream[b] . forward(z)[b]`` w.r.t. ``params``.

        ReLU's derivative at exactly zero is taken as 0.
        """
        z = self._check_latents(z)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (z.shape[0], self.data_dim):
            raise DimensionMismatch(f"upstream shape {upstream.shape} does not match output")
        pre, acts = self._forward_cache(z)
        grad = np.empty_like(self.params)
        gw, gb = [], []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            gw.append(grad[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            gb.append(grad[pos:pos + b.size])
            pos += b.size
        if self.output_activation == "sigmoid":
            y = acts[-1]
            delta = upstream * y * (1.0 - y)
        else:
            delta = upstream
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i][...] = delta.T @ acts[i]
            gb[i][...] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (pre[i - 1] > 0)
        return grad


def net_forward(net: GeneratorNet, z) -> np.ndarray:
    z = as_vec(z)
    if z.size != net.latent_dim:
        raise DimensionMismatch(f"latent dim is {net.latent_dim}, got {z.size}")
    return net.forward(z[None, :])[0]


def net_backward(net: GeneratorNet, z, upstream) -> np.ndarray:
    z = as_vec(z)
    upstream = as_vec(upstream)
    if z.size != net.latent_dim or upstream.size != net.data_dim:
        raise DimensionMismatch("z or upstream has the wrong dimension")
    return net.backward(z[None, :], upstream[None, :])
