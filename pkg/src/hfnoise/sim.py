"""Synthetic observed prices ``Y = X + U``.

Efficient price ``X``: Ornstein-Uhlenbeck (exact transition) or a
mean-reverting stochastic-volatility model (full-truncation Euler).
Noise ``U``: iid Gaussian plus a stationary Gaussian AR(1), indexed by
observation count rather than clock time.

Randomness is driven by :class:`numpy.random.SeedSequence` so that price and
noise streams, and Monte Carlo replications, are independent and reproducible
regardless of execution order.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .sampling import TickSeries

__all__ = [
    "OuConfig",
    "SvConfig",
    "Ar1NoiseConfig",
    "SimPath",
    "child_seed",
    "simulate_ou",
    "simulate_sv",
    "simulate_noise",
    "model_sigma2_u",
    "model_autocov",
    "simulate_observed",
    "config_from_dict",
    "config_to_dict",
    "design_from_dict",
    "design_to_dict",
]


@dataclass(frozen=True)
class OuConfig:
    sigma2: float = 6e-5
    delta: float = 0.5
    mu: float = 1.6
    x0: float = 1.6

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigError("OuConfig.sigma2 must be positive")
        if not self.delta >= 0:
            raise ConfigError("OuConfig.delta must be nonnegative")


@dataclass(frozen=True)
class SvConfig:
    delta: float = 0.5
    mu1: float = 1.6
    kappa: float = 5 / 252
    mu2: float = 0.04 / 252
    gamma_vol: float = 0.05 / 252
    rho_lev: float = -0.5
    sig2_0: float = 0.04 / 252
    x0: float = 1.6

    def __post_init__(self):
        for name in ("kappa", "mu2", "gamma_vol", "sig2_0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"SvConfig.{name} must be positive")
        if not abs(self.rho_lev) <= 1:
            raise ConfigError("SvConfig.rho_lev must lie in [-1, 1]")
        if not self.delta >= 0:
            raise ConfigError("SvConfig.delta must be nonnegative")


@dataclass(frozen=True)
class Ar1NoiseConfig:
    var_v: float = 2.9e-8
    var_eps: float = 4.3e-8
    rho: float = -0.7

    def __post_init__(self):
        if self.var_v < 0 or self.var_eps < 0:
            raise ConfigError("noise variances must be nonnegative")
        if not abs(self.rho) < 1:
            raise ConfigError("Ar1NoiseConfig.rho must satisfy |rho| < 1")

    @property
    def var_u(self):
        return self.var_v + self.var_eps


@dataclass(frozen=True, eq=False)
class SimPath:
    series: TickSeries
    efficient: np.ndarray
    true_iv: float
    true_sigma2_u: float
    variance: np.ndarray = None

    def __eq__(self, other):
        if not isinstance(other, SimPath):
            return NotImplemented
        return (
            self.series == other.series
            and np.array_equal(self.efficient, other.efficient)
            and self.true_iv == other.true_iv
            and self.true_sigma2_u == other.true_sigma2_u
        )


# ---------------------------------------------------------------------------
# seeding


def child_seed(seed, *keys):
    """Deterministic child of ``seed`` (int or SeedSequence) addressed by ``keys``.

    Unlike ``SeedSequence.spawn`` this has no hidden counter, so the same call
    always yields the same stream.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence(int(seed), spawn_key=keys)


def _rng(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(int(seed))


def _check_grid(n_obs, horizon):
    if n_obs < 2:
        raise ValueError("n_obs must be at least 2")
    if not horizon > 0:
        raise ValueError("horizon must be positive")


# ---------------------------------------------------------------------------
# efficient price


def ou_step_coefficients(delta, sigma2, dt):
    """Exact one-step OU transition ``X' = mu + a (X - mu) + s Z``; returns ``(a, s)``."""
    dt = np.asarray(dt, dtype=float)
    if delta == 0:
        return np.ones_like(dt), np.sqrt(sigma2 * dt)
    a = np.exp(-delta * dt)
    var = sigma2 * -np.expm1(-2.0 * delta * dt) / (2.0 * delta)
    return a, np.sqrt(var)


def ou_from_shocks(cfg, shocks, dt):
    """OU path from standard normal ``shocks`` (``shocks[0]`` unused) on a regular step."""
    a, s = ou_step_coefficients(cfg.delta, cfg.sigma2, dt)
    dev = kernels.ar1_recursion(float(s) * np.asarray(shocks, dtype=float), float(a), cfg.x0 - cfg.mu)
    return cfg.mu + dev


def _ou_irregular(cfg, shocks, times):
    steps = np.diff(times)
    a, s = ou_step_coefficients(cfg.delta, cfg.sigma2, steps)
    # X_i - mu = e^{-delta t_i} (x0 - mu + sum_{l<=i} e^{delta t_l} s_l Z_l)
    growth = np.exp(cfg.delta * times)
    acc = np.concatenate(([cfg.x0 - cfg.mu], growth[1:] * s * shocks[1:]))
    return cfg.mu + np.cumsum(acc) / growth


def simulate_ou(cfg, n_obs, horizon=1.0, seed=0, times=None):
    """Ornstein-Uhlenbeck log-price on ``n_obs`` grid points over ``[0, horizon]``.

    Uses the exact Gaussian transition, so there is no discretisation error.
    ``times`` optionally replaces the regular grid (must start at 0).
    """
    _check_grid(n_obs, horizon)
    z = _rng(seed).standard_normal(n_obs)
    if times is not None:
        times = np.asarray(times, dtype=float) * horizon
        if times.shape != (n_obs,):
            raise ValueError("times must have n_obs entries")
        return _ou_irregular(cfg, z, times)
    return ou_from_shocks(cfg, z, horizon / (n_obs - 1))


def simulate_sv(cfg, n_obs, horizon=1.0, seed=0):
    """Stochastic-volatility log-price and its variance path.

    Returns
    -------
    x, variance : ndarray
        Both of length ``n_obs``; the variance grid is already truncated at 0.
    """
    _check_grid(n_obs, horizon)
    rng = _rng(seed)
    z = rng.standard_normal((2, n_obs - 1))
    return kernels.sv_euler(
        z[0], z[1], horizon / (n_obs - 1), cfg.x0, cfg.delta, cfg.mu1,
        cfg.kappa, cfg.mu2, cfg.gamma_vol, cfg.rho_lev, cfg.sig2_0,
    )


# ---------------------------------------------------------------------------
# noise


def simulate_noise(cfg, n_obs, seed=0):
    """``U_i = V_i + eps_i`` with ``eps`` a stationary AR(1) started from its stationary law."""
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    if not abs(cfg.rho) < 1:
        raise ConfigError("|rho| must be < 1")
    z = _rng(seed).standard_normal((2, n_obs))
    eps_sd = math.sqrt(cfg.var_eps)
    innov_sd = eps_sd * math.sqrt(1.0 - cfg.rho * cfg.rho)
    eps = kernels.ar1_recursion(innov_sd * z[0], cfg.rho, eps_sd * z[0, 0])
    return math.sqrt(cfg.var_v) * z[1] + eps


def model_autocov(cfg, lags):
    """Population autocovariances ``gamma(j) = rho**j * var_eps`` (``gamma(0) = Var(U)``)."""
    lags = np.asarray(lags)
    out = cfg.var_eps * np.power(cfg.rho, lags.astype(float))
    return np.where(lags == 0, cfg.var_u, out)


def model_sigma2_u(cfg):
    """Long-run noise variance ``Var(U) + 2 sum_j gamma(j)`` in closed form."""
    if not abs(cfg.rho) < 1:
        raise ConfigError("|rho| must be < 1")
    return cfg.var_v + cfg.var_eps * (1.0 + cfg.rho) / (1.0 - cfg.rho)


# ---------------------------------------------------------------------------
# observed price


def simulate_observed(price_cfg, noise_cfg, n_obs, horizon=1.0, seed=0, times=None):
    """Simulate one observed path.

    Price and noise draw from the independent child streams ``(seed, 0)`` and
    ``(seed, 1)``. ``noise_cfg=None`` gives a noiseless path. ``times`` (a
    grid on [0, 1], e.g. from :func:`~hfnoise.sampling.time_warp_grid`) is
    supported for OU prices only.
    """
    _check_grid(n_obs, horizon)
    price_seed = child_seed(seed, 0)
    noise_seed = child_seed(seed, 1)
    variance = None
    if isinstance(price_cfg, OuConfig):
        x = simulate_ou(price_cfg, n_obs, horizon, price_seed, times=times)
        true_iv = price_cfg.sigma2 * horizon
    elif isinstance(price_cfg, SvConfig):
        if times is not None:
            raise ConfigError("irregular observation times are only supported for OU prices")
        x, variance = simulate_sv(price_cfg, n_obs, horizon, price_seed)
        dt = horizon / (n_obs - 1)
        true_iv = kernels.compensated_sum(variance[:-1]) * dt
    else:
        raise ConfigError(f"unknown price model {type(price_cfg).__name__}")

    if noise_cfg is None:
        u = np.zeros(n_obs)
        sigma2_u = 0.0
    else:
        u = simulate_noise(noise_cfg, n_obs, noise_seed)
        sigma2_u = model_sigma2_u(noise_cfg)

    if times is None:
        t = np.linspace(0.0, horizon, n_obs)
    else:
        t = np.asarray(times, dtype=float) * horizon
    series = TickSeries(t, x + u, label="simulated")
    return SimPath(series, x, float(true_iv), float(sigma2_u), variance)


# ---------------------------------------------------------------------------
# JSON documents

_PRICE_MODELS = {"ou": OuConfig, "sv": SvConfig}


def config_from_dict(cls, data, strict=True):
    """Build a config dataclass, naming any missing or unknown field in the error."""
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} must be a JSON object")
    names = [f.name for f in dataclasses.fields(cls)]
    required = [
        f.name for f in dataclasses.fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    if strict:
        required = names
    for name in required:
        if name not in data:
            raise ConfigError(f"missing field '{name}' in {cls.__name__}")
    unknown = sorted(set(data) - set(names) - {"model"})
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown} in {cls.__name__}")
    try:
        values = {k: float(data[k]) for k in names if k in data}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric value in {cls.__name__}: {exc}") from None
    return cls(**values)


def config_to_dict(cfg):
    out = dataclasses.asdict(cfg)
    for model, cls in _PRICE_MODELS.items():
        if isinstance(cfg, cls):
            out = {"model": model, **out}
    return out


def design_from_dict(data, strict=True):
    """``{"price": {"model": "ou"|"sv", ...}, "noise": {...} | null}`` -> (price_cfg, noise_cfg)."""
    if "price" not in data:
        raise ConfigError("missing field 'price' in design")
    price = data["price"]
    model = price.get("model", "ou") if isinstance(price, dict) else None
    if model not in _PRICE_MODELS:
        raise ConfigError(f"unknown price model {model!r}")
    price_cfg = config_from_dict(_PRICE_MODELS[model], price, strict)
    noise = data.get("noise")
    noise_cfg = None if noise is None else config_from_dict(Ar1NoiseConfig, noise, strict)
    return price_cfg, noise_cfg


def design_to_dict(price_cfg, noise_cfg):
    return {
        "price": config_to_dict(price_cfg),
        "noise": None if noise_cfg is None else config_to_dict(noise_cfg),
    }
