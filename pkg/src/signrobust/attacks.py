"""Untargeted white-box L-infinity attacks: FGSM and PGD.

Inputs live in normalized space, so every adversarial point is clamped to
[-1, 1] and ``epsilon`` is measured in those units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, ShapeError
from .tensor import DTYPE, Rng, derive_seed

LO, HI = -1.0, 1.0

PGD_STEPS = 10
PGD_ALPHA = 0.02


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.0
    alpha: float = PGD_ALPHA
    steps: int = PGD_STEPS
    random_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")


@dataclass
class AdvExample:
    x_adv: np.ndarray
    perturbation: np.ndarray
    original_label: int
    predicted_label: int
    loss_before: float
    loss_after: float


def project_linf(candidate, center, epsilon):
    """Nearest point of the L-inf ball of radius ``epsilon`` around ``center``."""
    candidate = np.asarray(candidate, dtype=DTYPE)
    center = np.asarray(center, dtype=DTYPE)
    if candidate.shape != center.shape:
        raise ShapeError(f"shape mismatch: {candidate.shape} vs {center.shape}")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    return np.minimum(np.maximum(candidate, center - epsilon), center + epsilon)


def _clamp(x):
    return np.minimum(np.maximum(x, LO), HI)


def fgsm_batch(model, x, y, epsilon):
    """FGSM on a batch; returns ``(x_adv, loss_before)``. One gradient evaluation."""
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    before, grad = nn.input_gradient(model, x, y)
    return _clamp(x + epsilon * np.sign(grad)), before


def random_start_noise(shape, epsilon, seeds):
    """Uniform noise in [-epsilon, epsilon), one independent stream per example."""
    noise = np.empty(shape, dtype=DTYPE)
    for i, s in enumerate(seeds):
        noise[i] = Rng(s).uniform(shape[1:], -epsilon, epsilon)
    return noise


def pgd_batch(model, x, y, cfg: AttackConfig, seeds=None):
    """PGD on a batch; returns ``(x_adv, loss_before)``.

    Runs exactly ``cfg.steps`` gradient evaluations. With ``random_start`` the
    start point of example ``i`` is drawn from ``Rng(seeds[i])``; by default
    ``seeds[i] = cfg.seed ^ i``.
    """
    x = np.asarray(x, dtype=DTYPE)
    eps = cfg.epsilon
    if cfg.random_start:
        if seeds is None:
            seeds = [cfg.seed ^ i for i in range(len(x))]
        x_t = _clamp(project_linf(x + random_start_noise(x.shape, eps, seeds), x, eps))
    else:
        x_t = x
    before = None
    for _ in range(cfg.steps):
        value, grad = nn.input_gradient(model, x_t, y)
        if before is None:
            before = value
        x_t = _clamp(project_linf(x_t + cfg.alpha * np.sign(grad), x, eps))
    if cfg.random_start:
        before = nn.loss(nn.forward(model, x)[0], y)
    return x_t, before


def _single(model, x, y, x_adv, before):
    logits, _ = nn.forward(model, x_adv)
    return AdvExample(
        x_adv=x_adv,
        perturbation=x_adv - x,
        original_label=int(y),
        predicted_label=nn.argmax_logits(logits),
        loss_before=float(before),
        loss_after=nn.loss(logits, int(y)),
    )


def fgsm(model, x, y: int, epsilon: float) -> AdvExample:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != model.input_shape:
        raise ShapeError(f"expected a single input of shape {model.input_shape}, got {x.shape}")
    x_adv, before = fgsm_batch(model, x, y, epsilon)
    return _single(model, x, y, x_adv, before)


def pgd(model, x, y: int, cfg: AttackConfig) -> AdvExample:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != model.input_shape:
        raise ShapeError(f"expected a single input of shape {model.input_shape}, got {x.shape}")
    x_adv, before = pgd_batch(model, x[None], np.array([y]), cfg, seeds=[cfg.seed])
    return _single(model, x, y, x_adv[0], before[0])


def example_seed(sweep_seed: int, eps_index: int, example_index: int) -> int:
    return derive_seed(sweep_seed, eps_index, example_index)
