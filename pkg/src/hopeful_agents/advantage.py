"""
advantage.py
============
TD errors, GAE, critic targets and optimistic advantage shaping.

Shaping is the Leaky-ReLU ``LR(A) = max(eta * A, A)``: ``eta = 0`` clips
negative advantages to zero, ``eta = 1`` leaves them untouched.  Critic
targets are always built from the raw advantages.

All functions take time on the last axis, so a ``(threads, steps)`` batch is
handled in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALE_MODES = ("none", "std-only")
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class AdvantageConfig:
    gamma:      float = 0.99
    lam:        float = 0.95
    eta:        float = 0.0
    scale_mode: str = "none"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        _check_eta(self.eta)
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {self.scale_mode!r}")


@dataclass
class AdvantageBatch:
    raw_adv:       np.ndarray
    shaped_adv:    np.ndarray
    value_targets: np.ndarray
    td_errors:     np.ndarray
    eta:           float = 1.0

    @property
    def frac_clipped(self) -> float:
        """Fraction of samples on the shaped (negative) branch."""
        if self.eta >= 1.0:
            return 0.0
        return float(np.mean(self.raw_adv < 0.0))


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")


def _as_arrays(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    shape = out[0].shape
    for a in out[1:]:
        if a.shape != shape:
            raise ValueError(f"length mismatch: {a.shape} vs {shape}")
    return out


def td_errors(rewards, values, bootstrap_value, dones, gamma: float) -> np.ndarray:
    """``delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)``."""
    rewards, values, dones = _as_arrays(rewards, values, dones)
    boot = np.asarray(bootstrap_value, dtype=float)
    if boot.shape != rewards.shape[:-1]:
        raise ValueError(f"bootstrap_value shape {boot.shape} != batch shape "
                         f"{rewards.shape[:-1]}")
    next_values = np.concatenate([values[..., 1:], boot[..., None]], axis=-1)
    return rewards + gamma * next_values * (1.0 - dones) - values


def gae(deltas, gamma: float, lam: float, dones) -> np.ndarray:
    """Backward recursion ``A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}``."""
    deltas, dones = _as_arrays(deltas, dones)
    adv = np.zeros_like(deltas)
    running = np.zeros(deltas.shape[:-1])
    for t in range(deltas.shape[-1] - 1, -1, -1):
        running = deltas[..., t] + gamma * lam * (1.0 - dones[..., t]) * running
        adv[..., t] = running
    return adv


def shape_advantages(raw_adv, eta: float, scale_mode: str = "none") -> np.ndarray:
    """
    Leaky-ReLU shaping.  ``std-only`` divides by the standard deviation of the
    raw batch first; a mean is never subtracted, so signs are preserved.
    """
    _check_eta(eta)
    adv = scale_advantages(raw_adv, scale_mode)
    return np.maximum(eta * adv, adv)


def scale_advantages(raw_adv, scale_mode: str = "none") -> np.ndarray:
    adv = np.asarray(raw_adv, dtype=float)
    if scale_mode == "none":
        return adv.copy()
    if scale_mode == "std-only":
        return adv / max(float(np.std(adv)), STD_FLOOR)
    raise ValueError(f"unknown scale_mode {scale_mode!r}")


def value_targets(raw_adv, values) -> np.ndarray:
    raw_adv, values = _as_arrays(raw_adv, values)
    return raw_adv + values


def compute_advantages(rewards, values, bootstrap_value, dones,
                       cfg: AdvantageConfig, *, shape: bool = True) -> AdvantageBatch:
    """
    Full pipeline.  With ``shape=False`` the policy advantages are only
    scaled, never passed through the Leaky-ReLU.
    """
    deltas = td_errors(rewards, values, bootstrap_value, dones, cfg.gamma)
    raw = gae(deltas, cfg.gamma, cfg.lam, dones)
    if shape:
        shaped = shape_advantages(raw, cfg.eta, cfg.scale_mode)
    else:
        shaped = scale_advantages(raw, cfg.scale_mode)
    return AdvantageBatch(raw, shaped, value_targets(raw, values), deltas,
                          cfg.eta if shape else 1.0)
