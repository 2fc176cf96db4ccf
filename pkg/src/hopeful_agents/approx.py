"""
approx.py
=========
A small, explicit function-approximation core: a dense MLP with hand-written
forward/backward passes, Adam, categorical and diagonal-Gaussian policy heads,
a finite-difference gradient check and a flat binary checkpoint format.

Everything is float64 numpy.  Functions never mutate their inputs; updated
parameters and optimiser states are returned as new objects.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu")
LOG_2PI = math.log(2.0 * math.pi)


# ---------- parameter containers --------------------------------------------
@dataclass
class ParamSet:
    """
    Dense layers ``h_{k+1} = act(h_k @ W_k + b_k)`` with a linear last layer.

    ``log_std`` is the state-independent log standard deviation of a Gaussian
    policy; it is ``None`` for categorical policies and critics.
    """
    layers:      list[tuple[np.ndarray, np.ndarray]]
    activation:  str = "tanh"
    layer_sizes: tuple[int, ...] = ()
    log_std:     np.ndarray | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.layers:
            raise ValueError("a ParamSet needs at least one layer")
        sizes = [self.layers[0][0].shape[0]]
        for k, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or W.shape[0] != sizes[-1] or b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: weight {W.shape} / bias {b.shape} "
                                 f"do not chain from width {sizes[-1]}")
            sizes.append(W.shape[1])
        if self.layer_sizes and tuple(self.layer_sizes) != tuple(sizes):
            raise ValueError(f"layer_sizes {self.layer_sizes} disagree with weights {sizes}")
        self.layer_sizes = tuple(sizes)

    def arrays(self) -> list[np.ndarray]:
        out = [a for W, b in self.layers for a in (W, b)]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def with_arrays(self, arrays: list[np.ndarray]) -> "ParamSet":
        n = len(self.layers)
        layers = [(arrays[2 * k], arrays[2 * k + 1]) for k in range(n)]
        log_std = arrays[2 * n] if self.log_std is not None else None
        return ParamSet(layers, self.activation, self.layer_sizes, log_std)

    def copy(self) -> "ParamSet":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "ParamSet":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class OptState:
    first_moment:  list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count:    int = 0
    lr:            float = 3e-4
    beta1:         float = 0.9
    beta2:         float = 0.999
    eps_stability: float = 1e-8


@dataclass(frozen=True)
class PolicyHead:
    kind:         str = "categorical"      # categorical | gaussian
    action_dim:   int = 3
    action_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("categorical", "gaussian"):
            raise ValueError(f"unknown policy head {self.kind!r}")
        if self.action_dim < 1:
            raise ValueError("action_dim must be positive")


@dataclass
class Cache:
    params: ParamSet
    inputs: list[np.ndarray] = field(default_factory=list)


# ---------- MLP -------------------------------------------------------------
def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def mlp_init(layer_sizes, seed: int, *, out_gain: float = 0.01,
             hidden_gain: float = math.sqrt(2.0), activation: str = "tanh",
             log_std_init: float | None = None) -> ParamSet:
    """
    Orthogonal initialisation, zero biases.  ``out_gain`` scales the last
    layer; the default 0.01 keeps a fresh categorical policy near uniform.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"layer_sizes must list >= 2 positive widths, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if k == len(sizes) - 2 else hidden_gain
        layers.append((_orthogonal(rng, n_in, n_out, gain), np.zeros(n_out)))
    log_std = None if log_std_init is None else np.full(sizes[-1], float(log_std_init))
    return ParamSet(layers, activation, tuple(sizes), log_std)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(h: np.ndarray, kind: str) -> np.ndarray:
    # derivative expressed through the activation output
    return 1.0 - h * h if kind == "tanh" else (h > 0.0).astype(float)


def forward(params: ParamSet, x) -> tuple[np.ndarray, Cache]:
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.ndim != 2 or h.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"input width {h.shape[-1]} != layer_sizes[0] "
                         f"{params.layer_sizes[0]}")
    cache = Cache(params, [h])
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        z = h @ W + b
        h = z if k == last else _act(z, params.activation)
        if k != last:
            cache.inputs.append(h)
    return h, cache


def backward(params: ParamSet, cache: Cache, grad_out) -> ParamSet:
    """Parameter gradients of ``sum(grad_out * output)``."""
    if cache.params is not params:
        raise RuntimeError("stale cache: it was produced by a different ParamSet")
    g = np.asarray(grad_out, dtype=float)
    if g.shape != (cache.inputs[0].shape[0], params.layer_sizes[-1]):
        raise ValueError(f"output gradient shape {g.shape} does not match the forward pass")
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[k]
        h_in = cache.inputs[k]
        grads.append((h_in.T @ g, g.sum(axis=0)))
        if k > 0:
            g = (g @ W.T) * _act_grad(h_in, params.activation)
    grads.reverse()
    log_std = None if params.log_std is None else np.zeros_like(params.log_std)
    return ParamSet(grads, params.activation, params.layer_sizes, log_std)


# ---------- Adam ------------------------------------------------------------
def adam_init(params: ParamSet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps_stability: float = 1e-8) -> OptState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptState(zeros, [z.copy() for z in zeros], 0, lr, beta1, beta2, eps_stability)


def adam_step(opt: OptState, params: ParamSet, grads: ParamSet) -> tuple[ParamSet, OptState]:
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if [a.shape for a in p_arrays] != [g.shape for g in g_arrays] or \
            [a.shape for a in p_arrays] != [m.shape for m in opt.first_moment]:
        raise ValueError("parameter, gradient and moment shapes must match")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise FloatingPointError("non-finite gradient passed to adam_step")

    t = opt.step_count + 1
    corr1, corr2 = 1.0 - opt.beta1 ** t, 1.0 - opt.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, opt.first_moment, opt.second_moment):
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        new_p.append(p - opt.lr * (m / corr1) / (np.sqrt(v / corr2) + opt.eps_stability))
        new_m.append(m)
        new_v.append(v)
    out = params.with_arrays(new_p)
    if not out.is_finite():
        raise FloatingPointError("Adam produced non-finite parameters")
    return out, OptState(new_m, new_v, t, opt.lr, opt.beta1, opt.beta2, opt.eps_stability)


def global_norm(grads: ParamSet) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays()))


def clip_grad_norm(grads: ParamSet, max_norm: float) -> tuple[ParamSet, float]:
    """Rescale so the global norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-6)
    return grads.with_arrays([a * scale for a in grads.arrays()]), norm


# ---------- policy heads ----------------------------------------------------
def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=float)))


def categorical_entropy(logp_all: np.ndarray) -> np.ndarray:
    return -np.sum(np.exp(logp_all) * logp_all, axis=-1)


def categorical_act(logits, rng: np.random.Generator, greedy: bool = False):
    """Returns (action index, log_prob, entropy) for one row of logits."""
    logits = np.asarray(logits, dtype=float).reshape(-1)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError(f"non-finite logits {logits}")
    logp = log_softmax(logits)
    if greedy:
        action = int(np.argmax(logits))
    else:
        action = int(rng.choice(logits.size, p=np.exp(logp)))
    return action, float(logp[action]), float(categorical_entropy(logp))


def gaussian_log_prob(actions, mean, log_std) -> np.ndarray:
    z = (np.asarray(actions, dtype=float) - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * z.shape[-1] * LOG_2PI


def gaussian_entropy(log_std) -> float:
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + LOG_2PI))


def gaussian_act(mean, log_std, rng, greedy: bool = False, bound: float | None = None):
    """
    Returns (action, log_prob).  The log-density is taken at the unclamped
    sample; clamping to ``[-bound, bound]`` happens afterwards.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    log_std = np.asarray(log_std, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
        raise FloatingPointError("non-finite Gaussian mean or log_std")
    if greedy:
        action = mean.copy()
    else:
        action = mean + np.exp(log_std) * np.asarray(rng.standard_normal(mean.size))
    log_prob = float(gaussian_log_prob(action, mean, log_std))
    if bound is not None:
        action = np.clip(action, -bound, bound)
    return action, log_prob


# ---------- gradient verification -------------------------------------------
def finite_diff_check(params: ParamSet, loss_closure, probe_count: int = 20, *,
                      seed: int = 0, step: float = 1e-5) -> float:
    """
    Max relative error between the analytic gradient of ``loss_closure`` and
    central differences on ``probe_count`` random coordinates.

    ``loss_closure(params) -> (loss, grads)`` must be deterministic.
    """
    _, grads = loss_closure(params)
    arrays, g_arrays = params.arrays(), grads.arrays()
    sizes = np.array([a.size for a in arrays], dtype=float)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probe_count):
        k = int(rng.choice(len(arrays), p=sizes / sizes.sum()))
        idx = np.unravel_index(int(rng.integers(arrays[k].size)), arrays[k].shape)
        losses = []
        for sign in (1.0, -1.0):
            probe = [a.copy() for a in arrays]
            probe[k][idx] += sign * step
            losses.append(loss_closure(params.with_arrays(probe))[0])
        numeric = (losses[0] - losses[1]) / (2.0 * step)
        analytic = float(g_arrays[k][idx])
        denom = max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ---------- checkpoints -----------------------------------------------------
MAGIC = b"HOPEMLP1"


def save_params(params: ParamSet, path: str | Path) -> None:
    """
    Layout: magic, uint32 n_sizes, uint32 sizes..., uint8 activation index,
    uint8 has_log_std, then every W and b (and log_std) as little-endian
    row-major float64.
    """
    sizes = params.layer_sizes
    blob = bytearray(MAGIC)
    blob += struct.pack("<I", len(sizes))
    blob += struct.pack(f"<{len(sizes)}I", *sizes)
    blob += struct.pack("<BB", ACTIVATIONS.index(params.activation),
                        int(params.log_std is not None))
    for a in params.arrays():
        blob += np.ascontiguousarray(a, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_params(path: str | Path) -> ParamSet:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    sizes = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    act_idx, has_log_std = struct.unpack_from("<BB", raw, off)
    off += 2

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        return arr.astype(float)

    layers = [(take((a, b)), take((b,))) for a, b in zip(sizes[:-1], sizes[1:])]
    log_std = take((sizes[-1],)) if has_log_std else None
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return ParamSet(layers, ACTIVATIONS[act_idx], tuple(sizes), log_std)
