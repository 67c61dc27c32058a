"""Differentiable kernels with hand-written gradients.

Everything here operates on plain float64 numpy arrays.  The network
topologies built on top are small and fixed, so each kernel implements its
own backward pass instead of routing through an autodiff tape; the test
suite validates every backward against central finite differences.

Conventions: ``*_forward`` returns outputs (plus caches where needed),
``*_backward`` takes the upstream gradient and returns gradients in the
argument order of the forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_zero_norm_count = 0


def zero_norm_count() -> int:
    """How many times cosine() met a zero-norm vector since the last reset."""
    return _zero_norm_count


def reset_zero_norm_count() -> None:
    global _zero_norm_count
    _zero_norm_count = 0


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """cos(a, b) in [-1, 1]; defined as 0 for a zero-norm input (counted,
    never NaN) so an untrained decoder emitting zeros cannot poison a run."""
    global _zero_norm_count
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        _zero_norm_count += 1
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_grad_a(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """cos(a, b) and d cos / d a.  Zero-norm inputs give value 0, gradient 0."""
    global _zero_norm_count
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        _zero_norm_count += 1
        return 0.0, np.zeros_like(a)
    c = float(a @ b / (na * nb))
    grad = b / (na * nb) - c * a / (na * na)
    return c, grad


def max_margin(x: np.ndarray, pos: np.ndarray, negs) -> float:
    """max(0, 1 - cos(x, pos) + mean_i cos(x, neg_i))."""
    negs = np.atleast_2d(np.asarray(negs, dtype=np.float64))
    if negs.shape[0] == 0:
        raise ValueError("max_margin requires at least one negative")
    margin = 1.0 - cosine(x, pos) + float(np.mean([cosine(x, n) for n in negs]))
    return max(0.0, margin)


def max_margin_grad(x: np.ndarray, pos: np.ndarray, negs) -> tuple[float, np.ndarray]:
    """Loss value and its gradient w.r.t. ``x`` (zero once the hinge is flat)."""
    x = np.asarray(x, dtype=np.float64)
    negs = np.atleast_2d(np.asarray(negs, dtype=np.float64))
    if negs.shape[0] == 0:
        raise ValueError("max_margin requires at least one negative")
    c_pos, g_pos = cosine_grad_a(x, pos)
    margin = 1.0 - c_pos
    grad = -g_pos
    for n in negs:
        c_n, g_n = cosine_grad_a(x, n)
        margin += c_n / negs.shape[0]
        grad += g_n / negs.shape[0]
    if margin <= 0.0:
        return 0.0, np.zeros_like(x)
    return margin, grad


def kl_std_normal(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL( N(mu, diag(exp(logvar))) || N(0, I) ) in closed form:
    -0.5 * sum(1 + logvar - mu^2 - exp(logvar))."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError(f"shape mismatch: {mu.shape} vs {logvar.shape}")
    return float(-0.5 * np.sum(1.0 + logvar - mu ** 2 - np.exp(logvar)))


def kl_std_normal_grad(mu: np.ndarray, logvar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d KL / d mu = mu, d KL / d logvar = (exp(logvar) - 1) / 2."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return mu.copy(), 0.5 * (np.exp(logvar) - 1.0)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map x @ w + b; x may be a vector or a batch of rows."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense: input width {x.shape[-1]} vs weight rows {w.shape[0]}")
    return x @ w + b


def dense_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients (dx, dw, db) for dense_forward."""
    if x.ndim == 1:
        return g @ w.T, np.outer(x, g), g.copy()
    return g @ w.T, x.T @ g, g.sum(axis=0)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Backward through tanh given the forward output ``y``."""
    return g * (1.0 - y * y)


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray,
                   padding: int = 1) -> np.ndarray:
    """2-D convolution, stride 1, no dilation.

    ``x`` is (C, H, W), ``k`` is (O, C, KH, KW), ``b`` is (O,).  The default
    padding of 1 keeps a 3x3 kernel size-preserving.
    """
    cin, h, w = x.shape
    cout, cin_k, kh, kw = k.shape
    if cin != cin_k:
        raise ValueError(f"conv2d: input channels {cin} vs kernel channels {cin_k}")
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {xp.shape[1:]}")
    out = np.zeros((cout, ho, wo))
    for di in range(kh):
        for dj in range(kw):
            out += np.einsum("oc,chw->ohw", k[:, :, di, dj],
                             xp[:, di:di + ho, dj:dj + wo], optimize=True)
    return out + b[:, None, None]


def conv2d_backward(g: np.ndarray, x: np.ndarray, k: np.ndarray,
                    padding: int = 1):
    """Gradients (dx, dk, db) for conv2d_forward."""
    cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
    ho, wo = g.shape[1], g.shape[2]
    dxp = np.zeros_like(xp)
    dk = np.zeros_like(k)
    for di in range(kh):
        for dj in range(kw):
            dk[:, :, di, dj] = np.einsum("ohw,chw->oc", g,
                                         xp[:, di:di + ho, dj:dj + wo], optimize=True)
            dxp[:, di:di + ho, dj:dj + wo] += np.einsum(
                "oc,ohw->chw", k[:, :, di, dj], g, optimize=True)
    dx = dxp[:, padding:padding + h, padding:padding + w] if padding else dxp
    return dx, dk, g.sum(axis=(1, 2))


@dataclass
class GaussianLatent:
    """A reparameterized draw: sample = mu + exp(logvar / 2) * epsilon."""

    mu: np.ndarray
    logvar: np.ndarray
    sample: np.ndarray
    epsilon: np.ndarray


def reparam_sample(mu: np.ndarray, logvar: np.ndarray,
                   rng: np.random.Generator | None = None,
                   epsilon: np.ndarray | None = None) -> GaussianLatent:
    """Draw via the reparameterization trick; pass ``epsilon`` explicitly
    (e.g. zeros at inference) instead of a generator for a fixed draw."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError(f"shape mismatch: {mu.shape} vs {logvar.shape}")
    if epsilon is None:
        if rng is None:
            raise ValueError("reparam_sample needs an rng or an explicit epsilon")
        epsilon = rng.standard_normal(mu.shape)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    sample = mu + np.exp(logvar / 2.0) * epsilon
    return GaussianLatent(mu=mu, logvar=logvar, sample=sample, epsilon=epsilon)


def reparam_backward(g: np.ndarray, latent: GaussianLatent) -> tuple[np.ndarray, np.ndarray]:
    """Gradients (dmu, dlogvar) of the sample w.r.t. its parameters."""
    dmu = g.copy()
    dlogvar = g * 0.5 * np.exp(latent.logvar / 2.0) * latent.epsilon
    return dmu, dlogvar


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameter dict."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 0.001,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place over ``params``."""
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"adam: gradient shape {g.shape} vs parameter {p.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
