"""The two-level sentence/task architecture and the FFNN/CNN baselines.

The two-level model compresses each of the 7 context sentences through a
shared variational encode-decode ("sentence level", latent size 5), stacks
the sampled latents and pushes them through a per-task module ("task
level", latent size 16) that emits a candidate-space vector ``answ``.
Training pulls ``answ`` toward the correct candidate and the per-sentence
reconstructions toward their inputs with max-margin losses over cosine
similarity, each regularized by a KL term toward the standard normal.

All gradients are computed analytically from the kernels in
:mod:`blmkit.nn`; parameters live in flat name->array dicts so the
optimizer, checkpointing and the multi-task head routing stay trivial.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import BlmInstance, Task
from .embeddings import EmbeddingStore
from .nn import (
    AdamState,
    conv2d_backward,
    conv2d_forward,
    cosine,
    cosine_grad_a,
    dense_backward,
    dense_forward,
    kl_std_normal,
    kl_std_normal_grad,
    max_margin,
    max_margin_grad,
    tanh_backward,
    tanh_forward,
)

NEGATIVES_POLICIES = ("context+answer", "duplicate-context", "context-only")


def _init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)), np.zeros(n_out)


# --- two-level model -------------------------------------------------------

@dataclass
class TwoLevelModel:
    dim: int
    tasks: tuple[Task, ...]
    sent_hidden: int = 128
    sent_latent: int = 5
    task_hidden: int = 64
    task_latent: int = 16
    params: dict[str, np.ndarray] = None

    kind = "two-level"

    @classmethod
    def create(cls, dim: int, tasks, rng: np.random.Generator, *,
               sent_hidden: int = 128, sent_latent: int = 5,
               task_hidden: int = 64, task_latent: int = 16) -> "TwoLevelModel":
        tasks = tuple(sorted(set(tasks), key=lambda t: t.value))
        if not tasks:
            raise ValueError("a two-level model needs at least one task head")
        model = cls(dim=dim, tasks=tasks, sent_hidden=sent_hidden,
                    sent_latent=sent_latent, task_hidden=task_hidden,
                    task_latent=task_latent, params={})
        p = model.params
        p["sent.enc1.w"], p["sent.enc1.b"] = _init_dense(rng, dim, sent_hidden)
        p["sent.enc2.w"], p["sent.enc2.b"] = _init_dense(rng, sent_hidden, 2 * sent_latent)
        p["sent.dec1.w"], p["sent.dec1.b"] = _init_dense(rng, sent_latent, sent_hidden)
        p["sent.dec2.w"], p["sent.dec2.b"] = _init_dense(rng, sent_hidden, dim)
        for task in tasks:
            pre = f"head.{task.value}"
            p[f"{pre}.enc1.w"], p[f"{pre}.enc1.b"] = _init_dense(rng, 7 * sent_latent, task_hidden)
            p[f"{pre}.enc2.w"], p[f"{pre}.enc2.b"] = _init_dense(rng, task_hidden, 2 * task_latent)
            p[f"{pre}.dec1.w"], p[f"{pre}.dec1.b"] = _init_dense(rng, task_latent, task_hidden)
            p[f"{pre}.dec2.w"], p[f"{pre}.dec2.b"] = _init_dense(rng, task_hidden, dim)
        return model

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "tasks": [t.value for t in self.tasks],
            "sent_hidden": self.sent_hidden,
            "sent_latent": self.sent_latent,
            "task_hidden": self.task_hidden,
            "task_latent": self.task_latent,
        }

    @classmethod
    def from_describe(cls, arch: dict) -> "TwoLevelModel":
        return cls(dim=arch["dim"], tasks=tuple(Task(t) for t in arch["tasks"]),
                   sent_hidden=arch["sent_hidden"], sent_latent=arch["sent_latent"],
                   task_hidden=arch["task_hidden"], task_latent=arch["task_latent"],
                   params={})

    def head_prefix(self, task: Task) -> str:
        if task not in self.tasks:
            raise ValueError(f"model has no head for task {task.value}")
        return f"head.{task.value}"


@dataclass
class _VaeCache:
    x: np.ndarray
    h_enc: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    epsilon: np.ndarray
    sample: np.ndarray
    h_dec: np.ndarray
    xhat: np.ndarray


def _vae_forward(params: dict, x: np.ndarray, epsilon: np.ndarray,
                 latent: int) -> _VaeCache:
    h_enc = tanh_forward(dense_forward(x, params["sent.enc1.w"], params["sent.enc1.b"]))
    stats = dense_forward(h_enc, params["sent.enc2.w"], params["sent.enc2.b"])
    mu, logvar = stats[..., :latent], stats[..., latent:]
    sample = mu + np.exp(logvar / 2.0) * epsilon
    h_dec = tanh_forward(dense_forward(sample, params["sent.dec1.w"], params["sent.dec1.b"]))
    xhat = dense_forward(h_dec, params["sent.dec2.w"], params["sent.dec2.b"])
    return _VaeCache(x, h_enc, mu, logvar, epsilon, sample, h_dec, xhat)


def _vae_backward(params: dict, cache: _VaeCache, d_xhat: np.ndarray,
                  d_sample_extra: np.ndarray, d_mu_extra: np.ndarray,
                  d_logvar_extra: np.ndarray, grads: dict) -> None:
    d_hdec, dw, db = dense_backward(d_xhat, cache.h_dec, params["sent.dec2.w"])
    _acc(grads, "sent.dec2.w", dw); _acc(grads, "sent.dec2.b", db)
    d_a = tanh_backward(d_hdec, cache.h_dec)
    d_sample, dw, db = dense_backward(d_a, cache.sample, params["sent.dec1.w"])
    _acc(grads, "sent.dec1.w", dw); _acc(grads, "sent.dec1.b", db)
    d_sample = d_sample + d_sample_extra
    d_mu = d_sample + d_mu_extra
    d_logvar = d_sample * 0.5 * np.exp(cache.logvar / 2.0) * cache.epsilon + d_logvar_extra
    d_stats = np.concatenate([d_mu, d_logvar], axis=-1)
    d_henc, dw, db = dense_backward(d_stats, cache.h_enc, params["sent.enc2.w"])
    _acc(grads, "sent.enc2.w", dw); _acc(grads, "sent.enc2.b", db)
    d_a = tanh_backward(d_henc, cache.h_enc)
    _, dw, db = dense_backward(d_a, cache.x, params["sent.enc1.w"])
    _acc(grads, "sent.enc1.w", dw); _acc(grads, "sent.enc1.b", db)


@dataclass
class _HeadCache:
    s_flat: np.ndarray
    h_enc: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    epsilon: np.ndarray
    sample: np.ndarray
    h_dec: np.ndarray
    answ: np.ndarray


def _head_forward(params: dict, prefix: str, s_flat: np.ndarray,
                  epsilon: np.ndarray, latent: int) -> _HeadCache:
    h_enc = tanh_forward(dense_forward(s_flat, params[f"{prefix}.enc1.w"], params[f"{prefix}.enc1.b"]))
    stats = dense_forward(h_enc, params[f"{prefix}.enc2.w"], params[f"{prefix}.enc2.b"])
    mu, logvar = stats[:latent], stats[latent:]
    sample = mu + np.exp(logvar / 2.0) * epsilon
    h_dec = tanh_forward(dense_forward(sample, params[f"{prefix}.dec1.w"], params[f"{prefix}.dec1.b"]))
    answ = dense_forward(h_dec, params[f"{prefix}.dec2.w"], params[f"{prefix}.dec2.b"])
    return _HeadCache(s_flat, h_enc, mu, logvar, epsilon, sample, h_dec, answ)


def _head_backward(params: dict, prefix: str, cache: _HeadCache, d_answ: np.ndarray,
                   d_mu_extra: np.ndarray, d_logvar_extra: np.ndarray,
                   grads: dict) -> np.ndarray:
    """Returns the gradient w.r.t. the stacked sentence latents."""
    d_hdec, dw, db = dense_backward(d_answ, cache.h_dec, params[f"{prefix}.dec2.w"])
    _acc(grads, f"{prefix}.dec2.w", dw); _acc(grads, f"{prefix}.dec2.b", db)
    d_a = tanh_backward(d_hdec, cache.h_dec)
    d_sample, dw, db = dense_backward(d_a, cache.sample, params[f"{prefix}.dec1.w"])
    _acc(grads, f"{prefix}.dec1.w", dw); _acc(grads, f"{prefix}.dec1.b", db)
    d_mu = d_sample + d_mu_extra
    d_logvar = d_sample * 0.5 * np.exp(cache.logvar / 2.0) * cache.epsilon + d_logvar_extra
    d_stats = np.concatenate([d_mu, d_logvar])
    d_henc, dw, db = dense_backward(d_stats, cache.h_enc, params[f"{prefix}.enc2.w"])
    _acc(grads, f"{prefix}.enc2.w", dw); _acc(grads, f"{prefix}.enc2.b", db)
    d_a = tanh_backward(d_henc, cache.h_enc)
    d_sflat, dw, db = dense_backward(d_a, cache.s_flat, params[f"{prefix}.enc1.w"])
    _acc(grads, f"{prefix}.enc1.w", dw); _acc(grads, f"{prefix}.enc1.b", db)
    return d_sflat


def _acc(grads: dict, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


# --- negative selection ----------------------------------------------------

def sentence_negative_ids(instance: BlmInstance, k: int,
                          policy: str = "context+answer") -> list[str]:
    """Contrastive negatives for context sentence ``k``: the 6 other context
    sentences, topped up to 7 per the configured policy."""
    if not 0 <= k < 7:
        raise ValueError(f"context index must be in [0, 7), got {k}")
    if policy not in NEGATIVES_POLICIES:
        raise ValueError(f"unknown negatives policy {policy!r}")
    others = [rec.id for i, rec in enumerate(instance.context) if i != k]
    if policy == "context-only":
        return others
    if policy == "duplicate-context":
        return others + [others[k % len(others)]]
    distractors = [rec.id for i, (rec, _) in enumerate(instance.answers)
                   if i != instance.correct_index]
    return others + [distractors[k % len(distractors)]]


def sentence_negatives(instance: BlmInstance, k: int, store: EmbeddingStore,
                       policy: str = "context+answer") -> np.ndarray:
    return store.matrix(sentence_negative_ids(instance, k, policy))


# --- losses ------------------------------------------------------------

def sentence_loss(model: TwoLevelModel, x: np.ndarray, negs: np.ndarray,
                  rng: np.random.Generator | None = None,
                  epsilon: np.ndarray | None = None,
                  kl_weight: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Reconstruction max-margin plus KL for one sentence, with gradients
    for every shared parameter."""
    if epsilon is None:
        if rng is None:
            raise ValueError("sentence_loss needs an rng or an explicit epsilon")
        epsilon = rng.standard_normal(model.sent_latent)
    cache = _vae_forward(model.params, x[None, :], epsilon[None, :], model.sent_latent)
    margin, d_xhat = max_margin_grad(cache.xhat[0], x, negs)
    kl = kl_std_normal(cache.mu[0], cache.logvar[0])
    d_mu_kl, d_logvar_kl = kl_std_normal_grad(cache.mu[0], cache.logvar[0])
    grads: dict[str, np.ndarray] = {}
    _vae_backward(model.params, cache, d_xhat[None, :],
                  np.zeros((1, model.sent_latent)),
                  kl_weight * d_mu_kl[None, :], kl_weight * d_logvar_kl[None, :], grads)
    return margin + kl_weight * kl, grads


def task_forward(model: TwoLevelModel, task: Task, latents: np.ndarray,
                 rng: np.random.Generator | None = None,
                 epsilon: np.ndarray | None = None):
    """Map the stacked 7 sentence latents to (answ, mu, logvar)."""
    if latents.shape != (7, model.sent_latent):
        raise ValueError(f"latents must be (7, {model.sent_latent}), got {latents.shape}")
    if epsilon is None:
        if rng is None:
            epsilon = np.zeros(model.task_latent)
        else:
            epsilon = rng.standard_normal(model.task_latent)
    cache = _head_forward(model.params, model.head_prefix(task),
                          latents.reshape(-1), epsilon, model.task_latent)
    return cache.answ, cache.mu, cache.logvar


def task_loss(answ: np.ndarray, correct: np.ndarray, distractors: np.ndarray,
              mu: np.ndarray, logvar: np.ndarray, kl_weight: float = 1.0) -> float:
    """Answer-space max-margin plus the sequence-level KL."""
    distractors = np.atleast_2d(distractors)
    if distractors.shape[0] != 7:
        raise ValueError(f"expected 7 distractors, got {distractors.shape[0]}")
    return max_margin(answ, correct, distractors) + kl_weight * kl_std_normal(mu, logvar)


@dataclass
class InstanceLoss:
    total: float
    sentence_term: float
    task_term: float
    grads: dict[str, np.ndarray]


def instance_loss_grads(model: TwoLevelModel, task: Task, ctx: np.ndarray,
                        cands: np.ndarray, correct_index: int, negs: np.ndarray,
                        eps_sent: np.ndarray, eps_task: np.ndarray,
                        kl_weight: float = 1.0) -> InstanceLoss:
    """Loss and gradients for one instance: the 7 sentence losses plus the
    task loss, backpropagated through the shared sentence level once with
    both paths' contributions accumulated.

    ``ctx`` is (7, dim), ``cands`` (8, dim), ``negs`` (7, n_negs, dim).
    """
    params = model.params
    prefix = model.head_prefix(task)
    vae = _vae_forward(params, ctx, eps_sent, model.sent_latent)

    sentence_term = 0.0
    d_xhat = np.zeros_like(vae.xhat)
    for k in range(7):
        margin, g = max_margin_grad(vae.xhat[k], ctx[k], negs[k])
        sentence_term += margin + kl_weight * kl_std_normal(vae.mu[k], vae.logvar[k])
        d_xhat[k] = g
    d_mu_kl, d_logvar_kl = kl_std_normal_grad(vae.mu, vae.logvar)

    head = _head_forward(params, prefix, vae.sample.reshape(-1), eps_task, model.task_latent)
    distractors = np.delete(cands, correct_index, axis=0)
    margin_task, d_answ = max_margin_grad(head.answ, cands[correct_index], distractors)
    task_term = margin_task + kl_weight * kl_std_normal(head.mu, head.logvar)
    d_muS_kl, d_logvarS_kl = kl_std_normal_grad(head.mu, head.logvar)

    grads: dict[str, np.ndarray] = {}
    d_sflat = _head_backward(params, prefix, head, d_answ,
                             kl_weight * d_muS_kl, kl_weight * d_logvarS_kl, grads)
    _vae_backward(params, vae, d_xhat, d_sflat.reshape(7, model.sent_latent),
                  kl_weight * d_mu_kl, kl_weight * d_logvar_kl, grads)
    return InstanceLoss(total=sentence_term + task_term, sentence_term=sentence_term,
                        task_term=task_term, grads=grads)


def instance_embeddings(instance: BlmInstance, store: EmbeddingStore):
    ctx = store.matrix([r.id for r in instance.context])
    cands = store.matrix([r.id for r, _ in instance.answers])
    return ctx, cands


def instance_loss(model: TwoLevelModel, instance: BlmInstance, store: EmbeddingStore,
                  rng: np.random.Generator, kl_weight: float = 1.0,
                  negatives_policy: str = "context+answer") -> InstanceLoss:
    """Resolve embeddings from the store, draw the latent noise and compute
    the full two-level loss with gradients."""
    ctx, cands = instance_embeddings(instance, store)
    negs = np.stack([sentence_negatives(instance, k, store, negatives_policy)
                     for k in range(7)])
    eps_sent = rng.standard_normal((7, model.sent_latent))
    eps_task = rng.standard_normal(model.task_latent)
    return instance_loss_grads(model, instance.task, ctx, cands,
                               instance.correct_index, negs, eps_sent, eps_task,
                               kl_weight)


# --- baselines --------------------------------------------------------------

@dataclass
class FfnnBaseline:
    """Three dense layers compressing the concatenated context sequence
    (7d -> 3.5d -> 3.5d -> d) with tanh between layers."""

    dim: int
    params: dict[str, np.ndarray] = None

    kind = "ffnn"

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator) -> "FfnnBaseline":
        if (7 * dim) % 2:
            raise ValueError(f"ffnn hidden width 3.5*dim must be an integer; dim={dim}")
        hidden = 7 * dim // 2
        model = cls(dim=dim, params={})
        p = model.params
        p["ffnn.l1.w"], p["ffnn.l1.b"] = _init_dense(rng, 7 * dim, hidden)
        p["ffnn.l2.w"], p["ffnn.l2.b"] = _init_dense(rng, hidden, hidden)
        p["ffnn.l3.w"], p["ffnn.l3.b"] = _init_dense(rng, hidden, dim)
        return model

    @property
    def hidden(self) -> int:
        return 7 * self.dim // 2

    def describe(self) -> dict:
        return {"dim": self.dim}

    @classmethod
    def from_describe(cls, arch: dict) -> "FfnnBaseline":
        return cls(dim=arch["dim"], params={})


@dataclass
class CnnBaseline:
    """Three 3x3/stride-1 convolutions over the (7, d) sequence array, then
    one dense layer back to a d-dim prediction."""

    dim: int
    channels: int = 16
    params: dict[str, np.ndarray] = None

    kind = "cnn"

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator, channels: int = 16) -> "CnnBaseline":
        model = cls(dim=dim, channels=channels, params={})
        p = model.params
        for i, (cin, cout) in enumerate([(1, channels), (channels, channels),
                                         (channels, channels)], start=1):
            p[f"cnn.conv{i}.k"] = rng.normal(0.0, 1.0 / np.sqrt(cin * 9), size=(cout, cin, 3, 3))
            p[f"cnn.conv{i}.b"] = np.zeros(cout)
        p["cnn.fc.w"], p["cnn.fc.b"] = _init_dense(rng, channels * 7 * dim, dim)
        return model

    def describe(self) -> dict:
        return {"dim": self.dim, "channels": self.channels}

    @classmethod
    def from_describe(cls, arch: dict) -> "CnnBaseline":
        return cls(dim=arch["dim"], channels=arch["channels"], params={})


def baseline_forward(model, ctx: np.ndarray):
    """Predict an answer embedding from the (7, dim) context block.

    Returns (e_pred, cache) where cache feeds baseline_backward.
    """
    p = model.params
    if model.kind == "ffnn":
        x = ctx.reshape(-1)
        h1 = tanh_forward(dense_forward(x, p["ffnn.l1.w"], p["ffnn.l1.b"]))
        h2 = tanh_forward(dense_forward(h1, p["ffnn.l2.w"], p["ffnn.l2.b"]))
        out = dense_forward(h2, p["ffnn.l3.w"], p["ffnn.l3.b"])
        return out, (x, h1, h2)
    if model.kind == "cnn":
        x = ctx[None, :, :]
        h1 = tanh_forward(conv2d_forward(x, p["cnn.conv1.k"], p["cnn.conv1.b"]))
        h2 = tanh_forward(conv2d_forward(h1, p["cnn.conv2.k"], p["cnn.conv2.b"]))
        h3 = tanh_forward(conv2d_forward(h2, p["cnn.conv3.k"], p["cnn.conv3.b"]))
        flat = h3.reshape(-1)
        out = dense_forward(flat, p["cnn.fc.w"], p["cnn.fc.b"])
        return out, (x, h1, h2, h3, flat)
    raise ValueError(f"not a baseline model: {model.kind}")


def baseline_backward(model, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    p = model.params
    grads: dict[str, np.ndarray] = {}
    if model.kind == "ffnn":
        x, h1, h2 = cache
        d_h2, dw, db = dense_backward(d_out, h2, p["ffnn.l3.w"])
        grads["ffnn.l3.w"], grads["ffnn.l3.b"] = dw, db
        d_a2 = tanh_backward(d_h2, h2)
        d_h1, dw, db = dense_backward(d_a2, h1, p["ffnn.l2.w"])
        grads["ffnn.l2.w"], grads["ffnn.l2.b"] = dw, db
        d_a1 = tanh_backward(d_h1, h1)
        _, dw, db = dense_backward(d_a1, x, p["ffnn.l1.w"])
        grads["ffnn.l1.w"], grads["ffnn.l1.b"] = dw, db
        return grads
    x, h1, h2, h3, flat = cache
    d_flat, dw, db = dense_backward(d_out, flat, p["cnn.fc.w"])
    grads["cnn.fc.w"], grads["cnn.fc.b"] = dw, db
    d_c3 = tanh_backward(d_flat.reshape(h3.shape), h3)
    d_h2, dk, db = conv2d_backward(d_c3, h2, p["cnn.conv3.k"])
    grads["cnn.conv3.k"], grads["cnn.conv3.b"] = dk, db
    d_c2 = tanh_backward(d_h2, h2)
    d_h1, dk, db = conv2d_backward(d_c2, h1, p["cnn.conv2.k"])
    grads["cnn.conv2.k"], grads["cnn.conv2.b"] = dk, db
    d_c1 = tanh_backward(d_h1, h1)
    _, dk, db = conv2d_backward(d_c1, x, p["cnn.conv1.k"])
    grads["cnn.conv1.k"], grads["cnn.conv1.b"] = dk, db
    return grads


def baseline_loss(e_pred: np.ndarray, e_c: np.ndarray, others: np.ndarray) -> float:
    """Per-distractor hinge, summed (not averaged):
    sum_i [1 - cos(e_c, e_pred) + cos(e_i, e_pred)]^+."""
    others = np.atleast_2d(others)
    c_pos = cosine(e_c, e_pred)
    return float(sum(max(0.0, 1.0 - c_pos + cosine(e_i, e_pred)) for e_i in others))


def baseline_loss_grad(e_pred: np.ndarray, e_c: np.ndarray,
                       others: np.ndarray) -> tuple[float, np.ndarray]:
    others = np.atleast_2d(others)
    c_pos, g_pos = cosine_grad_a(e_pred, e_c)
    total = 0.0
    grad = np.zeros_like(e_pred)
    for e_i in others:
        c_neg, g_neg = cosine_grad_a(e_pred, e_i)
        hinge = 1.0 - c_pos + c_neg
        if hinge > 0.0:
            total += hinge
            grad += g_neg - g_pos
    return total, grad


def baseline_instance_loss(model, instance: BlmInstance,
                           store: EmbeddingStore) -> InstanceLoss:
    ctx, cands = instance_embeddings(instance, store)
    e_pred, cache = baseline_forward(model, ctx)
    others = np.delete(cands, instance.correct_index, axis=0)
    loss, d_pred = baseline_loss_grad(e_pred, cands[instance.correct_index], others)
    grads = baseline_backward(model, cache, d_pred)
    return InstanceLoss(total=loss, sentence_term=0.0, task_term=loss, grads=grads)


# --- prediction --------------------------------------------------------------

def predict(model, instance: BlmInstance, store: EmbeddingStore) -> tuple[int, np.ndarray]:
    """Choose the candidate whose embedding is most cosine-similar to the
    model's constructed answer.  Inference is deterministic: the latent
    noise is fixed to zero, and ties break toward the lowest index."""
    ctx, cands = instance_embeddings(instance, store)
    if model.kind == "two-level":
        vae = _vae_forward(model.params, ctx, np.zeros((7, model.sent_latent)),
                           model.sent_latent)
        answ, _, _ = task_forward(model, instance.task, vae.sample,
                                  epsilon=np.zeros(model.task_latent))
    else:
        answ, _ = baseline_forward(model, ctx)
    scores = np.array([cosine(answ, cand) for cand in cands])
    return int(np.argmax(scores)), scores


# --- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"BLMC"
CKPT_VERSION = 1

_MODEL_KINDS = {
    "two-level": TwoLevelModel,
    "ffnn": FfnnBaseline,
    "cnn": CnnBaseline,
}


@dataclass
class Checkpoint:
    model: object
    adam: AdamState | None
    rng_state: dict | None
    epoch: int
    meta: dict


def save_checkpoint(path: str | Path, model, *, adam: AdamState | None = None,
                    rng_state: dict | None = None, epoch: int = 0,
                    meta: dict | None = None) -> None:
    names = sorted(model.params)
    header = {
        "kind": model.kind,
        "arch": model.describe(),
        "epoch": epoch,
        "meta": meta or {},
        "rng_state": rng_state,
        "adam": None if adam is None else {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "step": adam.step,
        },
        "tensors": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQ", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())
        if adam is not None:
            for moments in (adam.m, adam.v):
                for n in names:
                    fh.write(np.ascontiguousarray(moments[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, blob_len = struct.unpack_from("<IQ", data, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + blob_len].decode("utf-8"))
    model = _MODEL_KINDS[header["kind"]].from_describe(header["arch"])
    offset = 16 + blob_len

    def read_tensors() -> dict[str, np.ndarray]:
        nonlocal offset
        out = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            out[spec["name"]] = arr.reshape(shape).copy()
        return out

    model.params = read_tensors()
    adam = None
    if header["adam"] is not None:
        a = header["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                         eps=a["eps"], step=a["step"], m=read_tensors(), v=read_tensors())
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing byte(s)")
    return Checkpoint(model=model, adam=adam, rng_state=header["rng_state"],
                      epoch=header["epoch"], meta=header["meta"])
