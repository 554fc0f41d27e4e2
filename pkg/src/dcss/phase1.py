"""Phase-1 training: per-batch K successive runs on cluster-specific losses.

Each run k minimizes a weighted sum of reconstruction and centering terms,
with the membership weights recomputed from the current latent codes and
treated as constants inside the run. The aggregated variant sums all K
cluster losses and takes a single step per batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .membership import memberships, update_centers
from .nn import AdamState, MlpParams, adam_step, mlp_backward, mlp_forward


@dataclass
class LossBreakdown:
    """Components of one cluster-specific loss: total = reconstruction + alpha*centering."""

    reconstruction: float
    centering: float
    alpha: float
    total: float


@dataclass
class ClusterGrads:
    encoder: MlpParams
    decoder: MlpParams


@dataclass
class Phase1LogEntry:
    epoch: int
    mean_lr: float
    mean_lc: float
    mean_lu: float
    centers_updated: bool


@dataclass
class Phase1State:
    """Networks, optimizer moments, centers, and the optimizer-step counter."""

    encoder: MlpParams
    decoder: MlpParams
    opt_encoder: AdamState
    opt_decoder: AdamState
    centers: np.ndarray
    steps: int = 0

    @classmethod
    def fresh(cls, encoder, decoder, centers):
        return cls(
            encoder=encoder,
            decoder=decoder,
            opt_encoder=AdamState.zeros_like(encoder),
            opt_decoder=AdamState.zeros_like(decoder),
            centers=centers,
        )


def iter_batches(n, batch_size, rng):
    """Sequential batches over a seed-shuffled permutation; last batch may be short."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _loss_value_fixed_weights(encoder, decoder, batch, center, weights, alpha):
    """Loss value with the membership weights held fixed (the differentiated function)."""
    u, _ = mlp_forward(encoder, batch)
    xhat, _ = mlp_forward(decoder, u)
    recon = ((batch - xhat) ** 2).sum(axis=1)
    cent = ((u - center) ** 2).sum(axis=1)
    return float((weights * recon).sum() + alpha * (weights * cent).sum())


def cluster_loss(batch, k, encoder, decoder, centers, alpha, m, with_grads=False):
    """Cluster-k loss over a batch; optionally its gradients w.r.t. both nets.

    Memberships are computed from the current latent codes and enter the
    gradient only as constant weights (no gradient flows through them).
    k is a 0-based cluster index.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    n_clusters = centers.shape[0]
    if not 0 <= k < n_clusters:
        raise IndexError(f"cluster index {k} out of range [0, {n_clusters})")
    batch = np.asarray(batch, dtype=np.float64)
    u, enc_cache = mlp_forward(encoder, batch)
    xhat, dec_cache = mlp_forward(decoder, u)
    p = memberships(u, centers, m)
    w = p[:, k] ** m
    recon = ((batch - xhat) ** 2).sum(axis=1)
    cent = ((u - centers[k]) ** 2).sum(axis=1)
    loss_r = float((w * recon).sum())
    loss_c = float((w * cent).sum())
    breakdown = LossBreakdown(loss_r, loss_c, alpha, loss_r + alpha * loss_c)
    if not with_grads:
        return breakdown
    g_xhat = -2.0 * w[:, None] * (batch - xhat)
    dec_grads, g_u = mlp_backward(decoder, dec_cache, g_xhat)
    g_u = g_u + 2.0 * alpha * w[:, None] * (u - centers[k])
    enc_grads, _ = mlp_backward(encoder, enc_cache, g_u)
    return breakdown, ClusterGrads(enc_grads, dec_grads)


def phase1_epoch(data, state, cfg, rng, epoch_index):
    """One epoch of K successive runs per batch; refreshes centers every t1 epochs.

    epoch_index is 1-based; centers are recomputed over the full dataset after
    epochs t1, 2*t1, ...
    """
    sums = np.zeros(3)
    runs = 0
    for idx in iter_batches(data.shape[0], cfg.batch_size, rng):
        batch = data[idx]
        for k in range(cfg.k):
            breakdown, grads = cluster_loss(
                batch, k, state.encoder, state.decoder, state.centers, cfg.alpha, cfg.m,
                with_grads=True,
            )
            state.encoder, state.opt_encoder = adam_step(
                state.encoder, grads.encoder, state.opt_encoder, cfg.lr_phase1
            )
            state.decoder, state.opt_decoder = adam_step(
                state.decoder, grads.decoder, state.opt_decoder, cfg.lr_phase1
            )
            state.steps += 1
            sums += (breakdown.reconstruction, breakdown.centering, breakdown.total)
            runs += 1
    updated = epoch_index % cfg.t1 == 0
    if updated:
        u, _ = mlp_forward(state.encoder, data)
        state.centers = update_centers(u, memberships(u, state.centers, cfg.m), cfg.m)
    mean_lr, mean_lc, mean_lu = sums / runs
    return state, Phase1LogEntry(epoch_index, mean_lr, mean_lc, mean_lu, updated)


def aggregated_loss(batch, encoder, decoder, centers, alpha, m, with_grads=False):
    """Sum of all K cluster losses at one parameter point (single-step ablation)."""
    batch = np.asarray(batch, dtype=np.float64)
    u, enc_cache = mlp_forward(encoder, batch)
    xhat, dec_cache = mlp_forward(decoder, u)
    p = memberships(u, centers, m)
    f = p**m
    w_recon = f.sum(axis=1)
    recon = ((batch - xhat) ** 2).sum(axis=1)
    cent = ((u[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    loss_r = float((w_recon * recon).sum())
    loss_c = float((f * cent).sum())
    breakdown = LossBreakdown(loss_r, loss_c, alpha, loss_r + alpha * loss_c)
    if not with_grads:
        return breakdown
    g_xhat = -2.0 * w_recon[:, None] * (batch - xhat)
    dec_grads, g_u = mlp_backward(decoder, dec_cache, g_xhat)
    g_u = g_u + 2.0 * alpha * (w_recon[:, None] * u - f @ centers)
    enc_grads, _ = mlp_backward(encoder, enc_cache, g_u)
    return breakdown, ClusterGrads(enc_grads, dec_grads)


def phase1_aggregated_epoch(data, state, cfg, rng, epoch_index):
    """Aggregated-loss epoch: one optimizer step per batch on the summed loss.

    Logged values are divided by K so they stay comparable with the per-run
    means recorded by phase1_epoch.
    """
    sums = np.zeros(3)
    batches = 0
    for idx in iter_batches(data.shape[0], cfg.batch_size, rng):
        batch = data[idx]
        breakdown, grads = aggregated_loss(
            batch, state.encoder, state.decoder, state.centers, cfg.alpha, cfg.m,
            with_grads=True,
        )
        state.encoder, state.opt_encoder = adam_step(
            state.encoder, grads.encoder, state.opt_encoder, cfg.lr_phase1
        )
        state.decoder, state.opt_decoder = adam_step(
            state.decoder, grads.decoder, state.opt_decoder, cfg.lr_phase1
        )
        state.steps += 1
        sums += (breakdown.reconstruction, breakdown.centering, breakdown.total)
        batches += 1
    updated = epoch_index % cfg.t1 == 0
    if updated:
        u, _ = mlp_forward(state.encoder, data)
        state.centers = update_centers(u, memberships(u, state.centers, cfg.m), cfg.m)
    mean_lr, mean_lc, mean_lu = sums / (batches * cfg.k)
    return state, Phase1LogEntry(epoch_index, mean_lr, mean_lc, mean_lu, updated)


def pretrain_reconstruction(data, encoder, decoder, epochs, lr, batch_size, rng):
    """Plain mean-reconstruction pretraining; returns (encoder, decoder, epoch losses)."""
    opt_enc = AdamState.zeros_like(encoder)
    opt_dec = AdamState.zeros_like(decoder)
    losses = []
    for _ in range(epochs):
        total = 0.0
        batches = 0
        for idx in iter_batches(data.shape[0], batch_size, rng):
            batch = data[idx]
            u, enc_cache = mlp_forward(encoder, batch)
            xhat, dec_cache = mlp_forward(decoder, u)
            diff = batch - xhat
            total += float((diff**2).sum(axis=1).mean())
            batches += 1
            g_xhat = -2.0 * diff / batch.shape[0]
            dec_grads, g_u = mlp_backward(decoder, dec_cache, g_xhat)
            enc_grads, _ = mlp_backward(encoder, enc_cache, g_u)
            encoder, opt_enc = adam_step(encoder, enc_grads, opt_enc, lr)
            decoder, opt_dec = adam_step(decoder, dec_grads, opt_dec, lr)
        losses.append(total / batches)
    return encoder, decoder, losses
