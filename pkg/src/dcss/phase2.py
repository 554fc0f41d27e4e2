"""Phase-2 training: MNet over the encoder with pairwise-similarity losses.

For the first t2 epochs pairs are gated by membership inner products in the
latent space (and centers keep refreshing after each epoch); afterwards the
gates come from MNet's own output space and centers are frozen. Gates are
indicators, so gradients flow only through the inner-product terms of gated
pairs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .membership import memberships, update_centers
from .nn import AdamState, MlpParams, adam_step, mlp_backward, mlp_forward
from .phase1 import iter_batches

SIMPLEX_TOL = 1e-6


@dataclass
class PairThresholds:
    """Similarity gate zeta and dissimilarity gate gamma, 0 <= gamma < zeta <= 1."""

    zeta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < self.zeta <= 1.0:
            raise ConfigError(
                f"thresholds must satisfy 0 <= gamma < zeta <= 1, got "
                f"zeta={self.zeta}, gamma={self.gamma}"
            )


@dataclass
class PairLossReport:
    """Loss value plus the ordered-pair gate census (counts sum to B^2)."""

    loss: float
    n_similar: int
    n_dissimilar: int
    n_ambiguous: int
    source: str  # "u-space" or "q-space"


@dataclass
class Phase2State:
    encoder: MlpParams
    mnet: MlpParams
    opt_encoder: AdamState
    opt_mnet: AdamState
    centers: np.ndarray
    steps: int = 0

    @classmethod
    def fresh(cls, encoder, mnet, centers):
        return cls(
            encoder=encoder,
            mnet=mnet,
            opt_encoder=AdamState.zeros_like(encoder),
            opt_mnet=AdamState.zeros_like(mnet),
            centers=centers,
        )


def _require_simplex(rows):
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ContractError(f"expected 2-D simplex rows, got shape {rows.shape}")
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ContractError(f"row {worst} sums to {sums[worst]:.9f}, not 1")
    if rows.min() < -SIMPLEX_TOL:
        raise ContractError("simplex rows must be non-negative")
    return rows


def pairwise_inner(rows):
    """Gram matrix of assignment rows: S[i, j] = rows_i . rows_j."""
    rows = _require_simplex(rows)
    return rows @ rows.T


def _gated_loss(s_gate, s_q, thr, source, with_grad):
    sim = s_gate >= thr.zeta
    dis = s_gate <= thr.gamma
    b = s_gate.shape[0]
    n_sim = int(sim.sum())
    n_dis = int(dis.sum())
    loss = float((1.0 - s_q[sim]).sum() + s_q[dis].sum())
    report = PairLossReport(loss, n_sim, n_dis, b * b - n_sim - n_dis, source)
    if not with_grad:
        return report
    g_s = dis.astype(np.float64) - sim.astype(np.float64)
    return report, g_s


def loss_m(p, q, thr, with_grad=False):
    """Membership-supervised pair loss: gates from p.p, penalties on q.q.

    Optionally returns the gradient w.r.t. the q rows (gates are constants).
    """
    s_p = pairwise_inner(p)
    q = _require_simplex(q)
    if q.shape[0] != s_p.shape[0]:
        raise ContractError(f"batch sizes differ: p has {s_p.shape[0]} rows, q {q.shape[0]}")
    s_q = q @ q.T
    out = _gated_loss(s_p, s_q, thr, "u-space", with_grad)
    if not with_grad:
        return out
    report, g_s = out
    return report, (g_s + g_s.T) @ q


def loss_m_prime(q, thr, with_grad=False):
    """Self-supervised pair loss: both gates and penalties from q.q."""
    q = _require_simplex(q)
    s_q = q @ q.T
    out = _gated_loss(s_q, s_q, thr, "q-space", with_grad)
    if not with_grad:
        return out
    report, g_s = out
    return report, (g_s + g_s.T) @ q


def phase2_epoch(data, state, cfg, rng, epoch_index):
    """One phase-2 epoch; returns (state, aggregate PairLossReport).

    epoch_index is 1-based. Epochs <= t2 gate pairs in the membership space
    and refresh centers afterwards; later epochs self-supervise in the output
    space with frozen centers.
    """
    thr = PairThresholds(cfg.zeta, cfg.gamma)
    use_u = epoch_index <= cfg.t2
    source = "u-space" if use_u else "q-space"
    loss_total = 0.0
    counts = np.zeros(3, dtype=np.int64)
    for idx in iter_batches(data.shape[0], cfg.batch_size, rng):
        batch = data[idx]
        u, enc_cache = mlp_forward(state.encoder, batch)
        q, mnet_cache = mlp_forward(state.mnet, u)
        if use_u:
            p = memberships(u, state.centers, cfg.m)
            report, g_q = loss_m(p, q, thr, with_grad=True)
        else:
            report, g_q = loss_m_prime(q, thr, with_grad=True)
        mnet_grads, g_u = mlp_backward(state.mnet, mnet_cache, g_q)
        enc_grads, _ = mlp_backward(state.encoder, enc_cache, g_u)
        state.mnet, state.opt_mnet = adam_step(state.mnet, mnet_grads, state.opt_mnet, cfg.lr_mnet)
        state.encoder, state.opt_encoder = adam_step(
            state.encoder, enc_grads, state.opt_encoder, cfg.lr_encoder_phase2
        )
        state.steps += 1
        loss_total += report.loss
        counts += (report.n_similar, report.n_dissimilar, report.n_ambiguous)
    if use_u:
        u, _ = mlp_forward(state.encoder, data)
        state.centers = update_centers(u, memberships(u, state.centers, cfg.m), cfg.m)
    aggregate = PairLossReport(loss_total, int(counts[0]), int(counts[1]), int(counts[2]), source)
    return state, aggregate


def assign(q):
    """Crisp labels: per-row argmax, ties broken to the lowest index."""
    return np.argmax(np.asarray(q), axis=1)
