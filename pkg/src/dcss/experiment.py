"""Pipeline orchestration: pretrain -> phase 1 -> phase 2 -> assign -> evaluate.

Also hosts the general-framework mode (precomputed embeddings fed straight to
phase 2 through an identity-initialized linear adapter) and artifact
persistence. Everything is deterministic per (config, seed).
"""

import dataclasses
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import phase1, phase2, theory
from .config import DcssConfig
from .data_io import load_dataset, save_labels_csv, save_matrix_csv
from .errors import ConfigError, ExperimentError
from .membership import kmeans_init, memberships, nearest_centers
from .metrics import accuracy, nmi
from .nn import MlpParams, init_params, mlp_forward

ENCODER_HIDDEN = (256, 64)
MNET_HIDDEN = (128, 128)


@dataclass
class ExperimentReport:
    """Run summary: metrics, crispness diagnostics, violation counts, provenance."""

    mode: str
    final_acc: float | None
    final_nmi: float | None
    dcss_u_acc: float | None
    dcss_u_nmi: float | None
    baseline_acc: float | None
    baseline_nmi: float | None
    orphan_fraction: float | None
    residual_summary: dict | None
    violations: dict | None
    wall_clock_seconds: float
    config: dict
    artifacts: dict = field(default_factory=dict)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


@dataclass
class RunResult:
    """Report plus the in-memory artifacts emit_report persists."""

    report: ExperimentReport
    q_final: np.ndarray
    p_final: np.ndarray
    centers: np.ndarray
    assignments: np.ndarray
    phase1_log: list
    phase2_log: list  # (epoch, PairLossReport)


@contextmanager
def _stage(name):
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, exc) from exc


def build_autoencoder(input_dim, latent_dim, seed_encoder, seed_decoder):
    """Fully connected AE: D-256-64-d encoder (linear head), mirrored decoder."""
    enc_dims = [input_dim, *ENCODER_HIDDEN, latent_dim]
    dec_dims = [latent_dim, *reversed(ENCODER_HIDDEN), input_dim]
    acts = ["relu"] * (len(enc_dims) - 2) + ["linear"]
    encoder = init_params(enc_dims, acts, seed_encoder)
    decoder = init_params(dec_dims, acts, seed_decoder)
    return encoder, decoder


def build_mnet(latent_dim, k, seed):
    """Fully connected head d-128-128-K with a softmax output."""
    dims = [latent_dim, *MNET_HIDDEN, k]
    acts = ["relu"] * (len(dims) - 2) + ["softmax"]
    return init_params(dims, acts, seed)


def identity_adapter(dim):
    """Single identity-initialized linear layer standing in for the encoder."""
    return MlpParams([np.eye(dim)], [np.zeros(dim)], ["linear"])


def fit_output_to_memberships(mnet, u, p, ridge=1e-8):
    """Point MNet's softmax head at the current membership structure.

    Ridge-regresses the (randomly initialized) hidden features onto the
    log-memberships, so the initial output rows reproduce p (softmax of
    log p is p). Closed-form and deterministic; at desk-scale batch counts
    the pair losses sharpen this structure rather than having to discover
    the cluster-to-vertex routing from scratch.
    """
    if len(mnet.weights) == 1:
        h = u
    else:
        hidden = MlpParams(mnet.weights[:-1], mnet.biases[:-1], mnet.activations[:-1])
        h, _ = mlp_forward(hidden, u)
    design = np.column_stack([h, np.ones(h.shape[0])])
    gram = design.T @ design
    reg = ridge * np.trace(gram) / gram.shape[0] + 1e-12
    targets = np.log(np.maximum(p, 1e-30))
    theta = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), design.T @ targets)
    out = mnet.copy()
    out.weights[-1] = theta[:-1].T.copy()
    out.biases[-1] = theta[-1].copy()
    return out


def _spawn_seeds(seed, n):
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def _evaluate(labels, predicted):
    if labels is None:
        return None, None
    return accuracy(labels, predicted), nmi(labels, predicted)


def _residual_summary(h, counts, edges):
    return {
        "fraction_le_0.2": float((h <= 0.2).mean()),
        "mean": float(h.mean()),
        "max": float(h.max()),
        "histogram_counts": [int(c) for c in counts],
        "histogram_edges": [float(e) for e in edges],
    }


def _theory_checks(q, cfg):
    adjacency = theory.check_adjacency_cluster(q, cfg.zeta)
    dissimilar = theory.check_dissimilar_cluster(
        q, phase2.PairThresholds(cfg.zeta, cfg.gamma)
    )
    count, fraction = theory.orphan_count(q, cfg.zeta)
    h, hist_counts, hist_edges = theory.residuals(q)
    violations = {
        "adjacency_argmax": len(adjacency.violations),
        "dissimilar_same_cluster": len(dissimilar.pair_violations),
        "dissimilar_common_neighbor": len(dissimilar.triple_violations),
    }
    return violations, fraction, _residual_summary(h, hist_counts, hist_edges)


def run_experiment(config: DcssConfig, out_dir=None):
    """Execute the configured pipeline; optionally persist artifacts to out_dir."""
    config.validate()
    started = time.perf_counter()
    with _stage("load-dataset"):
        bundle = load_dataset(config.dataset)
    if config.mode == "external_embeddings":
        result = _run_external(config, bundle, started)
    else:
        result = _run_standard(config, bundle, started)
    if out_dir is not None:
        with _stage("emit-report"):
            emit_report(result, out_dir)
    return result


def _run_standard(config, bundle, started):
    data = bundle.data
    seeds = _spawn_seeds(config.seed, 6)
    seed_enc, seed_dec, seed_mnet, seed_kmeans, seed_shuffle, seed_shuffle2 = seeds
    rng = np.random.default_rng(seed_shuffle)

    with _stage("pretrain"):
        encoder, decoder = build_autoencoder(data.shape[1], config.d, seed_enc, seed_dec)
        encoder, decoder, _ = phase1.pretrain_reconstruction(
            data, encoder, decoder, config.epochs_pretrain, config.lr_pretrain,
            config.batch_size, rng,
        )

    with _stage("kmeans-init"):
        u, _ = mlp_forward(encoder, data)
        centers = kmeans_init(u, config.k, seed_kmeans)
        baseline_acc, baseline_nmi = _evaluate(bundle.labels, nearest_centers(u, centers))

    with _stage("phase1"):
        state1 = phase1.Phase1State.fresh(encoder, decoder, centers)
        epoch_fn = (
            phase1.phase1_aggregated_epoch
            if config.mode == "agg_ablation"
            else phase1.phase1_epoch
        )
        n_epochs = config.epochs_phase1
        if config.mode == "agg_ablation":
            # equalize total optimizer steps: K x fewer steps per epoch
            n_epochs *= config.k
        phase1_log = []
        for epoch in range(1, n_epochs + 1):
            state1, entry = epoch_fn(data, state1, config, rng, epoch)
            phase1_log.append(entry)
        u, _ = mlp_forward(state1.encoder, data)
        u_labels = nearest_centers(u, state1.centers)
        dcss_u_acc, dcss_u_nmi = _evaluate(bundle.labels, u_labels)

    if config.mode in ("dcss_u_only", "agg_ablation"):
        with _stage("assign"):
            p_final = memberships(u, state1.centers, config.m)
            assignments = u_labels
        report = ExperimentReport(
            mode=config.mode,
            final_acc=dcss_u_acc,
            final_nmi=dcss_u_nmi,
            dcss_u_acc=dcss_u_acc,
            dcss_u_nmi=dcss_u_nmi,
            baseline_acc=baseline_acc,
            baseline_nmi=baseline_nmi,
            orphan_fraction=None,
            residual_summary=None,
            violations=None,
            wall_clock_seconds=time.perf_counter() - started,
            config=config.to_dict(),
        )
        return RunResult(report, p_final, p_final, state1.centers, assignments,
                         phase1_log, [])

    with _stage("phase2"):
        rng2 = np.random.default_rng(seed_shuffle2)
        mnet = build_mnet(config.d, config.k, seed_mnet)
        mnet = fit_output_to_memberships(mnet, u, memberships(u, state1.centers, config.m))
        state2 = phase2.Phase2State.fresh(state1.encoder, mnet, state1.centers)
        phase2_log = []
        for epoch in range(1, config.epochs_phase2 + 1):
            state2, pair_report = phase2.phase2_epoch(data, state2, config, rng2, epoch)
            phase2_log.append((epoch, pair_report))

    with _stage("assign"):
        u, _ = mlp_forward(state2.encoder, data)
        q, _ = mlp_forward(state2.mnet, u)
        p_final = memberships(u, state2.centers, config.m)
        assignments = phase2.assign(q)
        final_acc, final_nmi = _evaluate(bundle.labels, assignments)

    with _stage("theory-checks"):
        violations, orphan_fraction, residual_summary = _theory_checks(q, config)

    report = ExperimentReport(
        mode=config.mode,
        final_acc=final_acc,
        final_nmi=final_nmi,
        dcss_u_acc=dcss_u_acc,
        dcss_u_nmi=dcss_u_nmi,
        baseline_acc=baseline_acc,
        baseline_nmi=baseline_nmi,
        orphan_fraction=orphan_fraction,
        residual_summary=residual_summary,
        violations=violations,
        wall_clock_seconds=time.perf_counter() - started,
        config=config.to_dict(),
    )
    return RunResult(report, q, p_final, state2.centers, assignments,
                     phase1_log, phase2_log)


def run_general_framework(config: DcssConfig, bundle=None):
    """Phase 2 over externally produced embeddings (the X+MNet construction)."""
    config.validate()
    if config.mode != "external_embeddings":
        raise ConfigError("run_general_framework requires mode='external_embeddings'")
    started = time.perf_counter()
    if bundle is None:
        with _stage("load-dataset"):
            bundle = load_dataset(config.dataset)
    return _run_external(config, bundle, started)


def _run_external(config, bundle, started):
    embeddings = bundle.data
    if embeddings.shape[1] != config.d:
        raise ConfigError(
            f"config d={config.d} does not match embedding dim {embeddings.shape[1]}"
        )
    seeds = _spawn_seeds(config.seed, 3)
    seed_mnet, seed_kmeans, seed_shuffle = seeds

    with _stage("kmeans-init"):
        centers = kmeans_init(embeddings, config.k, seed_kmeans)
        baseline_acc, baseline_nmi = _evaluate(
            bundle.labels, nearest_centers(embeddings, centers)
        )

    with _stage("phase2"):
        rng = np.random.default_rng(seed_shuffle)
        adapter = identity_adapter(config.d)
        mnet = build_mnet(config.d, config.k, seed_mnet)
        mnet = fit_output_to_memberships(
            mnet, embeddings, memberships(embeddings, centers, config.m)
        )
        state2 = phase2.Phase2State.fresh(adapter, mnet, centers)
        phase2_log = []
        for epoch in range(1, config.epochs_phase2 + 1):
            state2, pair_report = phase2.phase2_epoch(embeddings, state2, config, rng, epoch)
            phase2_log.append((epoch, pair_report))

    with _stage("assign"):
        u, _ = mlp_forward(state2.encoder, embeddings)
        q, _ = mlp_forward(state2.mnet, u)
        p_final = memberships(u, state2.centers, config.m)
        assignments = phase2.assign(q)
        final_acc, final_nmi = _evaluate(bundle.labels, assignments)

    with _stage("theory-checks"):
        violations, orphan_fraction, residual_summary = _theory_checks(q, config)

    report = ExperimentReport(
        mode=config.mode,
        final_acc=final_acc,
        final_nmi=final_nmi,
        dcss_u_acc=None,
        dcss_u_nmi=None,
        baseline_acc=baseline_acc,
        baseline_nmi=baseline_nmi,
        orphan_fraction=orphan_fraction,
        residual_summary=residual_summary,
        violations=violations,
        wall_clock_seconds=time.perf_counter() - started,
        config=config.to_dict(),
    )
    return RunResult(report, q, p_final, state2.centers, assignments, [], phase2_log)


def emit_report(result, out_dir):
    """Persist report.json plus the CSV artifact set; returns {name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    k = result.q_final.shape[1]
    d = result.centers.shape[1]
    paths = {}

    def _target(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    save_matrix_csv(_target("q_final.csv"), result.q_final, [f"q{j}" for j in range(k)])
    save_matrix_csv(
        _target("p_final.csv"), result.p_final, [f"p{j}" for j in range(result.p_final.shape[1])]
    )
    save_matrix_csv(_target("centers.csv"), result.centers, [f"c{j}" for j in range(d)])
    save_labels_csv(_target("assignments.csv"), result.assignments)

    with open(_target("phase1_losses.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_Lr,mean_Lc,mean_Lu,centers_updated\n")
        for entry in result.phase1_log:
            fh.write(
                f"{entry.epoch},{entry.mean_lr:.17g},{entry.mean_lc:.17g},"
                f"{entry.mean_lu:.17g},{int(entry.centers_updated)}\n"
            )
    with open(_target("phase2_losses.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,source,loss,n_sim,n_dis,n_amb\n")
        for epoch, rep in result.phase2_log:
            fh.write(
                f"{epoch},{rep.source},{rep.loss:.17g},{rep.n_similar},"
                f"{rep.n_dissimilar},{rep.n_ambiguous}\n"
            )

    result.report.artifacts = dict(paths)
    report_path = _target("report.json")
    result.report.artifacts["report.json"] = report_path
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(result.report.to_dict(), fh, indent=2)
        fh.write("\n")
    return paths
