"""Command-line entry point.

Subcommands: run, gen-blobs, metrics, theory-check. Exit codes: 0 success,
2 configuration error, 3 numeric failure, 1 anything else. DCSS_THREADS caps
BLAS parallelism and must therefore be applied before numpy loads, which is
why all heavy imports happen inside the handlers.
"""

import argparse
import json
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("DCSS_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _build_parser():
    parser = argparse.ArgumentParser(prog="dcss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory for artifacts")

    p_blobs = sub.add_parser("gen-blobs", help="generate a synthetic blob dataset CSV")
    p_blobs.add_argument("--k", type=int, required=True)
    p_blobs.add_argument("--n", type=int, required=True, help="samples per cluster")
    p_blobs.add_argument("--dim", type=int, required=True)
    p_blobs.add_argument("--sigma", type=float, default=1.0)
    p_blobs.add_argument("--sep", type=float, default=10.0)
    p_blobs.add_argument("--seed", type=int, default=0)
    p_blobs.add_argument("--out", required=True, help="output CSV path")

    p_metrics = sub.add_parser("metrics", help="accuracy and NMI of two label files")
    p_metrics.add_argument("--true", required=True, dest="true_path")
    p_metrics.add_argument("--pred", required=True, dest="pred_path")

    p_theory = sub.add_parser("theory-check", help="threshold-theory verdict for a Q matrix")
    p_theory.add_argument("--q", required=True, dest="q_path")
    p_theory.add_argument("--zeta", type=float, default=0.8)
    p_theory.add_argument("--gamma", type=float, default=0.2)
    return parser


def _cmd_run(args):
    from .config import DcssConfig
    from .experiment import run_experiment

    config = DcssConfig.from_json(args.config)
    result = run_experiment(config, out_dir=args.out)
    print(json.dumps(result.report.to_dict(), indent=2))
    return 0


def _cmd_gen_blobs(args):
    import numpy as np

    from .data_io import gen_blobs, save_matrix_csv

    bundle = gen_blobs(args.k, args.n, args.dim, args.sigma, args.sep, args.seed)
    matrix = np.column_stack([bundle.data, bundle.labels.astype(np.float64)])
    header = [f"x{j}" for j in range(args.dim)] + ["label"]
    save_matrix_csv(args.out, matrix, header)
    print(f"wrote {bundle.n} samples to {args.out}")
    return 0


def _cmd_metrics(args):
    from .data_io import load_labels_csv
    from .metrics import accuracy, nmi

    true = load_labels_csv(args.true_path)
    pred = load_labels_csv(args.pred_path)
    print(json.dumps({"acc": accuracy(true, pred), "nmi": nmi(true, pred)}, indent=2))
    return 0


def _cmd_theory_check(args):
    from .data_io import load_matrix_csv
    from .phase2 import PairThresholds
    from .theory import (
        check_adjacency_cluster,
        check_dissimilar_cluster,
        orphan_count,
        residuals,
        thresholds_valid,
    )

    q, _ = load_matrix_csv(args.q_path)
    verdict = thresholds_valid(args.zeta, args.gamma)
    payload = {
        "zeta": args.zeta,
        "gamma": args.gamma,
        "thresholds_valid": verdict.valid,
        "reasons": verdict.reasons,
        "n_rows": int(q.shape[0]),
    }
    if verdict.valid:
        adjacency = check_adjacency_cluster(q, args.zeta)
        dissimilar = check_dissimilar_cluster(q, PairThresholds(args.zeta, args.gamma))
        count, fraction = orphan_count(q, args.zeta)
        h, _, _ = residuals(q)
        payload.update(
            {
                "adjacency_violations": len(adjacency.violations),
                "dissimilar_pair_violations": len(dissimilar.pair_violations),
                "dissimilar_triple_violations": len(dissimilar.triple_violations),
                "orphans": count,
                "orphan_fraction": fraction,
                "residual_max": float(h.max()),
                "residual_fraction_le_0.2": float((h <= 0.2).mean()),
            }
        )
    print(json.dumps(payload, indent=2))
    return 0


def main(argv=None):
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .errors import ConfigError, ExperimentError, NumericError

    handlers = {
        "run": _cmd_run,
        "gen-blobs": _cmd_gen_blobs,
        "metrics": _cmd_metrics,
        "theory-check": _cmd_theory_check,
    }
    try:
        return handlers[args.command](args)
    except ExperimentError as exc:
        print(json.dumps({"error": str(exc), "stage": exc.stage}), file=sys.stderr)
        if isinstance(exc.cause, ConfigError):
            return 2
        if isinstance(exc.cause, NumericError):
            return 3
        return 1
    except ConfigError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except NumericError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 3
    except OSError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
