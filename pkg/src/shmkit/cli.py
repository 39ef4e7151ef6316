"""Command-line front end for the monitoring pipeline.

Verbs: gen-data, fit-pca, pretrain, sample, eval, monitor, study-datasize,
print-config.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import ConfigError, DataError, NumericError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(p):
    p.add_argument("--config", help="pipeline config JSON (defaults if omitted)")
    p.add_argument("--out-dir", help="override the output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shmkit",
        description="Strain-field reconstruction with full-field uncertainty.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in [
        ("gen-data", "generate synthetic specimen datasets"),
        ("fit-pca", "fit the pooled reconstruction basis"),
        ("pretrain", "pre-train the network and mode noise scales"),
        ("sample", "draw posterior parameter samples"),
        ("study-datasize", "re-run the pipeline over several training sizes"),
    ]:
        p = sub.add_parser(name, help=desc)
        _add_common(p)

    p = sub.add_parser("eval", help="evaluate on held-out sequences")
    _add_common(p)
    p.add_argument("--on-train", action="store_true",
                   help="evaluate on the training sequences instead")

    p = sub.add_parser("monitor", help="stream gauge frames through the model")
    _add_common(p)
    p.add_argument("--replay", help="dataset directory to replay instead of stdin")
    p.add_argument("--inline-fields", action="store_true",
                   help="emit full mean/epistemic fields on every line")

    p = sub.add_parser("print-config", help="print the full default config")
    return parser


def _run(args):
    if args.command == "print-config":
        print(json.dumps(pipeline.PipelineConfig().to_dict(), indent=2, sort_keys=True))
        return 0
    cfg = pipeline.load_config(args.config, args.out_dir)
    if args.command == "gen-data":
        manifest = pipeline.run_gen_data(cfg)
        for entry in manifest["specimens"]:
            print(f"{entry['label']}: crack {entry['crack_length_mm']:g} mm, "
                  f"{entry['train']['n_frames']} train + {entry['test']['n_frames']} test frames")
    elif args.command == "fit-pca":
        report = pipeline.run_fit_pca(cfg)
        print(f"fit basis on {report['n_samples']} samples; "
              f"k={report['k_used']} (smallest k reaching "
              f"{report['cev_threshold']:.2f} CEV: {report['k_selected']}), "
              f"CEV(k)={report['cev_curve'][report['k_used'] - 1]:.4f}")
    elif args.command == "pretrain":
        result = pipeline.run_pretrain(cfg)
        sig = ", ".join(f"{v:.4f}" for v in result.sigma_hat)
        final = result.train_loss[-1] if result.train_loss else float("nan")
        print(f"pre-trained {cfg.pretrain.epochs} epochs; final train loss {final:.6g}; "
              f"sigma_hat = [{sig}]")
    elif args.command == "sample":
        ensemble = pipeline.run_sample(cfg)
        print(f"collected {ensemble.m} samples; accept rate {ensemble.accept_rate:.3f}; "
              f"final step size {ensemble.step_size_final:.3e}; "
              f"divergences {ensemble.divergences}")
    elif args.command == "eval":
        out = pipeline.run_eval(cfg, on_train=args.on_train)
        for label, m in out["specimens"].items():
            r2 = ", ".join("n/a" if v is None else f"{v:.3f}" for v in m["r2"])
            print(f"{label}: R2 per mode = [{r2}]")
        print(f"mean R2 = {out['summary']['mean_r2']:.4f}")
    elif args.command == "monitor":
        if args.inline_fields:
            from dataclasses import replace
            cfg = replace(cfg, uq=replace(cfg.uq, inline_fields=True))
        pipeline.run_monitor(cfg, sys.stdin, sys.stdout, sys.stderr,
                             replay=args.replay)
    elif args.command == "study-datasize":
        summary = pipeline.run_study(cfg)
        for res in summary["results"]:
            print(f"size {res['size']}: sigma_hat[0]={res['sigma_hat'][0]:.4f}, "
                  f"aleatoric median {res['aleatoric_median']:.5f}, "
                  f"epistemic median {res['epistemic_median']:.6f}")
    else:  # pragma: no cover
        raise ConfigError(f"unknown command {args.command}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
