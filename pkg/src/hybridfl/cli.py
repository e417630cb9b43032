"""Command-line entry point: ``hybridfl run | ablation | sweep``."""

import argparse
import sys
from pathlib import Path

from .config import PRESETS, config_from_dict, config_to_dict, load_config
from .data import load_dataset
from .errors import HFLError
from .metrics import MetricsLog, write_config_echo, write_metrics_csv
from .orchestrator import ablation_config, run_ablation, run_experiment, sweep_configs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridfl",
        description="Hybrid FL/FD training over a simulated Rayleigh MIMO uplink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", type=Path, help="TOML experiment config")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="start from a named preset (ignored if the config sets one)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, required=True, help=out_help)
        p.add_argument("--no-echo", action="store_true", help="skip the JSON config sidecar")

    common(sub.add_parser("run", help="single experiment"), "metrics CSV path")
    common(sub.add_parser("ablation", help="clustering x weight-selection grid"), "output directory")
    sweep = sub.add_parser("sweep", help="FL, FD and HFL at several SNRs")
    common(sweep, "output directory")
    sweep.add_argument("--snr-db", type=float, nargs="+", required=True, metavar="DB")
    sweep.add_argument("--noiseless", action="store_true", help="also run without uplink noise")
    return parser


def _resolve_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config is not None:
        if args.preset is not None:
            overrides.setdefault("preset", args.preset)
        return load_config(args.config, overrides)
    if args.preset is not None:
        overrides["preset"] = args.preset
    return config_from_dict(overrides)


def _emit(cfg, history, path: Path, echo: bool) -> float:
    log = MetricsLog(config_to_dict(cfg), history)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(log, path)
    if echo:
        write_config_echo(log, path.with_suffix(".json"))
    return log.final_accuracy()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        echo = not args.no_echo
        if args.command == "run":
            acc = _emit(cfg, run_experiment(cfg), args.out, echo)
            print(f"{cfg.scheme} {cfg.snr_db:g} dB: final accuracy {acc:.4f} -> {args.out}")
        elif args.command == "ablation":
            for (clus, weight), history in run_ablation(cfg).items():
                path = args.out / f"{clus}_{weight}.csv"
                acc = _emit(ablation_config(cfg, clus, weight), history, path, echo)
                print(f"{clus} {weight}: final accuracy {acc:.4f} -> {path}")
        else:
            dataset = load_dataset(cfg.data)
            for (label, scheme), run_cfg in sweep_configs(cfg, args.snr_db, args.noiseless):
                path = args.out / f"{label}_{scheme}.csv"
                acc = _emit(run_cfg, run_experiment(run_cfg, dataset), path, echo)
                print(f"{label} {scheme}: final accuracy {acc:.4f} -> {path}")
    except (HFLError, OSError) as exc:
        print(f"hybridfl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
