"""Command-line entry point.

Subcommands mirror the pipeline stages (ingest, annotate, discover, train-cf,
gen-cf, train-ddp, train-policy, evaluate) plus `run` for the whole pipeline,
`synth gen` for synthetic corpora, and `report` for plot-ready CSV series.
Every configuration key can come from an INI file (--config) or be overridden
by the flag of the same name. Exit codes: 0 success, 2 configuration error,
3 stage failure.
"""
import argparse
import csv
import dataclasses
import os
import sys

from . import pipeline
from .pipeline import ConfigError, PipelineConfig, StageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _config_parent():
    """Parser with one flag per PipelineConfig field, defaulting to unset."""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI config file")
    for f in dataclasses.fields(PipelineConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name,
                       type=f.type, default=None, metavar=f.type.__name__.upper())
    return p


def _build_config(args):
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    return pipeline.load_config(args.config, overrides)


def _cmd_stage(name):
    def run(args):
        cfg = _build_config(args)
        pipeline.run_stage(cfg, name, log=print)
        return EXIT_OK
    return run


def _cmd_run(args):
    cfg = _build_config(args)
    pipeline.run_pipeline(cfg, log=print)
    return EXIT_OK


def _cmd_synth_gen(args):
    from . import synth
    from .corpus import write_corpus
    spec = synth.SynthSpec(d=args.dim, k_ee=args.k_ee, k_er=args.k_er,
                           avg_degree=args.avg_degree, sigma=args.sigma,
                           max_donation=args.max_donation)
    scm = synth.sample_scm(spec, args.scm_seed)
    corp = synth.simulate_corpus(scm, args.dialogues, args.turns, args.seed)
    write_corpus(corp, args.out_corpus)
    print(f"wrote {len(corp)} dialogues to {args.out_corpus}")
    return EXIT_OK


def _cmd_report(args):
    out = args.out
    qpath = os.path.join(out, "qvalues.csv")
    cpath = os.path.join(out, "cumulative_rewards.csv")
    for p in (qpath, cpath):
        if not os.path.isfile(p):
            raise ConfigError(f"missing evaluation artifact: {p} (run evaluate first)")
    with open(qpath) as f:
        qrows = list(csv.DictReader(f))
    for panel, col in (("max_q", "max_q"), ("mean_q", "mean_q")):
        dest = os.path.join(out, f"panel_{panel}.csv")
        with open(dest, "w") as f:
            f.write(f"index,{panel},variant\n")
            ordered = sorted(qrows, key=lambda r: float(r[col]), reverse=True)
            for i, r in enumerate(ordered):
                f.write(f"{i + 1},{r[col]},{r['variant']}\n")
    with open(cpath) as f:
        crows = list(csv.DictReader(f))
    dest = os.path.join(out, "panel_cumulative.csv")
    with open(dest, "w") as f:
        f.write("k,ground_truth,variant_reward,variant\n")
        for r in crows:
            f.write(f"{r['k']},{r['ground_truth']},{r['variant_reward']},"
                    f"{r['variant']}\n")
    print(f"wrote panel_max_q.csv, panel_mean_q.csv, panel_cumulative.csv to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cfdlg",
                                     description="Counterfactual dialogue pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()
    for name in pipeline.STAGE_NAMES:
        sp = sub.add_parser(name, parents=[parent],
                            help=f"run the {name} stage")
        sp.set_defaults(func=_cmd_stage(name))
    sp = sub.add_parser("run", parents=[parent], help="run the full pipeline")
    sp.set_defaults(func=_cmd_run)

    synth_p = sub.add_parser("synth", help="synthetic world utilities")
    synth_sub = synth_p.add_subparsers(dest="synth_command", required=True)
    gen = synth_sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--out-corpus", required=True)
    gen.add_argument("--dialogues", type=int, default=100)
    gen.add_argument("--turns", type=int, default=15)
    gen.add_argument("--dim", type=int, default=16)
    gen.add_argument("--k-ee", type=int, default=6)
    gen.add_argument("--k-er", type=int, default=8)
    gen.add_argument("--avg-degree", type=float, default=2.0)
    gen.add_argument("--sigma", type=float, default=0.05)
    gen.add_argument("--max-donation", type=float, default=20.0)
    gen.add_argument("--scm-seed", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_synth_gen)

    rep = sub.add_parser("report", help="plot-ready CSV series from evaluation")
    rep.add_argument("--out", default="out", help="pipeline output directory")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
