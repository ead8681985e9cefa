"""Command-line entry points.

Subcommands: sample, diagnose, quantile-exp, scaling, conductance.  Options
come from a flat key=value config file plus command-line overrides; every
output CSV is deterministic for a fixed config and seed.  Report commands
also render figures next to the CSVs.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import plots
from .diagnostics import (DiagnosticsReport, effective_sample_size,
                          ess_to_csv, iterations_to_threshold, rhat_to_csv,
                          rhat_trajectory)
from .estimation import matrix_from_csv
from .experiments import (QuantileExperimentConfig, run_conductance_batch,
                          run_quantile_experiment, run_scaling_study)
from .samplers import (KIND_MALA, KIND_MRW, ProposalSpec, run_chain,
                       trace_from_csv, trace_to_csv)
from .targets import (GibbsSpec, UniformBoxPrior, dataset_from_csv,
                      gaussian_target, get_loss, gibbs_potential)


def read_config(path: str) -> dict[str, str]:
    """Flat key=value file; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _consume(config: dict[str, str], casts: dict) -> dict:
    """Pop known keys with type casts; warn about leftovers."""
    out = {}
    for key, cast in casts.items():
        if key in config:
            out[key] = cast(config.pop(key))
    for key in config:
        print(f"warning: ignoring unknown config key {key!r}", file=sys.stderr)
    return out


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _cmd_sample(args) -> int:
    if args.data is not None:
        data = dataset_from_csv(args.data)
        d = data.dim
        loss = get_loss(args.loss, tau=args.tau) if args.loss == "check" \
            else get_loss(args.loss)
        prior = UniformBoxPrior(lo=np.full(d, -args.box), hi=np.full(d, args.box))
        spec = GibbsSpec(data=data, loss=loss, prior=prior,
                         learning_rate=args.alpha)
        target = gibbs_potential(spec)
    else:
        d = args.d
        target = gaussian_target(np.zeros(d), np.eye(d))
    precond = matrix_from_csv(args.precond) if args.precond else None
    init = _parse_floats(args.init) if args.init else np.zeros(d)
    if init.shape != (d,):
        raise ValueError(f"init has {init.shape[0]} entries, target dimension is {d}")
    pspec = ProposalSpec(kind=args.kind, step=args.step, precond=precond,
                         lazy=args.lazy, dim=d)
    trace = run_chain(target, pspec, init, args.steps, thin=args.thin,
                      seed=args.seed, chain_id=args.chain_id)
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "trace.csv")
    trace_to_csv(trace, out_csv)
    if args.figures:
        plots.render_trace_figure(trace.samples,
                                  os.path.join(args.out, "trace.png"))
    print(f"wrote {out_csv} ({trace.samples.shape[0]} samples, "
          f"acceptance {trace.acceptance_rate:.3f})")
    return 0


def _cmd_diagnose(args) -> int:
    traces = [trace_from_csv(path) for path in args.traces]
    if len(traces) < 2:
        raise ValueError("diagnostics need at least 2 traces")
    blocks = [t.samples for t in traces]
    prefixes, points, uppers = rhat_trajectory(blocks, args.stride)
    iters = iterations_to_threshold(blocks, args.threshold, args.stride)
    n = min(b.shape[0] for b in blocks)
    ess_prefix = min(args.ess_at or n, n)
    d = blocks[0].shape[1]
    ess = np.array([np.mean([effective_sample_size(b[:ess_prefix], j)
                             for b in blocks]) for j in range(d)])
    report = DiagnosticsReport(prefixes=prefixes, rhat_point=points,
                               rhat_upper=uppers, ess=ess,
                               iterations_to_rhat=iters, ess_prefix=ess_prefix)
    os.makedirs(args.out, exist_ok=True)
    rhat_to_csv(report, os.path.join(args.out, "rhat.csv"))
    ess_to_csv(report, os.path.join(args.out, "ess.csv"))
    if args.figures:
        plots.render_rhat_figure([("chains", report)],
                                 os.path.join(args.out, "rhat.png"),
                                 threshold=args.threshold)
        plots.render_ess_figure([("chains", report)],
                                os.path.join(args.out, "ess.png"))
    print(f"iterations to max shrink factor < {args.threshold}: {iters}")
    print(f"ESS at {ess_prefix}: " + ", ".join(f"{v:.1f}" for v in ess))
    return 0


def _cmd_quantile(args) -> int:
    overrides = {}
    if args.config:
        casts = {"n": int, "d": int, "tau": float, "cov_offdiag": float,
                 "error_location": float, "error_scale": float,
                 "box_halfwidth": float, "learning_rate": float,
                 "m_chains": int, "max_iters": int, "rhat_threshold": float,
                 "rhat_stride": int, "ess_at": int, "ess_target": float,
                 "ess_stride": int, "spread": float, "warmup_steps": int,
                 "erm_iters": int, "seed": int}
        overrides = _consume(read_config(args.config), casts)
    config_seed = overrides.pop("seed", None)
    seed = args.seed if args.seed is not None else \
        (config_seed if config_seed is not None else 0)
    for name, value in (("n", args.n), ("d", args.d), ("tau", args.tau)):
        if value is not None:
            overrides[name] = value
    cfg = QuantileExperimentConfig(**overrides)
    result = run_quantile_experiment(cfg, seed, out_dir=args.out)
    if args.figures:
        plots.render_quantile_figures(result, args.out)
    for name in cfg.samplers:
        rep = result.arms[name].report
        print(f"{name}: iters_to_rhat={rep.iterations_to_rhat:g} "
              f"ess_at_{cfg.ess_at}={rep.extra['ess_at_mean']:.1f} "
              f"iters_to_ess={rep.extra['ess_iterations_mean']:g}")
    print(f"wrote {os.path.join(args.out, 'summary.csv')}")
    return 0


def _cmd_scaling(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "scaling.csv")
    rows = run_scaling_study(args.dims, seed=args.seed, steps=args.steps,
                             c0=args.c0,
                             include_constant_arm=not args.no_constant_arm,
                             out_path=out_csv)
    if args.figures:
        plots.render_scaling_figure(rows, os.path.join(args.out, "scaling.png"))
    for r in rows:
        print(f"d={r.d} arm={r.arm} step={r.step:.4g} "
              f"acceptance={r.acceptance:.3f} ess_per_step={r.ess_per_step:.4f}")
    return 0


def _cmd_conductance(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "conductance.csv")
    rows = run_conductance_batch(args.seed, args.count, sizes=args.sizes,
                                 m0=args.m0, eps=args.eps,
                                 include_disconnected=args.include_disconnected,
                                 out_path=out_csv)
    failures = [r for r in rows if not r.holds]
    for r in rows:
        tag = "vacuous" if r.infinite_bound else ("ok" if r.holds else "VIOLATED")
        print(f"chain {r.index}: m={r.m} tau_actual={r.tau_actual:g} "
              f"tau_bound={r.tau_bound:g} [{tag}]")
    print(f"wrote {out_csv}")
    if failures:
        print(f"{len(failures)} chain(s) violate the mixing bound", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malalab",
        description="Langevin and random-walk samplers with mixing diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run one chain and write its trace")
    p.add_argument("--kind", choices=[KIND_MALA, KIND_MRW], default=KIND_MALA)
    p.add_argument("--d", type=int, default=2, help="dimension (gaussian target)")
    p.add_argument("--data", help="dataset CSV; switches to the posterior target")
    p.add_argument("--loss", choices=["check", "squared"], default="check")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0, help="learning rate")
    p.add_argument("--box", type=float, default=100.0, help="prior box half width")
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--lazy", type=float, default=0.0)
    p.add_argument("--precond", help="preconditioner matrix CSV")
    p.add_argument("--init", help="comma-separated start point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chain-id", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("diagnose", help="convergence diagnostics for saved traces")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=1.01)
    p.add_argument("--stride", type=int, default=50)
    p.add_argument("--ess-at", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("quantile-exp", help="quantile-regression sampler comparison")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_quantile)

    p = sub.add_parser("scaling", help="step-size scaling study on gaussians")
    p.add_argument("--dims", type=_parse_ints, default=[2, 8, 32, 128])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-constant-arm", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("conductance", help="verify the mixing bound on random chains")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--sizes", type=_parse_ints, default=[3, 4, 5, 6, 7, 8])
    p.add_argument("--m0", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--include-disconnected", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_conductance)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
