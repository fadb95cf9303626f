"""Command-line front end.

Subcommands::

    approx            gamma <-> lognormal moment matching
    info              informativeness and conditional precision bound
    fit               fit pg / pln / bym to a counts file
    restricted        paired unrestricted / restricted BYM fits
    states            one BYM fit per state, informativeness summaries
    simulate          write a synthetic counts file (and adjacency for lattices)
    sim-study         gamma-generated simulation study
    quantile-compare  exact vs MCMC posterior quantiles for y = 1..20

Exit codes: 0 success, 1 sampler/runtime failure, 2 usage or validation error.
Outputs go to ``--out``; when omitted, to ``$CARINFO_OUTPUT_ROOT/<command>``
(``./carinfo-output/<command>`` if the variable is unset).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .approx import InformativenessQuery, conditional_precision_bound, gamma_to_lognormal, informativeness, lognormal_to_gamma
from .data import load_counts, write_counts
from .errors import CarInfoError, SamplerError
from .graph import lattice_graph, load_adjacency, write_adjacency
from .harness import (
    DESK_CONFIG,
    QUANTILE_BYM_CONFIG,
    QUANTILE_CONFIG,
    SimStudySpec,
    run_quantile_comparison,
    run_restricted_pipeline,
    run_sim_study,
    run_state_batch,
    simulate_counts,
    synthetic_bym_data,
)
from .numerics import GammaParams, LognormalParams
from .reports import (
    RunManifest,
    write_chain_draws,
    write_chain_summary,
    write_comparison,
    write_informativeness,
    write_json,
    write_rows,
)
from .samplers import FITTERS, McmcConfig, Restriction

log = logging.getLogger("carinfo")

OUTPUT_ROOT_ENV = "CARINFO_OUTPUT_ROOT"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV) or "carinfo-output") / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_out(p):
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command>)")


def _add_mcmc(p, default: McmcConfig):
    g = p.add_argument_group("MCMC")
    g.add_argument("--iterations", type=int, default=default.iterations, help="total iterations per chain")
    g.add_argument("--burn-in", type=int, default=None, help="burn-in iterations (default: half)")
    g.add_argument("--thin", type=int, default=default.thin)
    g.add_argument("--chains", type=int, default=default.chains)
    g.add_argument("--seed", type=int, default=0)


def _mcmc(args) -> McmcConfig:
    return McmcConfig(
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        chains=args.chains,
        seed=args.seed,
    )


def _finish(out: Path, argv, inputs, config: dict, seed) -> None:
    manifest = RunManifest.build(["carinfo", *argv], inputs, config, seed)
    manifest.record_outputs(out)
    manifest.write(out)
    print(f"wrote {out}")


# -- commands -----------------------------------------------------------------


def cmd_approx(args, argv) -> int:
    gamma_side = args.a is not None or args.b is not None
    ln_side = args.mu is not None or args.sigma2 is not None
    if gamma_side == ln_side:
        raise UsageError("give either --a and --b, or --mu and --sigma2")
    if gamma_side:
        if args.a is None or args.b is None:
            raise UsageError("--a and --b must be given together")
        ln = gamma_to_lognormal(GammaParams(args.a, args.b))
        print(f"mu={ln.mu:.10g}")
        print(f"sigma2={ln.sigma2:.10g}")
    else:
        if args.mu is None or args.sigma2 is None:
            raise UsageError("--mu and --sigma2 must be given together")
        g = lognormal_to_gamma(LognormalParams(args.mu, args.sigma2))
        print(f"a={g.a:.10g}")
        print(f"b={g.b:.10g}")
    return EXIT_OK


def cmd_info(args, argv) -> int:
    q = InformativenessQuery(args.sigma2, args.tau2, args.m0)
    print(f"a_hat={informativeness(q).a_hat:.10g}")
    print(f"precision={conditional_precision_bound(q):.10g}")
    return EXIT_OK


def cmd_fit(args, argv) -> int:
    restricted = args.restrict_a is not None or args.restrict_m0 is not None
    if args.model != "bym":
        if restricted:
            raise UsageError("--restrict-a / --restrict-m0 apply only to --model bym")
        if args.adjacency:
            raise UsageError("--adjacency applies only to --model bym")
    elif not args.adjacency:
        raise UsageError("--model bym needs --adjacency")
    if restricted and args.restrict_a is None:
        raise UsageError("--restrict-m0 needs --restrict-a")

    cfg = _mcmc(args)
    data = load_counts(args.counts)
    inputs = [args.counts]
    if args.model == "bym":
        graph = load_adjacency(args.adjacency, declared_ids=data.region_ids)
        inputs.append(args.adjacency)
        restriction = Restriction(args.restrict_a, args.restrict_m0 or 3) if restricted else None
        chain = FITTERS["bym"](data, graph, cfg, restriction=restriction, m0=args.m0)
    else:
        chain = FITTERS[args.model](data, cfg)

    out = _out_dir(args, "fit")
    write_chain_draws(out / "draws.csv", chain)
    write_chain_summary(out, chain)
    info = write_informativeness(out, chain, args.m0 if args.model == "bym" else None)
    print(f"informativeness median={info['median']:.4g} 95%=[{info['lower95']:.4g}, {info['upper95']:.4g}]")
    _finish(out, argv, inputs, {"model": args.model, **cfg.to_dict(), "m0": args.m0,
                                "restriction": chain.restriction.to_dict() if chain.restriction else None}, cfg.seed)
    return EXIT_OK


def cmd_restricted(args, argv) -> int:
    cfg = _mcmc(args)
    data = load_counts(args.counts)
    graph = load_adjacency(args.adjacency, declared_ids=data.region_ids)
    report = run_restricted_pipeline(data, graph, cfg, a_floor=args.a_floor, m0=args.m0)
    out = _out_dir(args, "restricted")
    write_chain_draws(out / "draws_unrestricted.csv", report.unrestricted)
    write_chain_draws(out / "draws_restricted.csv", report.restricted)
    write_comparison(out, report.comparison)
    write_json(out / "paired.json", report.to_dict())
    for row in report.comparison.informativeness_rows():
        print(f"{row['model']}: informativeness median={row['median']:.4g}")
    _finish(out, argv, [args.counts, args.adjacency], {**cfg.to_dict(), "a_floor": args.a_floor, "m0": args.m0}, cfg.seed)
    return EXIT_OK


def cmd_states(args, argv) -> int:
    cfg = _mcmc(args)
    states, inputs = {}, []
    for name, counts, adj in args.state:
        if name in states:
            raise UsageError(f"state {name!r} given twice")
        data = load_counts(counts)
        states[name] = (data, load_adjacency(adj, declared_ids=data.region_ids))
        inputs += [counts, adj]
    result = run_state_batch(states, cfg, m0=args.m0, a_floor=args.a_floor, min_regions=args.min_regions, jobs=args.jobs)
    rows = [
        {"state": k, "median": s.median, "lower95": s.interval95[0], "upper95": s.interval95[1], "ess": s.ess}
        for k, s in result.items()
    ]
    skipped = sorted(set(states) - set(result))
    out = _out_dir(args, "states")
    write_rows(out / "states.csv", rows)
    write_json(out / "states.json", {"m0": args.m0, "a_floor": args.a_floor, "states": rows, "skipped": skipped})
    for r in rows:
        print(f"{r['state']}: informativeness median={r['median']:.4g}")
    if skipped:
        print(f"skipped (fewer than {args.min_regions} regions): {', '.join(skipped)}")
    _finish(out, argv, inputs, {**cfg.to_dict(), "m0": args.m0, "a_floor": args.a_floor}, cfg.seed)
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    out = _out_dir(args, "simulate")
    if args.lattice:
        rows, cols = args.lattice
        graph = lattice_graph(rows, cols, queen=not args.rook)
        data = synthetic_bym_data(graph, args.sigma2, args.tau2, rate=args.lambda0, seed=args.seed, label="cli")
        write_adjacency(out / "adjacency.csv", graph)
        config = {"lattice": [rows, cols], "queen": not args.rook, "sigma2": args.sigma2,
                  "tau2": args.tau2, "rate": args.lambda0}
    else:
        spec = SimStudySpec(args.a, args.lambda0, args.n, region_counts=(args.I,), root_seed=args.seed)
        data = simulate_counts(spec, args.I, args.replicate)
        config = {**spec.to_dict(), "I": args.I, "replicate": args.replicate}
    write_counts(out / "counts.csv", data)
    _finish(out, argv, [], config, args.seed)
    return EXIT_OK


def cmd_sim_study(args, argv) -> int:
    if args.quick:
        cfg = McmcConfig(iterations=4_000, thin=10, chains=args.chains, seed=args.seed)
        reps = tuple(1 for _ in args.I)
    else:
        cfg = _mcmc(args)
        reps = tuple(args.replicates) if args.replicates else None
    spec = SimStudySpec(args.a, args.lambda0, args.n, region_counts=tuple(args.I), replicates=reps, root_seed=args.seed)
    report = run_sim_study(spec, cfg, jobs=args.jobs)
    out = _out_dir(args, "sim-study")
    write_rows(out / "sim_study.csv", report.summaries)
    write_json(out / "sim_study.json", report.to_dict())
    top = report.largest_comparison()
    print(
        f"I={top['I']}: gamma a median={top['gamma_median']:.4g} "
        f"95%=[{top['gamma_interval95'][0]:.4g}, {top['gamma_interval95'][1]:.4g}] "
        f"covers {spec.a_true:g}: {top['gamma_covers_truth']}"
    )
    print(f"lognormal informativeness median={top['lognormal_median']:.4g} "
          f"(less informative: {top['lognormal_less_informative']})")
    _finish(out, argv, [], {"spec": spec.to_dict(), "mcmc": cfg.to_dict()}, args.seed)
    return EXIT_OK


def cmd_quantile_compare(args, argv) -> int:
    if args.quick:
        cfg = McmcConfig(iterations=12_000, burn_in=2_000, thin=1, chains=1)
        bym_cfg = McmcConfig(iterations=12_000, burn_in=2_000, thin=1, chains=1)
    else:
        cfg, bym_cfg = QUANTILE_CONFIG, QUANTILE_BYM_CONFIG
    rows = run_quantile_comparison(
        a=args.a,
        lambda0=args.lambda0,
        ys=range(1, args.ymax + 1),
        cfg=cfg,
        bym_cfg=bym_cfg,
        n_regions=args.regions,
        sigma2=args.sigma2,
        tau2=args.tau2,
        seed=args.seed,
    )
    out = _out_dir(args, "quantile-compare")
    table = [r.to_dict() for r in rows]
    write_rows(out / "quantiles.csv", table)
    write_rows(out / "quantiles_table.csv", table, digits=4)
    worst = {
        name: max(abs(e) for r in rows for e in r.rel_error(name)) for name in ("lognormal", "bym")
    }
    print(f"largest relative quantile error: lognormal {worst['lognormal']:.3%}, bym {worst['bym']:.3%}")
    config = {"a": args.a, "lambda0": args.lambda0, "ymax": args.ymax, "regions": args.regions,
              "sigma2": args.sigma2, "tau2": args.tau2, "mcmc": cfg.to_dict(), "bym_mcmc": bym_cfg.to_dict()}
    _finish(out, argv, [], config, args.seed)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carinfo", description="Disease-mapping fits and prior informativeness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="moment-match a gamma and a lognormal")
    p.add_argument("--a", type=float, help="gamma shape")
    p.add_argument("--b", type=float, help="gamma rate")
    p.add_argument("--mu", type=float, help="lognormal log-mean")
    p.add_argument("--sigma2", type=float, help="lognormal log-variance")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("info", help="informativeness of (sigma2, tau2) at m0 neighbours")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--tau2", type=float, required=True)
    p.add_argument("--m0", type=int, required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("fit", help="fit a model to a counts file")
    p.add_argument("--model", choices=sorted(FITTERS), required=True)
    p.add_argument("--counts", required=True, help="CSV with region_id,y,n[,x1,...]")
    p.add_argument("--adjacency", help="CSV with region_a,region_b (bym only)")
    p.add_argument("--m0", type=int, default=3, help="neighbour count for reported informativeness (bym)")
    p.add_argument("--restrict-a", type=float, help="cap on informativeness (bym only)")
    p.add_argument("--restrict-m0", type=int, help="neighbour count for the cap (default 3)")
    _add_mcmc(p, McmcConfig())
    _add_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("restricted", help="BYM fits with and without an informativeness cap")
    p.add_argument("--counts", required=True)
    p.add_argument("--adjacency", required=True)
    p.add_argument("--a-floor", type=float, default=6.0)
    p.add_argument("--m0", type=int, default=3)
    _add_mcmc(p, McmcConfig())
    _add_out(p)
    p.set_defaults(func=cmd_restricted)

    p = sub.add_parser("states", help="one BYM fit per state")
    p.add_argument("--state", nargs=3, action="append", required=True, metavar=("NAME", "COUNTS", "ADJACENCY"))
    p.add_argument("--m0", type=int, default=3)
    p.add_argument("--a-floor", type=float, default=None)
    p.add_argument("--min-regions", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    _add_mcmc(p, McmcConfig())
    _add_out(p)
    p.set_defaults(func=cmd_states)

    p = sub.add_parser("simulate", help="write a synthetic counts file")
    p.add_argument("--I", type=int, default=50, help="number of regions (gamma-generated data)")
    p.add_argument("--a", type=float, default=5.0)
    p.add_argument("--lambda0", type=float, default=5e-4, help="prior mean rate (or lattice base rate)")
    p.add_argument("--n", type=float, default=20_000.0, help="exposure per region")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--lattice", type=int, nargs=2, metavar=("ROWS", "COLS"),
                   help="draw from the BYM model on a lattice instead; also writes adjacency.csv")
    p.add_argument("--rook", action="store_true", help="rook instead of queen lattice neighbours")
    p.add_argument("--sigma2", type=float, default=0.02)
    p.add_argument("--tau2", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sim-study", help="gamma vs lognormal simulation study")
    p.add_argument("--a", type=float, default=5.0)
    p.add_argument("--lambda0", type=float, default=5e-4)
    p.add_argument("--n", type=float, default=20_000.0)
    p.add_argument("--I", type=int, nargs="+", default=[10, 25, 50, 100, 200])
    p.add_argument("--replicates", type=int, nargs="+", help="replicates per I (default round(200 / I))")
    p.add_argument("--quick", action="store_true", help="reduced budget, one replicate per I")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_mcmc(p, DESK_CONFIG)
    _add_out(p)
    p.set_defaults(func=cmd_sim_study)

    p = sub.add_parser("quantile-compare", help="exact vs MCMC posterior quantiles")
    p.add_argument("--a", type=float, default=8.75)
    p.add_argument("--lambda0", type=float, default=5e-4)
    p.add_argument("--ymax", type=int, default=20)
    p.add_argument("--regions", type=int, default=50)
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--tau2", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="short chains (smoke test)")
    _add_out(p)
    p.set_defaults(func=cmd_quantile_compare)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"carinfo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"carinfo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SamplerError as exc:
        print(f"carinfo {args.command}: sampler failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CarInfoError, ValueError, OverflowError) as exc:
        # bad values: out-of-domain parameters or unrepresentable matches
        print(f"carinfo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError, OSError) as exc:
        print(f"carinfo {args.command}: failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
