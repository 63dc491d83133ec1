"""Command line entry point: ``v2xplace {place,simulate,compare,sweep,config init}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .evaluation import (
    compare_strategies,
    density_sweep,
    run_simulation,
    summarize,
    write_histogram_csv,
    write_samples_csv,
)
from .model import Placement, ServiceKind, check_constraints
from .solver import SearchBudgetExceeded, SolveResult, brute_force_oracle, solve_exact, solve_rdp, solve_raa

log = logging.getLogger("v2xplace")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_solver(cfg: ExperimentConfig, name: str) -> SolveResult:
    inst = cfg.instance()
    max_nodes = int(cfg.raw["solver"]["max_nodes"])
    if name == "exact":
        return solve_exact(inst, max_nodes=max_nodes)
    if name == "rdp":
        return solve_rdp(inst, max_nodes=max_nodes)
    if name == "raa":
        return solve_raa(inst)
    if name == "oracle":
        return brute_force_oracle(inst)
    raise ConfigError(f"unknown solver {name!r}")


def placement_record(cfg: ExperimentConfig, res: SolveResult) -> dict:
    inst = cfg.instance()
    rec = {
        "solver": res.solver_tag,
        "feasible": res.feasible,
        "servers": inst.n_servers,
        "spacing": cfg.raw["topology"]["spacing"],
        "relaxation_applied": res.relaxation_applied,
        "nodes_explored": res.nodes_explored,
    }
    if res.feasible:
        rep = check_constraints(res.placement, inst, res.relaxation_applied)
        rec.update(
            placement=[{"server": n, "service": k.label}
                       for n, k in enumerate(res.placement.assignment)],
            objective=res.objective,
            constraints={
                "one_service_per_server": rep.one_service_per_server,
                "resources_ok": rep.resources_ok,
                "delays_ok": rep.delays_ok,
                "coverage_ok": rep.coverage_ok,
                "delay_violations": [v.__dict__ for v in rep.delay_violations],
                "capacity_violations": [[s, k.label] for s, k in rep.capacity_violations],
            })
    return rec


def read_placement(path: Path, cfg: ExperimentConfig) -> Placement:
    data = json.loads(Path(path).read_text())
    if not data.get("feasible", False):
        raise ConfigError(f"{path}: placement is infeasible")
    entries = sorted(data["placement"], key=lambda e: e["server"])
    n = cfg.instance().n_servers
    if [e["server"] for e in entries] != list(range(n)):
        raise ConfigError(f"{path}: placement covers servers "
                          f"{[e['server'] for e in entries]}, topology has {n}")
    return Placement(tuple(ServiceKind.parse(e["service"]) for e in entries))


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, tag: str, summary) -> None:
    _dump(out / f"summary_{tag}.json", summary.to_dict())
    for app, s in summary.apps.items():
        write_histogram_csv(out / f"hist_{tag}_{app}.csv", s)


def cmd_place(cfg: ExperimentConfig, args) -> int:
    name = (args.solver or cfg.solver_name).lower()
    res = _run_solver(cfg, name)
    out = _out_dir(cfg, args)
    _dump(out / "placement.json", placement_record(cfg, res))
    if not res.feasible:
        log.warning("%s: no feasible placement", name)
        return EXIT_INFEASIBLE
    log.info("%s placement %s objective %.6g", name, res.placement.labels(), res.objective)
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    ppath = Path(args.placement) if args.placement else out / "placement.json"
    placement = read_placement(ppath, cfg)
    inst = cfg.instance()
    for sc in cfg.scenarios(args.scenario, args.runs):
        samples = run_simulation(placement, sc, cfg.latency_model(), inst, cfg.mobility())
        write_samples_csv(out / f"samples_{sc.name}.csv", samples)
        _write_summary(out, sc.name, summarize(samples, inst.applications, cfg.bins))
        log.info("%s: %d samples", sc.name, len(samples))
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    strategies = args.strategies.split(",") if args.strategies else cfg.strategies
    inst = cfg.instance()
    out = _out_dir(cfg, args)
    results = {s: _run_solver(cfg, s.lower()) for s in strategies}
    for sc in cfg.scenarios(args.scenario, args.runs):
        rep = compare_strategies(results, sc, inst, cfg.latency_model(), cfg.mobility(), cfg.bins)
        _dump(out / f"compare_{sc.name}.json", rep.to_dict())
        for strat, o in rep.outcomes.items():
            if o.summary is not None:
                _write_summary(out, f"{sc.name}_{strat}", o.summary)
        for strat in rep.infeasible:
            log.warning("%s: infeasible, left out of the comparison", strat)
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    name = (args.solver or cfg.solver_name).lower()
    res = _run_solver(cfg, name)
    if not res.feasible:
        log.warning("%s: no feasible placement", name)
        return EXIT_INFEASIBLE
    out = _out_dir(cfg, args)
    rep = density_sweep(cfg.scenarios(args.scenario, args.runs), cfg.instance(), res,
                        cfg.latency_model(), cfg.mobility(), cfg.bins)
    _dump(out / "sweep.json", rep.to_dict())
    return EXIT_OK


def cmd_config_init(args) -> int:
    text = ExperimentConfig.from_dict({}).to_json() + "\n"
    if args.path:
        Path(args.path).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (merged over defaults)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="global seed override")
    common.add_argument("--solver", choices=["exact", "rdp", "raa", "oracle"])
    common.add_argument("--scenario", action="append", help="restrict to scenario NAME")
    common.add_argument("--runs", type=int, help="runs per scenario")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="v2xplace", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("place", parents=[common], help="solve the placement")
    sim = sub.add_parser("simulate", parents=[common], help="simulate traffic under a placement")
    sim.add_argument("--placement", help="placement JSON (default OUT/placement.json)")
    cmp_ = sub.add_parser("compare", parents=[common], help="paired strategy comparison")
    cmp_.add_argument("--strategies", help="comma separated, e.g. rdp,raa")
    sub.add_parser("sweep", parents=[common], help="mean-delay change across densities")
    conf = sub.add_parser("config", help="configuration helpers")
    conf_sub = conf.add_subparsers(dest="action", required=True, parser_class=_Parser)
    init = conf_sub.add_parser("init", help="write the full default config")
    init.add_argument("path", nargs="?")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "config":
        return cmd_config_init(args)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg = ExperimentConfig.from_dict({**cfg.raw, "seed": args.seed})
        handler = {"place": cmd_place, "simulate": cmd_simulate,
                   "compare": cmd_compare, "sweep": cmd_sweep}[args.command]
        return handler(cfg, args)
    except (ConfigError, SearchBudgetExceeded, FileNotFoundError) as exc:
        print(f"v2xplace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
