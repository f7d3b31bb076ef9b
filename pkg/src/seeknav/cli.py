"""Command line entry point (``seeknav``)."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import eval_harness as eh
from .errors import SeekError
from .global_planner import dump_policy, solve
from .scene_graph import build_graph, load_graph, room_cost_matrix, save_graph
from .semantic_belief import PriorStore, init_belief, load_prior_table, load_store

log = logging.getLogger("seeknav")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("SEEK_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level is None:
        log.error("SEEK_LOG=%r not recognised (use error, info or debug); using error", name)


def _store(path, table):
    if path and Path(path).exists():
        return load_store(path, table)
    return PriorStore(table=table)


def cmd_graph_build(args):
    graph = build_graph(args.floor_plan, args.spacing)
    save_graph(graph, args.output)
    n_loc = len(graph.location_ids())
    print(f"{len(graph.rooms)} rooms, {n_loc} location nodes -> {args.output}")


def cmd_plan(args):
    graph = load_graph(args.dsg)
    table = load_prior_table(args.prior)
    belief = init_belief(table, graph, _store(args.store, table), args.object)
    costs = room_cost_matrix(graph)
    value, policy = solve(costs, belief, table.p_easy(args.object))
    dump_policy(value, policy, args.output)
    print(f"policy over {len(policy.room_ids)} rooms ({policy.iterations} iterations) -> {args.output}")


def cmd_simulate(args):
    config = eh.load_scenario(args.scenario)
    ctx = eh.Context(config)
    planner = args.planner or config.planners[0]
    k = args.episode
    schedule = eh.episode_schedule(config)
    if not 0 <= k < len(schedule):
        raise eh.InputError(f"--episode must be in [0, {len(schedule)})")
    si = schedule[k][1]
    seed = args.seed if args.seed is not None else eh.episode_seed(config.suite_seed, k)
    res = eh.run_episode(
        config, ctx.world, planner, ctx.initial_store(), seed, config.starts[si],
        graph=ctx.graph, costs=ctx.costs, table=ctx.table,
        episode=k, start_index=si, semdist=ctx.semdist, trace_path=args.trace,
    )
    out = {
        "episode": res.episode, "seed": res.seed, "planner": res.planner, "start_index": res.start_index,
        "success": res.success, "reason": res.reason, "path_len_m": round(res.path_len, 6),
        "shortest_len_m": round(res.shortest_len, 6), "spl": round(res.spl, 6), "ticks": res.ticks,
        "actions": res.actions, "brier": [round(b, 6) for b in res.brier],
    }
    print(json.dumps(out))
    return 0


def cmd_eval(args):
    config = eh.load_scenario(args.scenario)
    out = Path(args.output)
    if config.placements:
        rows = eh.run_placement_study(config)
        results = [r.result for r in rows]
        report = eh.SuiteReport(eh.summarize(results, config.planners), results, eh._config_echo(config))
        eh.write_report(report, results, out)
        (out / "placements.csv").write_text(eh.placements_csv(rows), encoding="utf-8")
    else:
        report = eh.run_suite(config, out_dir=out)
    for p, s in report.planners.items():
        print(f"{p:18s} mean SPL {s['mean_spl']:.4f}  std {s['std_spl']:.4f}  success {s['success_rate']:.2f}  n={s['episodes']}")
    print(f"report -> {out}")


def cmd_belief_show(args):
    table = load_prior_table(args.prior)
    graph = load_graph(args.dsg)
    belief = init_belief(table, graph, _store(args.store, table), args.object)
    if belief.low_confidence:
        print(f"# {args.object!r} not in prior table: uniform unknown row (low confidence)")
    print("room\tlabel\tprob")
    for rid, p in zip(belief.room_ids, belief.probs):
        print(f"{rid}\t{graph.rooms[rid].label}\t{p:.6f}")


def build_parser():
    ap = argparse.ArgumentParser(prog="seeknav", description="Semantic object-goal search planner and simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="scene graph tools")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    gb = gsub.add_parser("build", help="build a layered scene graph from a floor plan")
    gb.add_argument("floor_plan")
    gb.add_argument("--spacing", type=float, default=1.0, metavar="M")
    gb.add_argument("-o", "--output", required=True)
    gb.set_defaults(func=cmd_graph_build)

    p = sub.add_parser("plan", help="solve the room-level MDP and dump (J, policy)")
    p.add_argument("dsg")
    p.add_argument("prior")
    p.add_argument("--object", required=True)
    p.add_argument("--store")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run one seeded episode")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--trace")
    s.add_argument("--planner", choices=eh.PLANNERS)
    s.add_argument("--episode", type=int, default=0, help="episode index (selects the start)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="run a suite and write results.csv / report.json")
    e.add_argument("scenario")
    e.add_argument("-o", "--output", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("belief", help="belief tools")
    bsub = b.add_subparsers(dest="belief_command", required=True)
    bs = bsub.add_parser("show", help="print the initial room belief")
    bs.add_argument("prior")
    bs.add_argument("dsg")
    bs.add_argument("--object", required=True)
    bs.add_argument("--store")
    bs.set_defaults(func=cmd_belief_show)
    return ap


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except SeekError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"error: runtime failure: {e}", file=sys.stderr)
        return 3
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
