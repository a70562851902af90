"""
Command-line entry point.

    chanprice --config study1.json --out results/ --mode client --price-schedule constant-WH

Every mode writes CSV tables plus ``summary.json`` into ``--out``. Outputs
depend only on the config and seed, so reruns are byte-identical (wall-clock
timings are left out unless ``--timings`` is given).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
import traceback
from pathlib import Path

from .client_mdp import ClientSolution, PriceSchedule, value_iteration
from .config import MODES, RunConfig, load_config
from .errors import ChanpriceError, ConfigurationError
from .estimation import CovarianceLadder, build_ladder, fixed_point_residual, steady_state
from .game_sim import SimResult, play_equilibrium, simulate
from .server_pricing import (
    PriceLabel,
    ServerSolution,
    backward_thresholds,
    check_price_pattern,
    consistent_thresholds,
    discretize_policy,
    verify_leader_consistency,
)

log = logging.getLogger("chanprice")

SCHEDULES = ("constant-WL", "constant-WH", "constant-W0", "server")
CONSTRUCTIONS = ("standard", "consistent")

LADDER_HEADER = ["state_index", "trace"]
CLIENT_HEADER = ["stage", "state_index", "state_trace", "price_posted", "gamma_star", "value"]
SERVER_HEADER = ["stage", "state_index", "state_trace", "W_star", "discrete_price", "any_flag",
                 "L_index", "H_index"]
SIM_HEADER = ["metric", "mean", "std_error", "runs"]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.12g}"


def _write_csv(path: Path, header, rows) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        n = 0
        for row in rows:
            writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
            n += 1
    return n


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclasses.dataclass
class Context:
    config: RunConfig
    out: Path
    ladder: CovarianceLadder
    pbar_residual: float
    summary: dict
    timings: dict


def _prepare(config: RunConfig, out_dir) -> Context:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    Pbar = steady_state(config.model)
    ladder = build_ladder(config.model, Pbar, config.game.N)
    residual = fixed_point_residual(config.model, Pbar)
    summary = {
        "config": config.to_dict(),
        "Pbar": Pbar.to_rows(),
        "Pbar_residual": residual,
        "traces": list(ladder.traces),
    }
    return Context(config, out, ladder, residual, summary, {"ladder_s": time.perf_counter() - t0})


def _schedule(name: str, ctx: Context, construction: str = "standard") -> PriceSchedule:
    g = ctx.config.game
    if name == "constant-WL":
        return PriceSchedule.constant(g.WL, name)
    if name == "constant-WH":
        return PriceSchedule.constant(g.WH, name)
    if name == "constant-W0":
        return PriceSchedule.constant(g.W0, name)
    if name == "server":
        return _server(ctx, construction).price_schedule(g)
    raise ConfigurationError(f"unknown price schedule {name!r}; choose from {', '.join(SCHEDULES)}")


def _server(ctx: Context, construction: str) -> ServerSolution:
    g = ctx.config.game
    if construction == "standard":
        return discretize_policy(backward_thresholds(ctx.ladder, g), g)
    if construction == "consistent":
        return consistent_thresholds(ctx.ladder, g)
    raise ConfigurationError(f"unknown server construction {construction!r}")


def _client_rows(ctx: Context, client: ClientSolution, prices: PriceSchedule):
    N, t = ctx.config.game.N, ctx.ladder.traces
    for k in range(1, N + 1):
        for s in range(N + 1):
            yield [k, s, t[s], prices(k, s), int(client.gamma[k - 1, s]), float(client.V[k - 1, s])]


def _server_rows(ctx: Context, server: ServerSolution):
    g = ctx.config.game
    N, t = g.N, ctx.ladder.traces
    posted = server.posted_prices(g)
    for k in range(1, N + 1):
        L, H = server.fig2_thresholds[k - 1]
        for s in range(N + 1):
            label = server.discrete[k - 1][s]
            yield [k, s, t[s], float(server.Wstar[k - 1, s]), float(posted[k - 1, s]),
                   int(label is PriceLabel.ANY), L, H]


def _sim_rows(res: SimResult):
    yield ["JC", res.mean_JC, res.se_JC, res.runs]
    yield ["JS", res.mean_JS, res.se_JS, res.runs]


def _client_summary(client: ClientSolution) -> dict:
    return {"thresholds": client.thresholds, "monotone_rows": client.monotone,
            "V_1_0": float(client.V[0, 0])}


def _server_summary(ctx: Context, server: ServerSolution) -> dict:
    report = verify_leader_consistency(server, ctx.ladder, ctx.config.game)
    try:
        check_price_pattern(server)
        pattern_ok = True
    except ChanpriceError:
        pattern_ok = False
    return {
        "fig2_thresholds": [list(p) for p in server.fig2_thresholds],
        "fig2_pattern_ok": pattern_ok,
        "leader_consistency_discrepancies": [
            {"stage": d.stage, "state_index": d.state_index, "label": d.label.value,
             "gamma": d.gamma, "reachable": d.reachable}
            for d in report.discrepancies
        ],
    }


def _finish(ctx: Context, with_timings: bool) -> None:
    if with_timings:
        ctx.summary["timings"] = ctx.timings
    _write_json(ctx.out / "summary.json", ctx.summary)


def cmd_ladder(config: RunConfig, out_dir, timings: bool = False, **_) -> int:
    ctx = _prepare(config, out_dir)
    _write_csv(ctx.out / "ladder.csv", LADDER_HEADER, enumerate(ctx.ladder.traces))
    _finish(ctx, timings)
    return 0


def cmd_client(config: RunConfig, out_dir, price_schedule: str = "constant-WL",
               construction: str = "standard", timings: bool = False, **_) -> int:
    ctx = _prepare(config, out_dir)
    t0 = time.perf_counter()
    prices = _schedule(price_schedule, ctx, construction)
    client = value_iteration(ctx.ladder, config.game, prices)
    ctx.timings["client_s"] = time.perf_counter() - t0
    _write_csv(ctx.out / "client_policy.csv", CLIENT_HEADER, _client_rows(ctx, client, prices))
    ctx.summary["price_schedule"] = price_schedule
    ctx.summary["client"] = _client_summary(client)
    _finish(ctx, timings)
    return 0


def cmd_server(config: RunConfig, out_dir, construction: str = "standard", timings: bool = False, **_) -> int:
    ctx = _prepare(config, out_dir)
    t0 = time.perf_counter()
    server = _server(ctx, construction)
    ctx.timings["server_s"] = time.perf_counter() - t0
    _write_csv(ctx.out / "server_policy.csv", SERVER_HEADER, _server_rows(ctx, server))
    ctx.summary["construction"] = construction
    ctx.summary["server"] = _server_summary(ctx, server)
    _finish(ctx, timings)
    return 0


def cmd_equilibrium(config: RunConfig, out_dir, construction: str = "standard", timings: bool = False, **_) -> int:
    ctx = _prepare(config, out_dir)
    t0 = time.perf_counter()
    server, client, res = play_equilibrium(ctx.ladder, config.game, config.sim, construction)
    ctx.timings["equilibrium_s"] = time.perf_counter() - t0
    prices = server.price_schedule(config.game)
    _write_csv(ctx.out / "server_policy.csv", SERVER_HEADER, _server_rows(ctx, server))
    _write_csv(ctx.out / "client_policy.csv", CLIENT_HEADER, _client_rows(ctx, client, prices))
    _write_csv(ctx.out / "sim_summary.csv", SIM_HEADER, _sim_rows(res))
    ctx.summary["construction"] = construction
    ctx.summary["server"] = _server_summary(ctx, server)
    ctx.summary["client"] = _client_summary(client)
    _finish(ctx, timings)
    return 0


def cmd_simulate(config: RunConfig, out_dir, price_schedule: str = "server",
                 construction: str = "standard", timings: bool = False, **_) -> int:
    ctx = _prepare(config, out_dir)
    t0 = time.perf_counter()
    prices = _schedule(price_schedule, ctx, construction)
    client = value_iteration(ctx.ladder, config.game, prices)
    res = simulate(ctx.ladder, config.game, client, prices, config.sim)
    ctx.timings["simulate_s"] = time.perf_counter() - t0
    _write_csv(ctx.out / "sim_summary.csv", SIM_HEADER, _sim_rows(res))
    ctx.summary["price_schedule"] = price_schedule
    ctx.summary["client"] = _client_summary(client)
    ctx.summary["occupancy"] = res.occupancy.tolist()
    _finish(ctx, timings)
    return 0


COMMANDS = {
    "ladder": cmd_ladder,
    "client": cmd_client,
    "server": cmd_server,
    "equilibrium": cmd_equilibrium,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanprice",
                                description="Solve and simulate the channel pricing/selection game.")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=MODES, help="pipeline stage (overrides the config's mode)")
    p.add_argument("--price-schedule", choices=SCHEDULES, default=None,
                   help="prices the client responds to (client: constant-WL, simulate: server)")
    p.add_argument("--server-construction", choices=CONSTRUCTIONS, default="standard",
                   help="how threshold prices are derived (default: standard)")
    p.add_argument("--runs", type=int, help="override sim.runs")
    p.add_argument("--seed", type=int, help="override sim.seed")
    p.add_argument("--timings", action="store_true", help="add wall-clock timings to summary.json")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _origin(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(frames):
        path = Path(frame.filename)
        if path.parent.name == "chanprice":
            return path.stem
    return "chanprice"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        config = load_config(args.config)
        mode = args.mode or config.mode
        if mode is None:
            raise ConfigurationError("no mode given: pass --mode or set \"mode\" in the config")
        sim = config.sim
        if args.runs is not None or args.seed is not None:
            sim = dataclasses.replace(sim, runs=args.runs if args.runs is not None else sim.runs,
                                      seed=args.seed if args.seed is not None else sim.seed)
        config = dataclasses.replace(config, sim=sim, mode=mode)
        kwargs = {"construction": args.server_construction, "timings": args.timings}
        if args.price_schedule is not None:
            if mode not in ("client", "simulate"):
                raise ConfigurationError(f"--price-schedule does not apply to mode {mode!r}")
            kwargs["price_schedule"] = args.price_schedule
        log.info("running mode %s", mode)
        return COMMANDS[mode](config, args.out, **kwargs)
    except ConfigurationError as exc:
        print(f"chanprice: configuration error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    except ChanpriceError as exc:
        print(f"chanprice: {type(exc).__name__} [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
