"""Command line entry point: ``conet run`` and ``conet validate``."""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from . import sim
from .northbound import NorthboundApi, serve


def _parse_addr(text: str):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _load(args):
    return sim.load_topology(args.topology), sim.load_script(args.script)


def cmd_run(args) -> int:
    topo, script = _load(args)
    s = sim.Simulation(topo, script, seed=args.seed)
    server = None
    if args.serve:
        server = serve(NorthboundApi(s), *_parse_addr(args.serve))
        host, port = server.server_address[:2]
        print(f"northbound listening on http://{host}:{port}", file=sys.stderr)
    result = s.run()
    sim.write_trace(result.trace, args.trace_out)
    if args.events_out:
        sim.write_events(result.events, args.events_out)
    client = [h for h in s.hosts.values() if isinstance(h, sim.ClientHost)]
    delivered = sum(c.counters["data_received"] for c in client)
    print(f"{len(result.trace)} trace rows, {len(result.events)} events, {delivered} data packets delivered")
    if server is not None:
        print("run finished; northbound still serving, Ctrl-C to stop", file=sys.stderr)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            server.shutdown()
    return 0


def cmd_validate(args) -> int:
    topo, script = _load(args)
    print(
        f"ok: {len(topo.switches)} switches, {len(topo.hosts)} hosts, {len(topo.links)} links; "
        f"{len(script.phases)} phases over {script.duration_us / sim.US:g} s"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conet", description="ICN over OpenFlow domain simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--topology", help="topology JSON (default: shipped two-switch testbed)")
        p.add_argument("--script", help="experiment script JSON (default: shipped three-phase run)")

    run_p = sub.add_parser("run", help="run an experiment and write the traffic trace")
    config_args(run_p)
    run_p.add_argument("--trace-out", required=True, help="CSV trace destination")
    run_p.add_argument("--events-out", help="optional JSON-lines event log destination")
    run_p.add_argument("--serve", metavar="HOST:PORT", help="expose the northbound API on this address")
    run_p.add_argument("--seed", type=int, help="override the workload seed")
    run_p.set_defaults(fn=cmd_run)

    val_p = sub.add_parser("validate", help="check topology and script files")
    config_args(val_p)
    val_p.set_defaults(fn=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except sim.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
