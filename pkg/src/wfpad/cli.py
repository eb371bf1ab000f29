"""``wfpad`` command line: simulate, overhead, client, bridge, replay, genconf."""
from __future__ import annotations

import argparse
import asyncio
import logging
import os
import signal
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import (
    DEFENSE_IDS, BridgeConfig, ConfigError, DefenseSpec, format_config, generate_config,
    load_config,
)
from .simulator import SimulationStrategy, simulate_front, simulate_randomwt, simulate_tamaraw
from .synth import load_minicorpus, minicorpus_names
from .trace import TraceError, compute_overhead, read_trace, serialize_trace

PROG = "wfpad"
SIMULATED = ("tamaraw", "front", "randomwt")


class CliError(Exception):
    """Runtime failure reported as one line on stderr with exit status 1."""


def _flag(key: str) -> str:
    return "--" + key.split(".", 1)[1].replace("_", "-")


def _dest(key: str) -> str:
    return "p_" + key.replace(".", "_")


def defaults_table() -> str:
    lines = ["default parameters:"]
    for name in SIMULATED:
        params = DefenseSpec(name).config.to_params()
        lines.append(f"  {name}: " + ", ".join(f"{k.split('.', 1)[1]}={v}" for k, v in params.items()))
    kernel = {k: v for k, v in DefenseSpec("none").params().items()}
    lines.append("  kernel: " + ", ".join(f"{k.split('.', 1)[1]}={v}" for k, v in kernel.items()))
    return "\n".join(lines)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


# -- simulate -----------------------------------------------------------------

def _defense_spec(args, name: str) -> DefenseSpec:
    params = {}
    if args.config:
        config = load_config(args.config)
        if config.defense.name != name:
            raise CliError(f"{args.config} configures {config.defense.name}, not {name}")
        params.update(config.defense.params())
    for key in DefenseSpec(name).config.to_params():
        value = getattr(args, _dest(key))
        if value is not None:
            params[key] = value
    return DefenseSpec.from_params(name, params)


def _inputs(args) -> List[Tuple[str, object]]:
    """(name, trace) pairs for the simulate command."""
    if args.minicorpus:
        return list(zip(minicorpus_names(), load_minicorpus()))
    src = Path(args.input)
    if src.is_dir():
        return [(p.name, read_trace(p)) for p in sorted(src.glob("*.trace"))]
    return [(src.name, read_trace(src))]


def cmd_simulate(args) -> int:
    name = args.defense
    spec = _defense_spec(args, name)
    inputs = _inputs(args)
    single = not args.minicorpus and not Path(args.input).is_dir()
    out = Path(args.output)
    manifest = []
    for index, (trace_name, trace) in enumerate(inputs):
        rng = np.random.default_rng([args.seed, index]) if args.seed is not None else None
        if name == "tamaraw":
            defended = simulate_tamaraw(trace, spec.config, SimulationStrategy(args.strategy))
        elif name == "front":
            defended = simulate_front(trace, spec.config, rng)
        else:
            defended = simulate_randomwt(trace, spec.config, rng, cell_gap=args.cell_gap,
                                         literal_variance=not args.std_spread)
        if single:
            _atomic_write(out, serialize_trace(defended))
            return 0
        target = out / trace_name
        _atomic_write(target, serialize_trace(defended))
        if args.minicorpus:
            original = out / "undefended" / trace_name
            _atomic_write(original, serialize_trace(trace))
        else:
            original = Path(args.input) / trace_name
        manifest.append(f"{os.path.relpath(original, out)}\t{os.path.relpath(target, out)}\n")
    _atomic_write(out / "manifest.tsv", "".join(manifest))
    return 0


# -- overhead -----------------------------------------------------------------

def read_manifest(path: Path) -> List[Tuple[Path, Path]]:
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CliError(f"{path}:{lineno}: expected 'undefended<TAB>defended'")
        pairs.append(tuple((path.parent / p.strip()) for p in parts))
    return pairs


def overhead_report(pairs: Sequence[Tuple[Path, Path]]) -> str:
    loaded = [(read_trace(u), read_trace(d)) for u, d in pairs]
    report = compute_overhead(loaded)
    rows = ["undefended\tdefended\tdata_overhead\ttime_overhead"]
    for (u, d), (do, to) in zip(pairs, report.per_trace):
        rows.append(f"{u}\t{d}\t{do!r}\t{to!r}")
    rows.append(f"MEAN\t\t{report.data_overhead!r}\t{report.time_overhead!r}")
    return "\n".join(rows) + "\n"


def cmd_overhead(args) -> int:
    text = overhead_report(read_manifest(Path(args.pairs)))
    if args.output:
        _atomic_write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


# -- proxies ------------------------------------------------------------------

def _parse_addr(text: str) -> Tuple[str, int]:
    from .tunnel.proxy import parse_address
    try:
        return parse_address(text)
    except ValueError as exc:
        raise CliError(str(exc)) from None


async def _serve(proxy, host, port, capture: Optional[str]) -> None:
    await proxy.start(host, port)
    logging.getLogger(PROG).info("%s listening on %s:%d", proxy.side.value, host, proxy.port)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass
    try:
        await stop.wait()
    finally:
        await proxy.close()
        if capture:
            proxy.write_captures(capture)


def cmd_client(args) -> int:
    from .tunnel.proxy import ClientProxy
    config = load_config(args.config)
    host, port = _parse_addr(args.listen)
    proxy = ClientProxy(config, _parse_addr(args.bridge), seed=args.seed)
    asyncio.run(_serve(proxy, host, port, args.capture))
    return 0


def cmd_bridge(args) -> int:
    from .tunnel.proxy import BridgeProxy
    config = load_config(args.config)
    listen = args.listen or config.listen
    if not listen:
        raise CliError("no listen address: pass --listen or set 'listen' in the config")
    host, port = _parse_addr(listen)
    proxy = BridgeProxy(config, seed=args.seed)
    asyncio.run(_serve(proxy, host, port, args.capture))
    return 0


def cmd_replay(args) -> int:
    from .tunnel.replay import replay
    config = load_config(args.config)
    script = read_trace(args.script)
    result = replay(script, config.defense, seed=args.seed, secret=config.secret)
    defended = result.defended_trace()
    if args.capture_dir:
        out = Path(args.capture_dir)
        out.mkdir(parents=True, exist_ok=True)
        for capture in (result.client, result.bridge):
            with open(out / f"{capture.side}.capture", "w", encoding="utf-8") as f:
                capture.dump(f)
        _atomic_write(out / "defended.trace", serialize_trace(defended))
    summary = f"records client={len(result.client.records)} bridge={len(result.bridge.records)}"
    if len(script):
        report = compute_overhead([(script, defended)])
        summary += f" data_overhead={report.data_overhead:.4f} time_overhead={report.time_overhead:.4f}"
    summary += f" overruns={len(result.overruns)}"
    print(summary)
    if result.overruns:
        worst = max(o.late_by for o in result.overruns)
        print(f"{PROG}: warning: {len(result.overruns)} scripted writes ran late (worst "
              f"{worst * 1000:.1f} ms)", file=sys.stderr)
    return 0


def cmd_genconf(args) -> int:
    secret = None
    if args.seed is not None:
        secret = np.random.default_rng(args.seed).bytes(32)
    config = generate_config(args.defense, secret, args.listen)
    if args.multiplex:
        config = BridgeConfig(config.defense, config.secret, config.listen, True)
    text = format_config(config)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__, epilog=defaults_table(),
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="defend undefended traces in simulation",
                         epilog=defaults_table(), formatter_class=fmt)
    sim_sub = sim.add_subparsers(dest="defense", required=True)
    for name in SIMULATED:
        p = sim_sub.add_parser(name, help=f"simulate {name}", formatter_class=fmt,
                               epilog=defaults_table())
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("-i", "--input", help="trace file, or a directory of *.trace files")
        src.add_argument("--minicorpus", action="store_true", help="use the bundled mini-corpus")
        p.add_argument("-o", "--output", required=True,
                       help="output trace file, or a directory for corpus input "
                            "(gets a manifest.tsv for the overhead command)")
        p.add_argument("--config", help="read defense parameters from a config file")
        if name == "tamaraw":
            p.add_argument("--strategy", choices=[s.value for s in SimulationStrategy],
                           default="optimistic", help="slot strategy (default: optimistic)")
            p.add_argument("--seed", type=int, help="accepted for uniformity; tamaraw is deterministic")
        else:
            p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
        if name == "randomwt":
            p.add_argument("--cell-gap", type=float, default=0.0,
                           help="seconds between consecutive fake cells (default: 0)")
            p.add_argument("--std-spread", action="store_true",
                           help="use 0.1*tau as the fake RTT standard deviation instead of "
                                "its variance")
        for key, default in DefenseSpec(name).config.to_params().items():
            p.add_argument(_flag(key), dest=_dest(key), type=type(default),
                           help=f"(default: {default})")
        p.set_defaults(func=cmd_simulate)

    ov = sub.add_parser("overhead", help="data and time overhead of defended/undefended pairs")
    ov.add_argument("--pairs", required=True,
                    help="manifest: 'undefended<TAB>defended' per line, paths relative to it")
    ov.add_argument("-o", "--output", help="report TSV (default: stdout)")
    ov.set_defaults(func=cmd_overhead)

    cl = sub.add_parser("client", help="run the client proxy (SOCKS5 front-end)",
                        epilog=defaults_table(), formatter_class=fmt)
    cl.add_argument("--config", required=True)
    cl.add_argument("--listen", default="127.0.0.1:1080",
                    help="SOCKS listen address (default: 127.0.0.1:1080)")
    cl.add_argument("--bridge", required=True, help="bridge address host:port")
    cl.add_argument("--capture", help="append wire captures to this file on exit")
    cl.add_argument("--seed", type=int, help="seed the defense RNGs")
    cl.set_defaults(func=cmd_client)

    br = sub.add_parser("bridge", help="run the bridge proxy", epilog=defaults_table(),
                        formatter_class=fmt)
    br.add_argument("--config", required=True)
    br.add_argument("--listen", help="listen address (default: 'listen' from the config)")
    br.add_argument("--capture", help="append wire captures to this file on exit")
    br.add_argument("--seed", type=int, help="seed the defense RNGs")
    br.set_defaults(func=cmd_bridge)

    rp = sub.add_parser("replay", help="replay a trace through a local client/bridge pair",
                        epilog=defaults_table(), formatter_class=fmt)
    rp.add_argument("--script", required=True, help="undefended trace to replay")
    rp.add_argument("--config", required=True)
    rp.add_argument("--capture-dir", help="write client/bridge captures and defended.trace here")
    rp.add_argument("--seed", type=int, help="seed the defense RNGs")
    rp.set_defaults(func=cmd_replay)

    gc = sub.add_parser("genconf", help="write a config with default parameters and a new secret",
                        epilog=defaults_table(), formatter_class=fmt)
    gc.add_argument("defense", choices=list(DEFENSE_IDS))
    gc.add_argument("--out", help="output path (default: stdout)")
    gc.add_argument("--listen", help="bridge listen address to record")
    gc.add_argument("--multiplex", action="store_true", help="carry many streams per session")
    gc.add_argument("--seed", type=int,
                    help="derive the secret from a seed (reproducible, not secret; tests only)")
    gc.set_defaults(func=cmd_genconf)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format=f"{PROG}: %(message)s")
    if args.command == "simulate" and args.input is not None and Path(args.input).is_dir() \
            and Path(args.output).is_file():
        parser.error("directory input needs a directory output")
    try:
        return args.func(args)
    except (CliError, ConfigError, TraceError, OSError, ValueError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
