"""Command line front end: ``lsshell run|check|export``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .config import parse_config, set_threads
from .errors import ConfigError, LSShellError, NumericalError, StructureVanishedError

log = logging.getLogger("lsshell")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VANISHED = 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, StructureVanishedError):
        return EXIT_VANISHED
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return 1


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsshell", description="Level set shell topology optimization.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="optimize a design (config file or preset name)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: output.dir of the config)")
    r.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    r.add_argument("--seed", type=int, help="reserved; the pipeline is deterministic")
    r.add_argument("--export-every", type=int, help="dump every N-th iteration, 0 = none")
    r.add_argument("--max-iters", type=int, help="override optimizer.max_iters")

    c = sub.add_parser("check", help="validate a config and report iteration-0 diagnostics")
    c.add_argument("config")
    c.add_argument("--threads", type=int)

    e = sub.add_parser("export", help="re-emit meshes and fields from a saved state")
    e.add_argument("state")
    e.add_argument("--out", help="output directory (default: next to the state file)")
    e.add_argument("--threads", type=int)
    return p


def _threads(cfg, override: Optional[int]) -> None:
    n = cfg["runtime"]["threads"] if override is None else override
    if n < 0:
        raise ConfigError(f"--threads must be nonnegative, got {n}")
    set_threads(n)


def cmd_run(args) -> int:
    from .optimizer import run

    cfg = parse_config(args.config)
    _threads(cfg, args.threads)
    if args.seed is not None:
        cfg.raw["runtime"]["seed"] = args.seed
    if args.export_every is not None and args.export_every < 0:
        raise ConfigError("--export-every must be nonnegative")
    out = Path(args.out or cfg["output"]["dir"])
    t0 = time.perf_counter()
    res = run(cfg, out_dir=out, export_every=args.export_every, max_iters=args.max_iters)
    print(f"{cfg.name}: F_init={io.fmt(res.F_init)} F_best={io.fmt(res.F_best)} (iter {res.best_iter}, "
          f"ratio {res.F_best / res.F_init:.4f}) stop={res.stop_reason} "
          f"time={time.perf_counter() - t0:.1f}s out={out}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .optimizer import Problem

    cfg = parse_config(args.config)
    _threads(cfg, args.threads)
    prob = Problem(cfg)
    ev = prob.evaluate(prob.psi0, with_sensitivity=False)
    g = prob.grid
    t = ev.topo
    lines = [
        f"config        {cfg.source}",
        f"grid          {g.shape[0]} x {g.shape[1]} x {g.shape[2]} nodes, h = {io.fmt(g.spacing)}",
        f"mesh          {ev.mesh.n_vertices} vertices, {ev.mesh.n_triangles} triangles",
        f"topology      components {t.components}, boundary loops {t.boundary_loops}, genus {t.genus}",
        f"dropped       {ev.dropped_triangles} unsupported triangles",
        f"F             {io.fmt(ev.F)}",
        f"G             {'-' if ev.G is None else io.fmt(ev.G)}",
        f"median 1/|grad phi|  {io.fmt(ev.inv_grad)}  (c = {io.fmt(cfg['optimizer']['c'])})",
    ]
    print("\n".join(lines))
    return EXIT_OK


def cmd_export(args) -> int:
    from .optimizer import Problem, load_state

    cfg, psi, psi_best = load_state(args.state)
    _threads(cfg, args.threads)
    out = Path(args.out) if args.out else Path(args.state).parent / "export"
    out.mkdir(parents=True, exist_ok=True)
    prob = Problem(cfg)
    oc = cfg["output"]
    for name, p in (("final", psi), ("best", psi_best)):
        ev = prob.evaluate(p)
        io.write_obj(out / f"{name}.obj", ev.mesh.vertices, ev.mesh.triangles)
        io.dump_iteration(out / name, prob.grid, ev, oc["vtk"], oc["obj"], oc["fields"])
    print(f"exported to {out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "check": cmd_check, "export": cmd_export}[args.command]
    try:
        return handler(args)
    except LSShellError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
