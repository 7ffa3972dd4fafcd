"""`simulate` command: a thin client of the HTTP service (in-process unless --server is given)."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .runner import EXIT_CONFIG, EXIT_IO


def make_client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        # starlette's test client warns about its httpx backend; the in-process path does not care
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def read_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return data


def submit(client, config_path, out_dir, vtk_every=None) -> dict:
    try:
        data = read_config(config_path)
    except ValueError as exc:
        return {"exit_code": EXIT_CONFIG, "status": "config_error", "message": str(exc), "out_dir": str(out_dir)}
    body = {"config": data, "out_dir": str(Path(out_dir).resolve()), "vtk_every": vtk_every}
    r = client.post("/runs", json=body)
    if r.status_code == 422:
        return {"exit_code": EXIT_CONFIG, "status": "config_error", "message": r.text, "out_dir": str(out_dir)}
    r.raise_for_status()
    return r.json()


def report(res: dict, path) -> None:
    line = f"{path}: {res['status']} (exit {res['exit_code']})"
    if res.get("stop_reason"):
        line += f" stop={res['stop_reason']}"
    print(line)
    if res.get("message"):
        print(f"  {res['message']}", file=sys.stderr)


def cmd_run(args) -> int:
    with make_client(args.server) as client:
        res = submit(client, args.config, args.out, args.vtk_every)
    report(res, args.config)
    return int(res["exit_code"])


def _sweep_one(job):
    path, out, vtk_every, server = job
    with make_client(server) as client:
        return path, submit(client, path, out, vtk_every)


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.configs))
    if not paths:
        print(f"no configs match {args.configs}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    jobs = [(p, out / Path(p).stem, args.vtk_every, args.server) for p in paths]
    worst = 0
    with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for path, res in pool.map(_sweep_one, jobs):
            report(res, path)
            worst = max(worst, int(res["exit_code"]))
    return worst


def cmd_presets(args) -> int:
    with make_client(args.server) as client:
        r = client.get("/presets")
        r.raise_for_status()
        for name in r.json():
            print(name)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("wingcrack.service:app", host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Multiscale injection-induced wing-crack simulator")
    p.add_argument("--server", default=None, help="service URL (default: in-process)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--vtk-every", type=int, default=None)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run independent scenarios concurrently")
    s.add_argument("--configs", required=True, help="glob of config files")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--vtk-every", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("presets", help="shipped scenario presets")
    pr_sub = pr.add_subparsers(dest="action", required=True)
    pl = pr_sub.add_parser("list")
    pl.set_defaults(func=cmd_presets)

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
