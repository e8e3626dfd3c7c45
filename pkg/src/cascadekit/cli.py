"""Command-line client for the cascadekit service.

Every subcommand is a thin wrapper over one service endpoint. By default the
request is served in-process (no socket); pass --server to talk to a running
instance instead. Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .config import ARTIFACTS_ENV

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_KIND_TO_EXIT = {"usage": EXIT_USAGE, "data": EXIT_DATA, "internal": EXIT_INTERNAL}

ENDPOINTS = {
    "gen": "/v1/gen",
    "validate": "/v1/validate",
    "train-proxy": "/v1/train-proxy",
    "train-deferral": "/v1/train-deferral",
    "curves": "/v1/curves",
    "report": "/v1/report",
    "sweep": "/v1/sweep",
    "decide": "/v1/decide",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this artifact reserves 2 for data
    errors, so remap parser failures to the usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cascadekit",
        description="Cascade deferral pipeline: generate, validate, train, evaluate, decide.",
    )
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run-config file")
        p.add_argument("--server", help="base URL of a running service (default: in-process)")
        p.add_argument("--records", help="override records path")
        p.add_argument("--artifacts-dir", help=f"override artifacts dir (or ${ARTIFACTS_ENV})")
        p.add_argument("--reports-dir", help="override reports dir")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--k-folds", type=int, help="override fold count")
        p.add_argument("--methods", help="comma-separated method list")

    for name in ("gen", "validate", "train-proxy", "train-deferral", "curves", "report", "sweep"):
        p = sub.add_parser(name, help=f"run the {name} pipeline step")
        add_common(p)
        if name == "gen":
            p.add_argument("--world-n", type=int, help="override world size")
            p.add_argument("--world-seed", type=int, help="override world seed")
        if name == "train-proxy" or name == "sweep":
            p.add_argument("--proxy-fraction", type=float, help="proxy training subsample fraction")

    p = sub.add_parser("decide", help="route one record through a trained scorer")
    add_common(p)
    p.add_argument("--record-file", required=True, help="JSON file with one record object")
    p.add_argument("--method", default="bidir")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _config_payload(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as e:
            raise SystemExit(_fail(EXIT_USAGE, f"cannot read config {args.config}: {e}"))
        except json.JSONDecodeError as e:
            raise SystemExit(_fail(EXIT_USAGE, f"config {args.config} is not valid JSON: {e}"))
        if not isinstance(cfg, dict):
            raise SystemExit(_fail(EXIT_USAGE, "config root must be a JSON object"))
    for key, attr in (
        ("records", "records"),
        ("artifacts_dir", "artifacts_dir"),
        ("reports_dir", "reports_dir"),
        ("seed", "seed"),
        ("k_folds", "k_folds"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "methods", None):
        cfg["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "world_n", None) is not None or getattr(args, "world_seed", None) is not None:
        world = dict(cfg.get("world") or {})
        if getattr(args, "world_n", None) is not None:
            world["n"] = args.world_n
        if getattr(args, "world_seed", None) is not None:
            world["seed"] = args.world_seed
        cfg["world"] = world
    if getattr(args, "proxy_fraction", None) is not None:
        proxy = dict(cfg.get("proxy") or {})
        proxy["subsample_fraction"] = args.proxy_fraction
        cfg["proxy"] = proxy
    return cfg


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


async def _post_in_process(path: str, payload: dict) -> httpx.Response:
    from .service.app import app

    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport, base_url="http://cascadekit") as client:
        return await client.post(path, json=payload, timeout=None)


def _post(args: argparse.Namespace, path: str, payload: dict) -> httpx.Response:
    if args.server:
        with httpx.Client(base_url=args.server, timeout=None) as client:
            return client.post(path, json=payload)
    return asyncio.run(_post_in_process(path, payload))


def _handle_response(resp: httpx.Response) -> int:
    try:
        body = resp.json()
    except ValueError:
        return _fail(EXIT_INTERNAL, f"service returned non-JSON response (HTTP {resp.status_code})")
    if resp.status_code == 200:
        print(json.dumps(body, indent=2, sort_keys=True))
        return EXIT_OK
    detail = body.get("detail")
    if isinstance(detail, dict) and "kind" in detail:
        code = _KIND_TO_EXIT.get(detail["kind"], EXIT_INTERNAL)
        return _fail(code, detail.get("message", "unknown error"))
    if resp.status_code in (400, 422):
        return _fail(EXIT_USAGE, json.dumps(detail))
    return _fail(EXIT_INTERNAL, f"HTTP {resp.status_code}: {json.dumps(detail)}")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    payload: dict = {"config": _config_payload(args)}
    if args.command == "decide":
        try:
            with open(args.record_file, "r", encoding="utf-8") as fh:
                payload["record"] = json.load(fh)
        except OSError as e:
            return _fail(EXIT_DATA, f"cannot read record file {args.record_file}: {e}")
        except json.JSONDecodeError as e:
            return _fail(EXIT_DATA, f"record file {args.record_file} is not valid JSON: {e}")
        payload["method"] = args.method
        payload["threshold"] = args.threshold

    try:
        resp = _post(args, ENDPOINTS[args.command], payload)
    except httpx.HTTPError as e:
        return _fail(EXIT_INTERNAL, f"cannot reach service: {e}")
    return _handle_response(resp)


if __name__ == "__main__":
    sys.exit(main())
