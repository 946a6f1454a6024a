"""Command-line client for the gridtwin service.

By default every subcommand drives the service app in-process through an
ASGI transport, so no socket is opened and runs stay reproducible
offline; pass --server to target a running instance instead. Exit codes:
0 success, 1 validation failure (bad config/input, failed verification,
usage errors), 2 runtime error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from typing import Any, Optional

import httpx


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage problems exit 1, not 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


class _CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _request(server: Optional[str], method: str, path: str,
             payload: Optional[dict] = None) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.request(method, path, json=payload)

    from .service import app  # imported lazily to keep --help fast

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://gridtwin.local",
                                     timeout=600.0) as client:
            return await client.request(method, path, json=payload)

    return asyncio.run(go())


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise _CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise _CliError(f"config file is not valid JSON: {exc}") from None


def _finish(resp: httpx.Response) -> int:
    if resp.status_code == 200:
        print(json.dumps(resp.json(), indent=2, sort_keys=True))
        return 0
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    print(f"error ({resp.status_code}): {detail}", file=sys.stderr)
    if resp.status_code in (400, 403, 404, 422):
        return 1
    return 2


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required,
                        help="run config JSON file")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's root seed")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in-process")


def build_parser() -> _Parser:
    parser = _Parser(prog="gridtwin",
                     description="smart-building energy pipeline client")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic meter dataset")
    _add_common(p, config_required=False)
    p.add_argument("--hours", type=int, default=168)
    p.add_argument("--round3", action="store_true",
                   help="write 3-decimal presentation values")

    p = sub.add_parser("train-surrogate", help="train the consumption predictor")
    _add_common(p)

    p = sub.add_parser("train-agent", help="train the scheduling agent")
    _add_common(p)

    p = sub.add_parser("simulate", help="greedy real-time loop with ledger logging")
    _add_common(p)
    p.add_argument("--real-delay", action="store_true",
                   help="sleep the simulated consensus time for real")

    p = sub.add_parser("evaluate", help="metric reports and coverage table")
    _add_common(p)

    p = sub.add_parser("report-bundle", help="plot-ready CSVs from a finished run")
    _add_common(p)

    p = sub.add_parser("ledger", help="ledger utilities")
    ledger_sub = p.add_subparsers(dest="ledger_command", required=True)
    v = ledger_sub.add_parser("verify", help="verify a ledger file")
    v.add_argument("path", help="ledger file to check")
    v.add_argument("--server", default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except _CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "serve":
        import uvicorn
        uvicorn.run("gridtwin.service:app", host=args.host, port=args.port)
        return 0

    if args.command == "ledger":
        resp = _request(args.server, "POST", "/ledger/verify", {"path": args.path})
        if resp.status_code != 200:
            return _finish(resp)
        body = resp.json()
        if body["ok"]:
            print(body["message"])
            return 0
        index = body["bad_block_index"]
        where = f"block {index}" if index is not None else "file structure"
        print(f"ledger verification failed: {where}: {body['message']}", file=sys.stderr)
        return 1

    if args.command == "gen-data":
        payload: dict[str, Any] = {
            "seed": args.seed if args.seed is not None else 42,
            "hours": args.hours,
            "out_dir": args.out,
            "round3": args.round3,
        }
        if args.config:
            payload["config"] = _load_config(args.config)
            if args.seed is None:
                payload["seed"] = payload["config"].get("seed", 42)
        return _finish(_request(args.server, "POST", "/data/generate", payload))

    endpoint = {
        "train-surrogate": "/surrogate/train",
        "train-agent": "/agent/train",
        "simulate": "/simulate",
        "evaluate": "/evaluate",
        "report-bundle": "/report/bundle",
    }[args.command]
    payload = {
        "config": _load_config(args.config),
        "out_dir": args.out,
        "seed": args.seed,
    }
    if args.command == "simulate":
        payload["real_delay"] = args.real_delay
    return _finish(_request(args.server, "POST", endpoint, payload))


if __name__ == "__main__":
    sys.exit(main())
