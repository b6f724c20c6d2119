"""Command-line client for the pobandit service.

Commands talk HTTP to the service app: in-process by default (no server
required), or to a remote instance via --server.  Config files are read
locally and inlined into requests; result files are written locally from
the response bodies, so a remote server never touches the client's
filesystem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from . import __version__
from .config import ConfigError, load_config


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app, base_url="http://pobandit.local")


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except Exception:
            detail = response.text
        raise SystemExit(f"error: {detail}")
    return response.json()


def _parse_belief(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise SystemExit(f"error: cannot parse belief {text!r}: {exc}")


def cmd_index(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    machine = config.machine(args.machine)
    arm_spec = None
    for spec in machine.arms:
        if spec.label == args.arm:
            arm_spec = spec
            break
    if arm_spec is None:
        known = ", ".join(a.label for a in machine.arms)
        raise SystemExit(f"error: no arm {args.arm!r} in machine {machine.name!r}; have: {known}")

    belief = _parse_belief(args.belief) if args.belief else arm_spec.initial_belief
    payload = {
        "arm": arm_spec.model_dump(),
        "belief": belief,
        "discount": args.discount if args.discount is not None else config.discount,
        "l_max": args.l_max if args.l_max is not None else config.l_max,
    }
    with make_client(args.server) as client:
        data = _post(client, "/index", payload)

    if args.json:
        print(json.dumps(data, indent=2))
        return 0
    never = lambda v: "never" if v is None else str(v)
    print(f"arm {arm_spec.label} @ belief {belief}")
    print(f"  index value        : {data['value']!r}")
    print(f"  denominator        : {data['denominator']!r}")
    print(f"  fallback_used      : {data['fallback_used']}")
    print(f"  threshold reward   : {data['threshold_reward']!r}")
    print(f"  crossing L(p_k, w) : {[never(v) for v in data['crossing_rows']]}")
    print(f"  crossing L(wP, w)  : {never(data['crossing_drift'])}")
    print(f"  f rows             : {data['f_rows']}")
    print(f"  f(wP)              : {data['f_drift']!r}")
    print(f"  g(wP)              : {data['g_drift']}")
    print(f"  condition number   : {data['condition_number']:.3e}")
    if data["reward_shift"]:
        print(f"  reward shift       : {data['reward_shift']!r}")
    if data["state_relabeling"]:
        print(f"  state relabeling   : {data['state_relabeling']}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    payload = {
        "config": config.model_dump(),
        "machine": args.machine,
        "seed": args.seed,
        "runs": args.runs,
        "select_count": args.select_count,
        "policies": args.policies.split(",") if args.policies else None,
        "horizon": args.horizon,
    }
    with make_client(args.server) as client:
        data = _post(client, "/compare", payload)

    out_path = args.output or config.output_path
    if out_path is None:
        out_path = f"{config.name}_{data['machine']}.csv"
    out = Path(out_path)
    out.write_text(data["csv"])
    companion = out.with_name(out.stem + "_companion" + out.suffix)
    companion.write_text(data["companion_csv"])

    summary = data["summary"]
    print(f"machine {data['machine']}: {summary['runs']} runs x {summary['horizon']} steps, "
          f"M={summary['select_count']}, seed={summary['seed']}")
    for policy, mean in summary["final_mean_cum_discounted"].items():
        err = summary["final_stderr"][policy]
        raw = summary["final_mean_cum_raw"][policy]
        print(f"  {policy:<11} cum discounted {mean:.4f} +- {err:.4f}   raw {raw:.4f}")
    if "whittle_minus_myopic_mean" in summary:
        print(f"  whittle - myopic (paired): {summary['whittle_minus_myopic_mean']:.4f} "
              f"+- {summary['whittle_minus_myopic_stderr']:.4f}")
    if summary["total_index_evals"]:
        frac = summary["fallback_evals"] / summary["total_index_evals"]
        print(f"  index fallback rate: {frac:.2e} "
              f"({summary['fallback_evals']}/{summary['total_index_evals']})")
    print(f"wrote {out} and {companion}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    payload = {
        "size": args.size,
        "seed": args.seed,
        "corrupt_analytic": args.corrupt_analytic,
    }
    with make_client(args.server) as client:
        data = _post(client, "/verify", payload)
    if data["warning"]:
        print(f"warning: {data['warning']}")
    for check in data["checks"]:
        print(check["line"])
    if not data["all_passed"]:
        print("verification FAILED")
        return 1
    print("verification passed")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pobandit",
        description="Approximate Whittle index policies for partially observable restless bandits",
    )
    parser.add_argument("--version", action="version", version=f"pobandit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="evaluate one arm's index with its ingredient breakdown")
    p_index.add_argument("--config", required=True, help="experiment config file")
    p_index.add_argument("--machine", default=None, help="machine name (default: first)")
    p_index.add_argument("--arm", required=True, help="arm label within the machine")
    p_index.add_argument("--belief", default=None, help="comma-separated belief (default: the arm's initial belief)")
    p_index.add_argument("--discount", type=float, default=None)
    p_index.add_argument("--l-max", type=int, default=None, dest="l_max")
    p_index.add_argument("--json", action="store_true", help="machine-readable output")
    p_index.add_argument("--server", default=None, help="base URL of a running service")
    p_index.set_defaults(func=cmd_index)

    p_cmp = sub.add_parser("compare", help="Monte Carlo policy comparison, CSV output")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--machine", default=None)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--runs", type=int, default=None)
    p_cmp.add_argument("--select-count", type=int, default=None, dest="select_count")
    p_cmp.add_argument("--policies", default=None, help="comma-separated policy list")
    p_cmp.add_argument("--horizon", type=int, default=None)
    p_cmp.add_argument("--output", default=None, help="result CSV path")
    p_cmp.add_argument("--server", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="run the randomized verification suites")
    p_ver.add_argument("--size", type=float, default=1.0, help="suite size multiplier (0 = empty report)")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--corrupt-analytic", action="store_true",
                       dest="corrupt_analytic", help=argparse.SUPPRESS)
    p_ver.add_argument("--server", default=None)
    p_ver.set_defaults(func=cmd_verify)

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
