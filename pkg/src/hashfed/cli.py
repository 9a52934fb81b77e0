"""Command-line client for the experiment service.

Each subcommand posts to the corresponding service endpoint and prints the
JSON report. By default the service runs in-process (artifacts land under
--out); pass --server URL to talk to a remote instance instead, in which case
artifacts live on that server and --out is ignored.
"""

import argparse
import json
import sys
from pathlib import Path


def _add_common(p: argparse.ArgumentParser, needs_config: bool = True):
    if needs_config:
        p.add_argument("--config", required=True, help="experiment config JSON path")
    p.add_argument("--out", default="out", help="artifact root (in-process mode)")
    p.add_argument("--server", default=None, help="remote service URL instead of in-process")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hashfed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-codes", help="generate a class codebook")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--bits", type=int, default=None, help="code length (default: minimum)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="out")
    p.add_argument("--server", default=None)

    p = sub.add_parser("train", help="train a run from a config")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a trained run")
    _add_common(p)

    p = sub.add_parser("attack-reconstruct", help="feature reconstruction attack")
    _add_common(p)
    p.add_argument("--party", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="TV weight")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--dump-pgm", action="store_true")

    p = sub.add_parser("attack-pgd", help="label-forcing perturbation attack")
    _add_common(p)
    p.add_argument("--party", type=int, default=0)
    p.add_argument("--omega", type=float, default=None, help="perturbation budget")
    p.add_argument("--eta", type=float, default=None, help="step size")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--targets", type=int, default=None)

    p = sub.add_parser("attack-pla", help="passive label inference probes")
    _add_common(p)
    p.add_argument("--party", type=int, default=0)

    p = sub.add_parser("detect", help="cross-party consistency audit")
    _add_common(p)
    p.add_argument("--reference", choices=["pairwise", "initiator"], default=None)

    p = sub.add_parser("dp-sweep", help="accuracy vs privacy budget")
    _add_common(p)
    p.add_argument(
        "--epsilon",
        default=None,
        help='comma-separated budgets, e.g. "1,2,10,inf"',
    )
    p.add_argument("--repeats", type=int, default=None)

    p = sub.add_parser("ablate", help="rerun with a stage disabled and compare")
    _add_common(p)
    p.add_argument("--toggle", choices=["bn", "consistency"], required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--out", default="out")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


class Client:
    """Uniform POST interface over in-process and remote transports."""

    def __init__(self, server: str | None, out_root: str):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            # the in-process client works fine; keep its import quiet
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(out_root))

    def post(self, path: str, payload: dict):
        resp = self._client.post(path, json=payload)
        try:
            body = resp.json()
        except ValueError:
            body = {"detail": resp.text}
        return resp.status_code, body


def _load_config(args, apply_seed: bool) -> dict:
    """Read the config file; training-style commands may override its seed.

    Attack-style commands leave the config untouched (it addresses an
    existing run by hash) and pass --seed as the attack seed instead.
    """
    cfg = json.loads(Path(args.config).read_text())
    if apply_seed and args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _overrides(args, names) -> dict:
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def _request(args) -> tuple[str, dict]:
    cmd = args.command
    if cmd == "gen-codes":
        return "/gen-codes", {"classes": args.classes, "code_bits": args.bits, "seed": args.seed}
    train_style = cmd in ("train", "eval", "ablate")
    payload = {"config": _load_config(args, apply_seed=train_style)}
    if not train_style and args.seed is not None:
        payload["seed"] = args.seed
    if cmd == "train":
        return "/train", payload
    if cmd == "eval":
        return "/eval", payload
    if cmd == "attack-reconstruct":
        payload.update(_overrides(args, ["party", "lam", "steps", "lr", "restarts"]))
        if args.dump_pgm:
            payload["dump_pgm"] = True
        return "/attack/reconstruct", payload
    if cmd == "attack-pgd":
        payload.update(_overrides(args, ["party", "omega", "eta", "steps", "targets"]))
        return "/attack/pgd", payload
    if cmd == "attack-pla":
        payload.update(_overrides(args, ["party"]))
        return "/attack/pla", payload
    if cmd == "detect":
        payload.update(_overrides(args, ["reference"]))
        return "/detect", payload
    if cmd == "dp-sweep":
        payload.update(_overrides(args, ["repeats"]))
        if args.epsilon is not None:
            payload["epsilons"] = [e.strip() for e in args.epsilon.split(",") if e.strip()]
        return "/dp-sweep", payload
    if cmd == "ablate":
        payload["toggle"] = args.toggle
        return "/ablate", payload
    raise ValueError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(args.out), host=args.host, port=args.port)
        return 0

    path, payload = _request(args)
    status, body = Client(args.server, args.out).post(path, payload)
    print(json.dumps(body, indent=2))
    if status >= 400:
        print(f"error: HTTP {status}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
