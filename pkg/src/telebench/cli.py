"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 domain error, 3 audit or invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources

import numpy as np

from . import benchmark, lan, protocol, schur_weyl
from .errors import InvariantViolation, TelebenchError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_AUDIT = 0, 1, 2, 3

DEFAULTS = {
    "s_grid": "0.01:0.99:0.01",
    "n_list": "16,32,64,128",
    "r0": 0.5,
    "u": "0,0,0",
    "epsilon": 0.1,
    "delta": 0.05,
    "fock_n": 0,
    "grid_bins": 2048,
    "tau_k": 8,
    "mc": 200,
    "seed": None,
    "out": None,
    "format": None,
    "k_max": 40,
    "m_max": 400,
    "estimator": "exact",
    "localize": True,
    "swap": False,
    "oracle": False,
}
COMMAND_DEFAULTS = {
    "stochastic-order-audit": {"s_grid": "0.1:0.9:0.1"},
    "tau-optimize": {"s_grid": "0.3,0.5,0.9"},
    "protocol-risk": {"n_list": "100,200,400"},
    "lower-bound-gadget": {"s_grid": "0.3333333333333333", "n_list": "256"},
    "blocks-inspect": {"n_list": "2"},
}
STOCHASTIC = {"protocol-risk", "lower-bound-gadget"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> list:
    """``"a:b:step"`` (inclusive) or a comma list."""
    try:
        return _parse_grid(text)
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}") from exc


def _parse_grid(text: str) -> list:
    text = str(text).strip()
    if not text:
        raise UsageError("empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad range {text!r}")
        a, b, h = (float(p) for p in parts)
        if h <= 0:
            raise UsageError("range step must be positive")
        count = int(round((b - a) / h)) + 1
        vals = [round(a + i * h, 12) for i in range(max(count, 0))]
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise UsageError("empty grid")
    return vals


def parse_ints(text: str) -> list:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc
    if not vals:
        raise UsageError("empty n list")
    return vals


def parse_u(text) -> tuple:
    try:
        items = text if isinstance(text, (list, tuple)) else str(text).split(",")
        vals = [float(v) for v in items]
    except ValueError as exc:
        raise UsageError(f"bad --u {text!r}") from exc
    if len(vals) != 3:
        raise UsageError("--u needs three comma-separated numbers")
    return tuple(vals)


def load_schema(name: str) -> dict:
    return json.loads(resources.files("telebench").joinpath(f"schemas/{name}.schema.json").read_text())


def _write(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(rows: list, columns: list, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_benchmark_curve(cfg: dict) -> tuple:
    rows = []
    N = int(cfg["fock_n"]) or 500
    for s in parse_grid(cfg["s_grid"]):
        r = benchmark.optimal_risk(s)
        bf, tail = benchmark.geometric_l1(s, benchmark.reprepared_s(s), N, return_tail=True)
        rows.append({"s": s, "m0": benchmark.crossover_m0(s), "R*": r,
                     "brute_force_L1": bf, "abs_err": abs(r - bf), "tail_bound": tail})
    bad = [r for r in rows if not r["abs_err"] < 1e-10]
    text = _table(rows, ["s", "m0", "R*", "brute_force_L1", "abs_err", "tail_bound"], cfg["format"] or "csv")
    return text, EXIT_AUDIT if bad else EXIT_OK


def cmd_stochastic_order_audit(cfg: dict) -> tuple:
    L = int(cfg["m_max"]) + 1
    violations, checked = [], 0
    for s in parse_grid(cfg["s_grid"]):
        gamma = benchmark.reprepared_s(s)
        d0 = benchmark.amplifier_fock_output(0, gamma, L)
        for k in range(1, int(cfg["k_max"]) + 1):
            dk = benchmark.amplifier_fock_output(k, gamma, L)
            p, q = (dk, d0) if cfg["swap"] else (d0, dk)
            res = benchmark.stochastic_order_check(p, q)
            checked += 1
            if not res.ordered:
                violations.append({"s": s, "k": k, "m": res.witness})
    report = {"checked_pairs": checked, "m_max": L - 1, "violations": violations,
              "ordered": not violations}
    return json.dumps(report, indent=2, sort_keys=True) + "\n", EXIT_AUDIT if violations else EXIT_OK


def cmd_tau_optimize(cfg: dict) -> tuple:
    rows = []
    K = int(cfg["tau_k"])
    seed = 0 if cfg["seed"] is None else int(cfg["seed"])
    for s in parse_grid(cfg["s_grid"]):
        opt = benchmark.minimize_over_tau(s, K, seed=seed)
        R = benchmark.optimal_risk(s)
        rows.append({"s": s, "K": K, "vacuum_weight": float(opt.tau[0]), "risk": opt.risk,
                     "R*": R, "abs_err": abs(opt.risk - R), "converged": opt.converged})
    bad = any(r["vacuum_weight"] < 0.999 or r["abs_err"] > 1e-6 for r in rows)
    cols = ["s", "K", "vacuum_weight", "risk", "R*", "abs_err", "converged"]
    return _table(rows, cols, cfg["format"] or "csv"), EXIT_AUDIT if bad else EXIT_OK


def cmd_lan_converge(cfg: dict) -> tuple:
    seed = 0 if cfg["seed"] is None else int(cfg["seed"])
    rows = lan.lan_convergence_scan(parse_ints(cfg["n_list"]), parse_u(cfg["u"]), float(cfg["r0"]),
                                    N=int(cfg["fock_n"]), bins=int(cfg["grid_bins"]),
                                    epsilon=float(cfg["epsilon"]), seed=seed)
    cols = list(lan.SCAN_COLUMNS) + ["tolerance", "in_model"]
    return _table(rows, cols, cfg["format"] or "csv"), EXIT_OK


def cmd_protocol_risk(cfg: dict) -> tuple:
    reports = []
    for n in parse_ints(cfg["n_list"]):
        model = schur_weyl.QubitModel(float(cfg["r0"]), parse_u(cfg["u"]), n)
        run = protocol.ProtocolRun(model, float(cfg["epsilon"]), int(cfg["mc"]), int(cfg["seed"]),
                                   int(cfg["fock_n"]), int(cfg["grid_bins"]), bool(cfg["localize"]),
                                   cfg["estimator"])
        reports.append(json.loads(protocol.run_map_protocol(run).to_json()))
    return json.dumps(reports, indent=2, sort_keys=True) + "\n", EXIT_OK


def cmd_lower_bound_gadget(cfg: dict) -> tuple:
    out = []
    for s in parse_grid(cfg["s_grid"]):
        for n in parse_ints(cfg["n_list"]):
            rng = np.random.default_rng(int(cfg["seed"]))
            g = protocol.lower_bound_gadget(s, float(cfg["delta"]), n, rng=rng, samples=int(cfg["mc"]),
                                            epsilon=float(cfg["epsilon"]), N=int(cfg["fock_n"]),
                                            bins=int(cfg["grid_bins"]))
            out.append({"s": s, "n": n, "delta": float(cfg["delta"]), "risk": g.risk,
                        "stderr": g.stderr, "benchmark": g.benchmark, "slack": g.slack,
                        "total_slack": g.total_slack, "in_model_fraction": g.in_model_fraction,
                        "bound_holds": g.bound_holds, "slack_below_tenth": g.slack_small,
                        "seed": int(cfg["seed"])})
    return json.dumps(out, indent=2, sort_keys=True) + "\n", EXIT_OK


def cmd_blocks_inspect(cfg: dict) -> tuple:
    n = parse_ints(cfg["n_list"])[0]
    model = schur_weyl.QubitModel(float(cfg["r0"]), parse_u(cfg["u"]), n)
    d = schur_weyl.decompose(model)
    payload = d.to_dict()
    code = EXIT_OK
    if cfg["oracle"]:
        bf = schur_weyl.brute_force_decompose(schur_weyl.bloch_to_rho(model.bloch), n)
        err = 0.0
        for tj, b in d.blocks.items():
            err = max(err, abs(b.probability - bf.blocks[tj].probability),
                      float(np.abs(b.rho - bf.blocks[tj].rho).max()))
        payload["oracle_max_error"] = err
        if err > 1e-12:
            code = EXIT_AUDIT
    return json.dumps(payload, indent=2, sort_keys=True) + "\n", code


COMMANDS = {
    "benchmark-curve": (cmd_benchmark_curve, "closed-form risk vs brute force over an s grid"),
    "stochastic-order-audit": (cmd_stochastic_order_audit, "prefix-sum ordering of amplified Fock states"),
    "tau-optimize": (cmd_tau_optimize, "minimise the risk over diagonal preparation states"),
    "lan-converge": (cmd_lan_converge, "LAN distances along an n list"),
    "protocol-risk": (cmd_protocol_risk, "Monte Carlo risk of the adaptive protocol"),
    "lower-bound-gadget": (cmd_lower_bound_gadget, "Gaussian risk induced by a qubit MAP"),
    "blocks-inspect": (cmd_blocks_inspect, "dump a block decomposition as JSON"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("--s-grid", dest="s_grid", help="a:b:step or comma list")
    common.add_argument("--n-list", dest="n_list", help="comma list of qubit counts")
    common.add_argument("--r0", type=float)
    common.add_argument("--u", help="local parameter u_x,u_y,u_z")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--fock-n", dest="fock_n", type=int, help="Fock truncation (0 = automatic)")
    common.add_argument("--grid-bins", dest="grid_bins", type=int)
    common.add_argument("--tau-k", dest="tau_k", type=int)
    common.add_argument("--k-max", dest="k_max", type=int)
    common.add_argument("--m-max", dest="m_max", type=int)
    common.add_argument("--mc", type=int, help="Monte Carlo samples")
    common.add_argument("--seed", type=int)
    common.add_argument("--estimator", choices=["exact", "sampled"])
    common.add_argument("--no-localize", dest="localize", action="store_const", const=False)
    common.add_argument("--swap", action="store_const", const=True, help="audit the reversed pair")
    common.add_argument("--oracle", action="store_const", const=True,
                        help="cross-check against the brute-force decomposition")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    parser = _Parser(prog="telebench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the command's defaults, then the config file, then flags."""
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args)
        if args.command in STOCHASTIC and cfg["seed"] is None:
            raise UsageError(f"{args.command} needs --seed")
        func = COMMANDS[args.command][0]
        text, code = func(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (TelebenchError, ValueError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _write(text, cfg["out"])
    return code


if __name__ == "__main__":
    sys.exit(main())
