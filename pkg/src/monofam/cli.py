"""``monofam`` command line."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import isomorphism as iso_mod
from . import sections as sec
from . import sobolev as sob
from .errors import MonofamError, ResolutionError
from .family import load_family
from .report import _plain
from .suite import ConfigError, default_config_path, run_convergence, run_suite


def _p(text: str) -> float:
    v = float(text)
    if not v >= 1:
        raise argparse.ArgumentTypeError("p must be in [1, inf]")
    return v


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(target: str, text: str) -> None:
    if target == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_text(text)


def _load_pair(family_path, section_path):
    fam = load_family(family_path)
    u = sec.section_from_json(json.loads(Path(section_path).read_text()), fam)
    return fam, u


def cmd_check(args) -> int:
    path = args.config or default_config_path()
    out = args.out
    if args.config is None and out is None:
        out = "default_suite.report.json"
    code = run_suite(path, out=out, workers=args.workers)
    return code


def cmd_converge(args) -> int:
    study = run_convergence(args.config, args.out_dir)
    _emit(study.to_dict())
    return 0


def cmd_norm(args) -> int:
    _, u = _load_pair(args.family, args.section)
    _emit({"p": args.p, "value": sec.lp_direct_norm(u, args.p).value})
    if args.csv:
        _write_csv(args.csv, sec.norms_csv(u))
    return 0


def cmd_gradient(args) -> int:
    _, u = _load_pair(args.family, args.section)
    g = sob.minimal_upper_gradient(u, args.p)
    out = {"p": args.p, "lp_norm": g.lp_norm, "cell_values": g.cell_values}
    if args.oracle:
        o = sob.minimal_gradient_oracle(u, args.p)
        out["oracle_lp_norm"] = o.lp_norm
        out["oracle_gap"] = abs(o.lp_norm - g.lp_norm)
    _emit(out)
    if args.csv:
        lines = ["t_left,t_right,g"] + [f"{a!r},{b!r},{float(v)!r}" for a, b, v in
                                          zip(u.family.t[:-1].tolist(), u.family.t[1:].tolist(), g.cell_values)]
        _write_csv(args.csv, "\n".join(lines) + "\n")
    return 0


def cmd_iso(args) -> int:
    fam = load_family(args.family)
    cfg = json.loads(Path(args.iso).read_text())
    iso = iso_mod.isomorphism_from_json(fam, cfg)
    rep = iso_mod.estimate_M(fam, iso, seed=int(cfg.get("seed", 0)))
    _emit(rep.to_dict() if args.table else {k: v for k, v in rep.to_dict().items() if k != "per_pair_ratios"})
    if args.csv:
        _write_csv(args.csv, rep.ratios_csv())
    return 0


def cmd_blowup(args) -> int:
    table = iso_mod.composition_blowup_demo(args.n, args.s, args.t, args.a, args.mesh, args.exponent)
    _emit({"n": list(table.n_values), "ratio": list(table.ratios), "best_step": list(table.best_steps),
           "s": args.s, "t": args.t, "a": args.a, "mesh": args.mesh, "exponent": args.exponent})
    if args.csv:
        _write_csv(args.csv, table.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monofam", description="Sections of monotone families of normed spaces.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run a verification suite")
    c.add_argument("config", nargs="?", help="suite config (default: the packaged suite)")
    c.add_argument("--out", help="report path (default: from the config)")
    c.add_argument("--workers", type=int, default=None)
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("converge", help="run a convergence study")
    c.add_argument("config")
    c.add_argument("--out-dir", default=None)
    c.set_defaults(func=cmd_converge)

    c = sub.add_parser("norm", help="direct L^p norm of a section")
    c.add_argument("family")
    c.add_argument("section")
    c.add_argument("--p", type=_p, default=2.0)
    c.add_argument("--csv", help="write t, |u(t)|_t to this path ('-' for stdout)")
    c.set_defaults(func=cmd_norm)

    c = sub.add_parser("gradient", help="minimal upper gradient of a section")
    c.add_argument("family")
    c.add_argument("section")
    c.add_argument("--p", type=_p, default=2.0)
    c.add_argument("--oracle", action="store_true", help="also solve the all-pairs program (n <= 16)")
    c.add_argument("--csv", help="write cell gradients to this path ('-' for stdout)")
    c.set_defaults(func=cmd_gradient)

    c = sub.add_parser("iso", help="estimate the isomorphism constants")
    c.add_argument("family")
    c.add_argument("iso")
    c.add_argument("--csv", help="write the (s, t, ratio) table")
    c.add_argument("--table", action="store_true", help="include the per-pair ratios in the JSON")
    c.set_defaults(func=cmd_iso)

    c = sub.add_parser("blowup", help="composition-operator blow-up table")
    c.add_argument("--n", type=_ints, default=[16, 32, 64, 128])
    c.add_argument("--s", type=float, default=0.2)
    c.add_argument("--t", type=float, default=0.4)
    c.add_argument("--a", type=float, default=0.3)
    c.add_argument("--mesh", type=int, default=8192)
    c.add_argument("--exponent", type=float, default=2.0 / 3.0)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_blowup)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResolutionError as e:
        print(f"monofam: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"monofam: config error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as e:
        print(f"monofam: {e}", file=sys.stderr)
        return 2
    except (MonofamError, ValueError, KeyError) as e:
        print(f"monofam: invalid input: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
