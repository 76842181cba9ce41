"""Command-line front end.

Commands::

    radar-backscatter certify PLAN [--maxrate] [--oracle SEED] [--json]
    radar-backscatter sweep SCENARIO --out DIR [--trials N] [--seed S]
    radar-backscatter maxrate --L N --Q N [--M N] [--N N]

``SCENARIO`` is a TOML file or the name of a bundled preset (``fig3`` ...
``fig9``, ``table1``). Exit codes: 0 success or verdict, 2 configuration
error, 3 I/O error, 4 request beyond the exhaustive-search budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import tomli
import tomli_w

from . import __version__
from .encoding import (
    EncodingPlan,
    ScaleError,
    _parse_complex,
    check_restrictive_conditions,
    check_theorem_conditions,
    draw_data,
    largest_certified_rate,
    transmission_rate,
    uniqueness_oracle,
)
from .experiments import Scenario, run_scenario
from .model import SystemConfig, generate_channel
from .numerics import InvalidInputError

__all__ = [
    "ConfigError",
    "MANIFEST_SCHEMA_VERSION",
    "RESULT_COLUMNS",
    "PRESETS",
    "load_plan",
    "load_scenario",
    "dump_scenario",
    "preset_path",
    "write_results",
    "main",
]

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SCALE = 0, 2, 3, 4
MANIFEST_SCHEMA_VERSION = 1
# the first column is named after the sweep axis
RESULT_COLUMNS = (
    "decoder",
    "ber",
    "ber_se",
    "ber_repeated",
    "ber_private",
    "nrmse",
    "mean_iters",
    "converged_fraction",
    "trials",
    "frames",
    "failures",
    "condition_failures",
    "rate",
    "note",
)
TABLE_COLUMNS = ("L", "Q", "M", "N", "rate", "rate_decimal")
PRESETS = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "table1")


class ConfigError(ValueError):
    """A plan or scenario file that does not parse or validate."""


# --- files -------------------------------------------------------------------


def preset_path(name: str) -> Path:
    return Path(str(resources.files("radar_backscatter") / "presets" / f"{name}.toml"))


def _read_toml(path) -> dict:
    path = Path(path)
    if not path.exists() and str(path) in PRESETS:
        path = preset_path(str(path))
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _validated(path, build):
    try:
        return build()
    except ConfigError:
        raise
    except (InvalidInputError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _plan_from(d: dict) -> EncodingPlan:
    d = dict(d)
    d.pop("D0_block", None)
    if "pilot_counts" in d:
        extra = set(d) - {"pilot_counts", "Q", "L", "M", "D0"}
        if extra:
            raise ConfigError(f"unknown plan keys: {sorted(extra)}")
        return EncodingPlan.with_hadamard_pilots(d["Q"], d["L"], d["pilot_counts"], d.get("D0", 0), d.get("M", 2))
    return EncodingPlan.from_dict(d)


def load_plan(path):
    """Plan file: explicit ``pilots`` (row lists) or ``pilot_counts``; ``D0_block`` rows when ``D0 > 0``.

    Returns ``(plan, D0_block)``.
    """
    d = _read_toml(path)

    def build():
        plan = _plan_from(d)
        if "D0_block" in d:
            block = np.array([[_parse_complex(v) for v in row] for row in d["D0_block"]], dtype=complex)
            block = block.reshape(-1, plan.Q)
        elif plan.D0 == 0:
            block = np.zeros((0, plan.Q), dtype=complex)
        else:
            raise ConfigError(f"{path}: field 'D0_block' is required when D0 = {plan.D0}")
        if block.shape != (plan.D0, plan.Q):
            raise ConfigError(f"{path}: field 'D0_block' has shape {block.shape}, expected {(plan.D0, plan.Q)}")
        if not plan.alphabet.contains(block):
            raise ConfigError(f"{path}: field 'D0_block' has entries off the {plan.M}-PSK alphabet")
        return plan, block

    return _validated(path, build)


def load_scenario(path) -> Scenario:
    d = _read_toml(path)
    if d.get("kind") == "maxrate_table":
        raise ConfigError(f"{path}: a max-rate table is not a sweep scenario")
    return _validated(path, lambda: Scenario.from_dict(d))


def dump_scenario(s: Scenario) -> str:
    return tomli_w.dumps(s.to_dict())


def write_results(points, axis: str, path) -> None:
    rows = [r for p in points for r in p.rows()]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=(axis,) + RESULT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    Path(path).write_text(buf.getvalue())


# --- commands ----------------------------------------------------------------


def _verdict_text(v) -> str:
    return "holds" if v.holds else f"fails({v.failed})"


def cmd_certify(args) -> int:
    plan, block = load_plan(args.plan)
    theorem = check_theorem_conditions(plan, block)
    restrictive = check_restrictive_conditions(plan, block)
    rate = transmission_rate(plan)
    report = {
        "theorem": _verdict_text(theorem),
        "restrictive": _verdict_text(restrictive),
        "reference_subchannel": theorem.reference_subchannel,
        "rate": str(rate),
        "rate_decimal": float(rate),
    }
    if args.maxrate:
        best = largest_certified_rate(plan.L, plan.Q, plan.M)
        report["max_rate"] = str(best)
        report["max_rate_decimal"] = float(best)
    if args.oracle is not None:
        rng = np.random.default_rng(args.oracle)
        config = SystemConfig(Q=plan.Q, N=plan.N, L=plan.L, M=plan.M)
        data = draw_data(plan, rng)
        data[: plan.D0] = block
        result = uniqueness_oracle(plan, data, generate_channel(config, rng))
        report["oracle"] = "unique" if result.unique else "ambiguous"
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for key, value in report.items():
            print(f"{key}={value}")
    return EXIT_OK


def cmd_maxrate(args) -> int:
    rate = largest_certified_rate(args.L, args.Q, args.M, args.N)
    print(f"{rate} ({float(rate):.4f})")
    return EXIT_OK


def _maxrate_table(d: dict, path) -> List[dict]:
    def build():
        M, N = int(d.get("M", 2)), int(d.get("N", 1))
        rows = []
        for Q in d["Q"]:
            for L in d["L"]:
                rate = largest_certified_rate(int(L), int(Q), M, N)
                rows.append({"L": L, "Q": Q, "M": M, "N": N, "rate": str(rate), "rate_decimal": repr(float(rate))})
        return rows

    return _validated(path, build)


def _write_manifest(out: Path, description: dict, seed, started, files) -> None:
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "artifact_version": __version__,
        "scenario": description,
        "base_seed": seed,
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": [f.name for f in files],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_sweep(args) -> int:
    started = time.time()
    out = Path(args.out)
    raw = _read_toml(args.scenario)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if raw.get("kind") == "maxrate_table":
        rows = _maxrate_table(raw, args.scenario)
        name = str(raw.get("name", "table"))
        target = out / f"{name}.csv"
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        target.write_text(buf.getvalue())
        _write_manifest(out, raw, None, started, [target])
        print(f"wrote {target}")
        return EXIT_OK

    s = load_scenario(args.scenario)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if changes:
        s = _validated(args.scenario, lambda: Scenario.from_dict({**s.to_dict(), **changes}))
    points = run_scenario(s)
    target = out / f"{s.name}.csv"
    write_results(points, s.axis, target)
    resolved = out / "scenario.toml"
    resolved.write_text(dump_scenario(s))
    _write_manifest(out, s.to_dict(), s.base_seed, started, [target, resolved])
    failed = [n for n in s.decoders if all(n in p.decoders and p.decoders[n].frames == 0 for p in points)]
    if failed and len(failed) == len(s.decoders):
        print(f"every decoder failed at every point; see {target}", file=sys.stderr)
        return EXIT_SCALE
    print(f"wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radar-backscatter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="check the recovery conditions of a plan file")
    p.add_argument("plan")
    p.add_argument("--maxrate", action="store_true", help="also report the largest certified rate for (L, Q, M)")
    p.add_argument("--oracle", type=int, metavar="SEED", help="run the brute-force uniqueness oracle on one instance")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="run a Monte Carlo scenario")
    p.add_argument("scenario", help="TOML file or preset name")
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("maxrate", help="largest certified rate with Hadamard pilots")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--Q", type=int, required=True)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--N", type=int, default=1)
    p.set_defaults(func=cmd_maxrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
