"""Command line front end: run sweeps, evaluate formulas, fit slopes.

Subcommands:
    sweep   run a configured antenna sweep, write results CSV + manifest JSON
    theory  print the closed-form quantities for one parameter set
    fit     fit empirical antenna efficiency from a sweep CSV

Exit codes: 0 success, 2 config/validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, theory
from .constellation import Constellation, ConstellationKind, custom_constellation, make_constellation
from .montecarlo import ExperimentConfig, SweepResult, VepCurve, PointStats, fit_slope, sweep

CSV_COLUMNS = [
    "m",
    "n",
    "detector",
    "trials",
    "errors",
    "vep",
    "ci_low",
    "ci_high",
    "sep",
    "theory_ml_lower",
    "theory_ml_union",
    "theory_zf_lower",
    "theory_zf_upper",
    "f_ml_ref",
    "f_zf_ref",
    "log_theory_ml_lower",
    "log_theory_ml_union",
    "log_theory_zf_lower",
    "log_theory_zf_upper",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """Configuration problem, already formatted with a file:line anchor."""


def _prob(x: float) -> str:
    return f"{x:.9e}"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# ---------------------------------------------------------------------------
# config loading


@dataclass
class Campaign:
    name: str
    config: ExperimentConfig
    echo: dict


def _line_of(text: str, *needles: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        for needle in needles:
            if stripped.startswith(needle):
                return i
    return 1


def _parse_symbols(raw) -> list[complex]:
    if isinstance(raw, str):
        pairs = [p for p in (chunk.strip() for chunk in raw.split(";")) if p]
        out = []
        for p in pairs:
            re_s, im_s = p.split(",")
            out.append(complex(float(re_s), float(im_s)))
        return out
    return [complex(float(re), float(im)) for re, im in raw]


def _build_constellation(fields: dict, path: str, text: str) -> Constellation:
    kind = str(fields.get("kind", "")).lower()
    if kind in ("psk", "qam"):
        if "M" not in fields:
            raise ConfigError(f"{path}:{_line_of(text, 'kind')}: constellation needs M for kind={kind}")
        return make_constellation(kind, int(fields["M"]))
    if kind == "custom":
        if "symbols" not in fields:
            raise ConfigError(f"{path}:{_line_of(text, 'kind')}: custom constellation needs symbols")
        return custom_constellation(_parse_symbols(fields["symbols"]))
    raise ConfigError(f"{path}:{_line_of(text, 'kind')}: unknown constellation kind {kind!r}")


def _ini_to_dict(path: str, text: str) -> dict:
    import configparser

    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case: "M" must stay "M"
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None) or 1
        raise ConfigError(f"{path}:{lineno}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    doc: dict = {"variants": {}}
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "constellation":
            doc["constellation"] = items
        elif section == "experiment":
            doc["experiment"] = items
        elif section.startswith("variant:"):
            doc["variants"][section.split(":", 1)[1]] = items
        else:
            raise ConfigError(f"{path}:{_line_of(text, '[' + section + ']')}: unknown section [{section}]")
    return doc


_EXPERIMENT_KEYS = {
    "detectors",
    "snr_db",
    "delta",
    "n",
    "m_grid",
    "trials",
    "master_seed",
    "target_errors",
    "ml_budget",
}
_CONSTELLATION_KEYS = {"kind", "M", "symbols"}


def _as_list(raw, cast):
    if isinstance(raw, str):
        return [cast(tok) for tok in raw.replace(",", " ").split()]
    return [cast(tok) for tok in raw]


def _resolve_campaign(
    name: str, base_exp: dict, base_const: dict, overrides: dict, path: str, text: str
) -> Campaign:
    exp = dict(base_exp)
    const = dict(base_const)
    for key, value in overrides.items():
        if key == "constellation":
            const = dict(value)
        elif key in _CONSTELLATION_KEYS:
            const[key] = value
        elif key in _EXPERIMENT_KEYS:
            # a variant switching user rule clears the other side
            if key == "n" and value not in (None, ""):
                exp.pop("delta", None)
            if key == "delta" and value not in (None, ""):
                exp.pop("n", None)
            if value in (None, ""):
                exp.pop(key, None)
            else:
                exp[key] = value
        else:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown key {key!r}")

    constellation = _build_constellation(const, path, text)

    def need(key):
        if key not in exp:
            raise ConfigError(f"{path}:{_line_of(text, '[experiment]')}: missing required key {key!r}")
        return exp[key]

    kwargs = {
        "constellation": constellation,
        "detectors": tuple(_as_list(need("detectors"), str)),
        "snr_db": float(need("snr_db")),
        "m_grid": tuple(_as_list(need("m_grid"), int)),
        "trials": int(exp.get("trials", 10000)),
        "master_seed": int(exp.get("master_seed", 0)),
    }
    if "n" in exp and exp["n"] not in (None, ""):
        kwargs["n"] = int(exp["n"])
    if "delta" in exp and exp["delta"] not in (None, ""):
        kwargs["delta"] = float(exp["delta"])
    if exp.get("target_errors") not in (None, ""):
        kwargs["target_errors"] = int(exp["target_errors"])
    if exp.get("ml_budget") not in (None, ""):
        kwargs["ml_budget"] = int(exp["ml_budget"])

    try:
        config = ExperimentConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        anchor_keys = [k for k in ("m_grid", "delta", "detector", "trials", "snr_db", "target_errors", "ml_budget", "n") if k in msg]
        lineno = _line_of(text, *(anchor_keys or ["[experiment]"]))
        raise ConfigError(f"{path}:{lineno}: {msg}") from exc

    echo_const: dict = {"kind": constellation.kind.value, "M": constellation.M}
    if constellation.kind is ConstellationKind.CUSTOM:
        echo_const["symbols"] = [[s.real, s.imag] for s in constellation.symbols]
    echo_exp: dict = {
        "detectors": list(config.detectors),
        "snr_db": config.snr_db,
        "m_grid": list(config.m_grid),
        "trials": config.trials,
        "master_seed": config.master_seed,
        "target_errors": config.target_errors,
        "ml_budget": config.ml_budget,
    }
    if config.n is not None:
        echo_exp["n"] = config.n
    else:
        echo_exp["delta"] = config.delta
    return Campaign(name=name, config=config, echo={"constellation": echo_const, "experiment": echo_exp})


def load_config(path: str, seed_override: int | None = None) -> list[Campaign]:
    """Parse an INI (key = value with sections) or JSON experiment file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such config file")
    text = p.read_text()
    if p.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    else:
        doc = _ini_to_dict(path, text)
    if "experiment" not in doc:
        raise ConfigError(f"{path}:1: missing [experiment] section")
    if "constellation" not in doc:
        raise ConfigError(f"{path}:1: missing [constellation] section")
    base_exp = dict(doc["experiment"])
    if seed_override is not None:
        base_exp["master_seed"] = seed_override
    campaigns = [_resolve_campaign("", base_exp, dict(doc["constellation"]), {}, path, text)]
    for name, overrides in doc.get("variants", {}).items():
        campaigns.append(
            _resolve_campaign(name, base_exp, dict(doc["constellation"]), dict(overrides), path, text)
        )
    return campaigns


# ---------------------------------------------------------------------------
# sweep


def _csv_rows(result: SweepResult):
    overlays = {(o.m, o.n): o for o in result.overlays}
    for point_idx, (m, n) in enumerate(result.config.grid_points()):
        o = overlays[(m, n)]
        for det in result.config.detectors:
            pt: PointStats = result.curves[det].points[point_idx]
            yield [
                str(m),
                str(n),
                det,
                str(pt.trials),
                str(pt.errors),
                _prob(pt.vep_hat),
                _prob(pt.ci_low),
                _prob(pt.ci_high),
                _prob(pt.sep_hat),
                _prob(math.exp(min(o.log_ml_lower, 0.0))),
                _prob(min(1.0, math.exp(min(o.log_ml_union, 0.0)))),
                _prob(math.exp(min(o.log_zf_vep_lower, 0.0))),
                _prob(min(1.0, math.exp(min(o.log_zf_vep_upper, 0.0)))),
                _fmt(o.f_ml_ref),
                _fmt(o.f_zf_ref),
                _prob(o.log_ml_lower),
                _prob(o.log_ml_union),
                _prob(o.log_zf_vep_lower),
                _prob(o.log_zf_vep_upper),
            ]


def _write_csv(result: SweepResult, out_path: Path) -> None:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(_csv_rows(result))


def _campaign_csv_path(out: Path, name: str) -> Path:
    if not name:
        return out
    return out.with_name(f"{out.stem}.{name}{out.suffix}")


def cmd_sweep(config_path: str, out_path: str, seed: int | None = None, threads: int = 1) -> int:
    campaigns = load_config(config_path, seed_override=seed)
    out = Path(out_path)
    manifest: dict = {
        "version": __version__,
        "config_file": str(config_path),
        "campaigns": [],
    }
    t0 = time.perf_counter()
    for camp in campaigns:
        result = sweep(camp.config, workers=threads)
        csv_path = _campaign_csv_path(out, camp.name)
        _write_csv(result, csv_path)
        manifest["campaigns"].append(
            {
                "name": camp.name,
                "csv": csv_path.name,
                "master_seed": camp.config.master_seed,
                "config": camp.echo,
                "duration_s": result.duration_s,
                "per_point_s": result.per_point_s,
            }
        )
        print(f"wrote {csv_path} ({len(result.config.m_grid)} grid points, "
              f"{result.duration_s:.2f}s)")
    manifest["duration_s"] = time.perf_counter() - t0
    manifest["master_seed"] = campaigns[0].config.master_seed
    manifest_path = out.with_suffix(".manifest.json")
    with open(manifest_path, "w", newline="") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {manifest_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# theory


def cmd_theory(
    kind: str,
    M: int,
    snr_db: float,
    delta: float | None = None,
    m: int | None = None,
    n: int | None = None,
    symbols: str | None = None,
) -> int:
    if kind.lower() == "custom":
        if not symbols:
            raise ConfigError("custom constellation needs --symbols")
        c = custom_constellation(_parse_symbols(symbols))
    else:
        c = make_constellation(kind, M)
    sigma2 = float(c.avg_energy / 10.0 ** (snr_db / 10.0))
    if n is not None and m is None:
        raise ConfigError("--n needs --m as well")
    if m is not None and n is None:
        if delta is None:
            raise ConfigError("--m needs --n or --delta to fix the user count")
        n = int(math.floor(delta * m + 0.5))
    params = theory.SystemParams.from_system(c, sigma2, m=m, n=n, delta=None if m else delta)

    rows: list[tuple[str, str]] = []
    rows.append(("constellation", f"{c.kind.value.upper()} M={c.M}"))
    rows.append(("d_min", _fmt(c.d_min)))
    rows.append(("avg_energy", _fmt(c.avg_energy)))
    rows.append(("sigma2", _fmt(sigma2)))
    rows.append(("rho", _fmt(params.rho)))
    f_ml = theory.antenna_efficiency_ml(params)
    rows.append(("f_ml_nats_per_antenna", _fmt(f_ml)))
    rows.append(("f_ml_db_per_antenna", _fmt(theory.efficiency_db_per_antenna(f_ml))))
    f_zf = theory.antenna_efficiency_zf(params)
    rows.append(("delta", _fmt(params.delta)))
    rows.append(("f_zf_nats_per_antenna", _fmt(f_zf)))
    rows.append(("f_zf_db_per_antenna", _fmt(theory.efficiency_db_per_antenna(f_zf))))
    thresh = theory.large_n_threshold(params.rho, params.M)
    rows.append(("large_n_threshold", _fmt(thresh)))
    if m is not None:
        rows.append(("m", str(m)))
        rows.append(("n", str(n)))
        rows.append(("ml_lower_bound", _prob(theory.ml_lower_bound(params))))
        rows.append(("ml_lower_bound_log", _fmt(theory.ml_lower_bound_log(params))))
        rows.append(("ml_union_bound", _prob(theory.ml_union_bound(params))))
        rows.append(("ml_union_bound_log", _fmt(theory.ml_union_bound_log(params))))
        big_n = theory.large_n_union_bound(params)
        if big_n is None:
            rows.append(("large_n_union_bound", "not-applicable (n below threshold)"))
        else:
            rows.append(("large_n_union_bound", _prob(big_n)))
            rows.append(("large_n_union_bound_log", _fmt(theory.large_n_union_bound_log(params))))
        sep_lo, sep_hi = theory.zf_sep_bounds(params)
        rows.append(("zf_sep_lower", _prob(sep_lo)))
        rows.append(("zf_sep_upper", _prob(sep_hi)))
        vep_lo, vep_hi = theory.zf_vep_bounds(params)
        rows.append(("zf_vep_lower", _prob(vep_lo)))
        rows.append(("zf_vep_upper", _prob(vep_hi)))
    else:
        rows.append(("bounds", "give --m (with --n or --delta) for bound values"))

    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _read_curves(csv_path: str) -> tuple[dict[str, VepCurve], dict[str, float]]:
    curves: dict[str, VepCurve] = {}
    refs: dict[str, float] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "detector" not in reader.fieldnames:
            raise ConfigError(f"{csv_path}:1: not a sweep results CSV (missing header)")
        for row in reader:
            det = row["detector"]
            curve = curves.setdefault(det, VepCurve(detector=det))
            trials = int(row["trials"])
            n = int(row["n"])
            vep = float(row["vep"])
            errors = int(row["errors"])
            curve.points.append(
                PointStats(
                    m=int(row["m"]),
                    n=n,
                    trials=trials,
                    errors=errors,
                    symbol_errors_total=0,
                    user1_errors=0,
                    vep_hat=vep,
                    ci_low=float(row["ci_low"]),
                    ci_high=float(row["ci_high"]),
                    sep_hat=float(row["sep"]),
                )
            )
            refs.setdefault("ml", float(row["f_ml_ref"]))
            refs.setdefault("zf", float(row["f_zf_ref"]))
    return curves, refs


def cmd_fit(csv_path: str, min_errors: int = 50) -> int:
    curves, refs = _read_curves(csv_path)
    if not curves:
        print("insufficient data: no result rows found", file=sys.stderr)
        return EXIT_RUNTIME
    fitted = 0
    for det, curve in curves.items():
        f_ref = refs["zf"] if det == "zf" else refs["ml"]
        try:
            fit = fit_slope(curve, min_errors=min_errors)
        except ValueError as exc:
            print(f"{det}: insufficient data ({exc})")
            continue
        fitted += 1
        ratio = fit.f_hat / f_ref if f_ref else float("nan")
        print(
            f"{det}: f_hat={_fmt(fit.f_hat)} nats/antenna  stderr={_fmt(fit.stderr)}  "
            f"r2={fit.r_squared:.6f}  points={list(fit.points_used)}  "
            f"f_theory={_fmt(f_ref)}  ratio={_fmt(ratio)}"
        )
    if fitted == 0:
        print("insufficient data: no detector had enough qualifying points", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimodet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run a configured antenna sweep")
    p_sweep.add_argument("--config", required=True, help="experiment file (INI or JSON)")
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_sweep.add_argument("--threads", type=int, default=1, help="worker processes (does not change results)")

    p_theory = sub.add_parser("theory", help="print closed-form quantities")
    p_theory.add_argument("--kind", required=True, choices=["psk", "qam", "custom"])
    p_theory.add_argument("--M", type=int, default=0, help="constellation size (psk/qam)")
    p_theory.add_argument("--symbols", default=None, help='custom symbols: "re,im; re,im; ..."')
    p_theory.add_argument("--snr-db", type=float, required=True)
    p_theory.add_argument("--delta", type=float, default=None)
    p_theory.add_argument("--m", type=int, default=None)
    p_theory.add_argument("--n", type=int, default=None)

    p_fit = sub.add_parser("fit", help="fit antenna efficiency from a sweep CSV")
    p_fit.add_argument("--csv", required=True, help="CSV written by the sweep subcommand")
    p_fit.add_argument("--min-errors", type=int, default=50)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, seed=args.seed, threads=args.threads)
        if args.command == "theory":
            if args.delta is None and args.m is None:
                raise ConfigError("theory needs --delta and/or --m with --n")
            return cmd_theory(
                args.kind,
                args.M,
                args.snr_db,
                delta=args.delta,
                m=args.m,
                n=args.n,
                symbols=args.symbols,
            )
        if args.command == "fit":
            return cmd_fit(args.csv, min_errors=args.min_errors)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
