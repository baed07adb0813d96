"""Command-line workbench: codebook design, sweeps and link evaluation.

Settings resolve as command-line flags over a JSON config file (``--config``)
over built-in defaults. Every output carries the resolved settings and the
package version; CSV files carry them as leading ``#`` comment lines.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .allocation import (SinPhiTable, allocation_csv, allocation_table, closed_form, distortion_csv,
                         distortion_table, exhaustive)
from .direction import CACHE_ENV, CodebookCache, default_cache_dir, fit_extrapolation, sin_phi_csv
from .distributions import ChiSquare
from .exceptions import DomainError, InfeasibleCodebookError, OutageTargetError, UnsupportedModelError
from .link import PHI_MODES, SystemConfig, assemble, monte_carlo
from .magnitude import build_uniform_db, comparison_csv, optimize_numeric

COMMANDS = ("design-mag", "design-dir", "allocate", "distortion", "evaluate")

DEFAULTS = {
    "antennas": 5,
    "outage": 1e-4,
    "target_snr": 1.0,
    "seed": 0,
    "samples": 10**6,
    "phi_mode": "paper",
    "levels": 100,
    "n_range": [2, 128],
    "fit_range": [80, 100],
    "bits_range": [10, 30],
    "bits": 20,
    "allocation": "closed-form",
    "restarts": None,
}
# --restarts means numeric-optimizer restarts for design-mag, packing restarts elsewhere
DEFAULT_RESTARTS = {"design-mag": 20}
PACKING_RESTARTS = 4

# settings that only say where things go; they never change the numbers
_LOCATION_KEYS = ("out", "cache_dir", "config", "jobs")


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file of settings (keys as flag names with underscores)")
    p.add_argument("--antennas", "-M", type=int, default=S, help="transmit antennas (default 5)")
    p.add_argument("--outage", "-q", type=float, default=S, help="target outage probability (default 1e-4)")
    p.add_argument("--target-snr", type=float, default=S, help="target receive SNR gamma0 (default 1)")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--restarts", type=int, default=S)
    p.add_argument("--out", "-o", default=S, help="output file (stdout when omitted)")
    p.add_argument("--cache-dir", default=S, help=f"packing cache (default ${CACHE_ENV} or ~/.cache/fbquant)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="fbquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fbquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design-mag", help="uniform-dB vs numerically optimized magnitude codebook")
    _add_common(p)
    p.add_argument("--levels", "-N", type=int, default=S, help="magnitude levels (default 100)")

    p = sub.add_parser("design-dir", help="Grassmannian packings and the sin(phi) extrapolation fit")
    _add_common(p)
    p.add_argument("--n-range", type=int, nargs=2, metavar=("LO", "HI"), default=S)
    p.add_argument("--fit-range", type=int, nargs=2, metavar=("LO", "HI"), default=S)

    for name, text in (("allocate", "closed-form vs exhaustive bit allocation"),
                       ("distortion", "distortion of both allocations against the bound")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--bits", "-B", type=int, default=S)
        g.add_argument("--bits-range", type=int, nargs=2, metavar=("LO", "HI"), default=S)
        p.add_argument("--fit-range", type=int, nargs=2, metavar=("LO", "HI"), default=S)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of a product codebook link")
    _add_common(p)
    p.add_argument("--bits", "-B", type=int, default=S)
    p.add_argument("--allocation", default=S,
                   help="closed-form, exhaustive, or an explicit split 'BDOT,BDDOT'")
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--phi-mode", choices=PHI_MODES, default=S)
    p.add_argument("--jobs", type=int, default=S, help="worker threads (results do not depend on it)")
    p.add_argument("--fit-range", type=int, nargs=2, metavar=("LO", "HI"), default=S)
    return parser


def _keys_for(command: str) -> tuple[str, ...]:
    base = ("antennas", "outage", "target_snr", "seed", "restarts")
    extra = {
        "design-mag": ("levels",),
        "design-dir": ("n_range", "fit_range"),
        "allocate": ("bits_range", "fit_range"),
        "distortion": ("bits_range", "fit_range"),
        "evaluate": ("bits", "allocation", "samples", "phi_mode", "fit_range"),
    }[command]
    return base + extra


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into one validated settings dict."""
    given = vars(args).copy()
    command = given.pop("command")
    file_cfg = {}
    if "config" in given:
        try:
            file_cfg = json.loads(Path(given["config"]).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    keys = _keys_for(command)
    unknown = set(file_cfg) - set(keys) - set(_LOCATION_KEYS) - {"bits"}
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")

    cfg = {"command": command}
    for k in keys:
        cfg[k] = DEFAULTS[k]
    for source in (file_cfg, given):
        if command in ("allocate", "distortion") and "bits" in source:
            cfg["bits_range"] = [source["bits"], source["bits"]]
        for k in keys:
            if k in source:
                cfg[k] = source[k]
    if cfg["restarts"] is None:
        cfg["restarts"] = DEFAULT_RESTARTS.get(command, PACKING_RESTARTS)
    for k in ("n_range", "fit_range", "bits_range"):
        if k in cfg:
            cfg[k] = [int(v) for v in cfg[k]]
    _validate(cfg)

    loc = {k: given.get(k, file_cfg.get(k)) for k in ("out", "cache_dir", "jobs")}
    loc["jobs"] = int(loc["jobs"] or 1)
    if loc["jobs"] < 1:
        raise UsageError("--jobs must be at least 1")
    return cfg, loc


def _validate(cfg: dict) -> None:
    def need(ok, msg):
        if not ok:
            raise UsageError(msg)

    need(isinstance(cfg["antennas"], int) and cfg["antennas"] >= 3, "--antennas must be an integer >= 3")
    need(0.0 < float(cfg["outage"]) < 1.0, "--outage must lie strictly between 0 and 1")
    need(float(cfg["target_snr"]) > 0, "--target-snr must be positive")
    need(int(cfg["seed"]) >= 0, "--seed must be non-negative")
    need(int(cfg["restarts"]) >= 1, "--restarts must be at least 1")
    cmd = cfg["command"]
    if cmd == "design-mag":
        need(cfg["levels"] >= 2, "--levels must be at least 2")
    if "n_range" in cfg:
        lo, hi = cfg["n_range"]
        need(2 <= lo <= hi, "--n-range needs 2 <= LO <= HI")
    if "fit_range" in cfg:
        lo, hi = cfg["fit_range"]
        need(2 <= lo <= hi, "--fit-range needs 2 <= LO <= HI")
    if "bits_range" in cfg:
        lo, hi = cfg["bits_range"]
        need(1 <= lo <= hi, "--bits-range needs 1 <= LO <= HI")
    if cmd == "evaluate":
        need(cfg["bits"] >= 1, "--bits must be at least 1")
        need(cfg["samples"] >= 10**4, "--samples must be at least 10000")
        need(cfg["phi_mode"] in PHI_MODES, f"--phi-mode must be one of {PHI_MODES}")
        alloc = cfg["allocation"]
        if alloc not in ("closed-form", "exhaustive"):
            split = _parse_split(alloc)
            need(split is not None and split[0] >= 0 and split[1] >= 0 and sum(split) == cfg["bits"],
                 "--allocation must be closed-form, exhaustive or 'BDOT,BDDOT' summing to --bits")


def _parse_split(alloc):
    if isinstance(alloc, (list, tuple)):
        parts = list(alloc)
    else:
        parts = str(alloc).split(",")
    try:
        return tuple(int(v) for v in parts) if len(parts) == 2 else None
    except ValueError:
        return None


# --- output ------------------------------------------------------------------

def _provenance(cfg: dict) -> dict:
    return {"tool": "fbquant", "version": __version__, "config": cfg}


def _csv_with_header(cfg: dict, body: str, extra: dict | None = None) -> str:
    lines = [f"# fbquant {__version__}", "# config: " + json.dumps(cfg, sort_keys=True)]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: " + json.dumps(v, sort_keys=True))
    return "\n".join(lines) + "\n" + body


def _json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


def _sidecar(out, suffix: str):
    if out is None:
        return None
    path = Path(out)
    return path.with_name(path.stem + suffix)


def _cache(cfg, loc) -> CodebookCache:
    directory = loc["cache_dir"] or os.environ.get(CACHE_ENV) or default_cache_dir()
    return CodebookCache(directory, restarts=cfg["restarts"])


def _sin_phi(cfg, loc) -> SinPhiTable:
    return SinPhiTable(cfg["antennas"], _cache(cfg, loc), fit_range=tuple(cfg["fit_range"]), seed=cfg["seed"])


# --- commands ----------------------------------------------------------------

def cmd_design_mag(cfg: dict, loc: dict) -> None:
    model = ChiSquare(cfg["antennas"])
    q, N = float(cfg["outage"]), cfg["levels"]
    uniform = build_uniform_db(model, q, N)
    numeric = optimize_numeric(model, q, N, restarts=cfg["restarts"], seed=cfg["seed"])
    _emit(_csv_with_header(cfg, comparison_csv(uniform, numeric)), loc["out"])
    codebooks = _provenance(cfg)
    codebooks["uniform"] = uniform.to_dict(model, q)
    codebooks["numeric"] = numeric.to_dict(model, q)
    codebooks["numeric"]["converged"] = bool(numeric.converged)
    side = _sidecar(loc["out"], ".codebooks.json")
    if side is not None:
        _emit(_json(codebooks), side)


def cmd_design_dir(cfg: dict, loc: dict) -> None:
    M = cfg["antennas"]
    cache = _cache(cfg, loc)
    lo, hi = cfg["n_range"]
    flo, fhi = cfg["fit_range"]
    deltas = {n: cache.get(M, n, cfg["seed"]).delta for n in sorted(set(range(lo, hi + 1)) | set(range(flo, fhi + 1)))}
    fit = fit_extrapolation([(n, deltas[n]) for n in range(flo, fhi + 1)], M)
    rows = [(n, deltas[n], float(fit.sin_phi(n))) for n in range(lo, hi + 1)]
    extra = {"fit": {"coefficient": fit.coefficient, "slope": fit.slope, "fit_range": list(fit.fit_range)}}
    _emit(_csv_with_header(cfg, sin_phi_csv(rows), extra), loc["out"])


def _bits(cfg):
    lo, hi = cfg["bits_range"]
    return range(lo, hi + 1)


def cmd_allocate(cfg: dict, loc: dict) -> None:
    model = ChiSquare(cfg["antennas"])
    rows = allocation_table(model, float(cfg["outage"]), _bits(cfg), _sin_phi(cfg, loc))
    _emit(_csv_with_header(cfg, allocation_csv(rows)), loc["out"])


def cmd_distortion(cfg: dict, loc: dict) -> None:
    model = ChiSquare(cfg["antennas"])
    rows = distortion_table(model, float(cfg["outage"]), _bits(cfg), _sin_phi(cfg, loc))
    _emit(_csv_with_header(cfg, distortion_csv(rows)), loc["out"])


def cmd_evaluate(cfg: dict, loc: dict) -> None:
    model = ChiSquare(cfg["antennas"])
    q, B = float(cfg["outage"]), cfg["bits"]
    if cfg["allocation"] == "closed-form":
        alloc = closed_form(model.M, B)
        split = (alloc.Bdot, alloc.Bddot)
    elif cfg["allocation"] == "exhaustive":
        alloc = exhaustive(model, q, B, _sin_phi(cfg, loc), float(cfg["target_snr"]))
        split = (alloc.Bdot, alloc.Bddot)
    else:
        split = _parse_split(cfg["allocation"])
    sc = SystemConfig(model, q, float(cfg["target_snr"]), B, split)
    system = assemble(sc, _cache(cfg, loc), phi_mode=cfg["phi_mode"], seed=cfg["seed"])
    report = monte_carlo(system, cfg["samples"], seed=cfg["seed"], n_jobs=loc["jobs"])
    report.config = dict(cfg, split=list(split))
    doc = json.loads(report.to_json())
    doc["tool"] = "fbquant"
    doc["phi"] = system.phi
    doc["phi_effective"] = system.phi_eff
    if system.direction.covering_radius is not None:
        doc["covering_radius"] = system.direction.covering_radius
    _emit(_json(doc), loc["out"])


HANDLERS = {
    "design-mag": cmd_design_mag,
    "design-dir": cmd_design_dir,
    "allocate": cmd_allocate,
    "distortion": cmd_distortion,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, loc = resolve(args)
    except UsageError as exc:
        parser.error(str(exc))
    try:
        HANDLERS[cfg["command"]](cfg, loc)
    except (DomainError, OutageTargetError, UnsupportedModelError, InfeasibleCodebookError) as exc:
        print(f"fbquant: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
