"""Command-line interface: estimate | bound | project | majorant | sweep | reconcile.

Every run writes one directory (``--out``) holding manifest.json and
report.json, plus CSV artifacts where relevant.  The directory is assembled
in a temporary location and renamed into place, so failed runs leave
nothing behind.  Domain errors exit with status 2 and a JSON message on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .bounds import reconcile
from .errors import DimensionError, DomainError, SolverError
from .estimator import estimate_cm, estimate_contact_band, estimate_direct, gamma_sweep
from .gridfn import GridFn1D, GridFn2D, write_csv
from .majorant import least_concave_majorant, product_majorant, project_polar_cone, verify_projection
from .pillow_sim import DEFAULT_BLOCK
from .trends import parse_boundary, parse_product, parse_trend

COMMANDS = ("estimate", "bound", "project", "majorant", "sweep", "reconcile")

DEFAULTS = {
    "n": 16,
    "paths": 100_000,
    "seed": 0,
    "trend": "zero",
    "boundary": "const:0.5",
    "lower": None,
    "gammas": "2,4,6,8",
    "out": None,
    "tol": 1e-8,
    "blocks": DEFAULT_BLOCK,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pillowbound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with any of the flag names as keys")
        p.add_argument("--n", type=int, help="grid cells per axis (default 16)")
        p.add_argument("--paths", type=int, help="Monte Carlo paths (default 100000)")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--trend", help="trend spec, e.g. builtin:tent-product (default zero)")
        p.add_argument("--boundary", help="boundary spec, e.g. const:0.5 (default)")
        p.add_argument("--lower", help="lower boundary spec for band probabilities (default -boundary)")
        p.add_argument("--gammas", help="comma list of trend scalings for sweep (default 2,4,6,8)")
        p.add_argument("--out", help="output directory (default runs/<command>-<hash>)")
        p.add_argument("--tol", type=float, help="solver tolerance (default 1e-8)")
        p.add_argument("--blocks", type=int, help=f"paths per noise block (default {DEFAULT_BLOCK})")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DomainError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DomainError(f"config file is not valid JSON: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    if isinstance(cfg["gammas"], (list, tuple)):
        cfg["gammas"] = ",".join(str(g) for g in cfg["gammas"])
    for key in ("n", "paths", "blocks"):
        if int(cfg[key]) <= 0:
            raise DomainError(f"--{key} must be positive")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _versions() -> dict:
    import scipy

    out = {"pillowbound": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    if _kernels.HAVE_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


# ---------------------------------------------------------------------------
# commands; each returns (report dict, {filename: writer(path)})


def _cmd_estimate(cfg):
    n = cfg["n"]
    u = parse_boundary(cfg["boundary"], n)
    h = parse_trend(cfg["trend"], n)
    kw = dict(n_paths=cfg["paths"], seed=cfg["seed"], block_size=cfg["blocks"])
    report = {"direct": estimate_direct(u, h, **kw).to_dict()}
    if np.any(h.values != 0):
        pr = project_polar_cone(h, tol=cfg["tol"])
        report["cameron_martin"] = estimate_cm(u, h, pr.h_bar, stream_id=1, **kw).to_dict()
    return report, {}


def _cmd_bound(cfg, estimate_psi=False):
    n = cfg["n"]
    u = parse_boundary(cfg["boundary"], n)
    h = parse_trend(cfg["trend"], n)
    l = parse_boundary(cfg["lower"], n) if cfg["lower"] else None
    rep = reconcile(u, h, l, n_paths=cfg["paths"], seed=cfg["seed"], block_size=cfg["blocks"],
                    tol=cfg["tol"], estimate_psi=estimate_psi)
    return rep.to_dict(), {}


def _cmd_reconcile(cfg):
    return _cmd_bound(cfg, estimate_psi=True)


def _cmd_project(cfg):
    n = cfg["n"]
    h = parse_trend(cfg["trend"], n)
    pr = project_polar_cone(h, tol=cfg["tol"])
    report = pr.to_dict()
    report["verify"] = verify_projection(h, pr, tol=cfg["tol"])
    report["h_bar"] = "h_bar.csv"
    return report, {"h_bar.csv": lambda p: write_csv(pr.h_bar, p)}


def _cmd_majorant(cfg):
    n = cfg["n"]
    spec = cfg["trend"]
    if spec.startswith("product:"):
        h1, h2 = parse_product(spec, n)
        r1, r2 = least_concave_majorant(h1), least_concave_majorant(h2)
        prod = product_majorant(h1, h2)
        report = {
            "factors": [{"norm": r.norm, "knots": r.knots} for r in (r1, r2)],
            "norm_sq": r1.norm**2 * r2.norm**2,
            "h_tilde": "h_tilde.csv",
        }
        return report, {"h_tilde.csv": lambda p: write_csv(prod, p)}
    h = parse_trend(spec, n, dim=1)
    res = least_concave_majorant(h)
    report = {"norm": res.norm, "norm_sq": res.norm**2, "knots": res.knots, "h_tilde": "h_tilde.csv"}
    return report, {"h_tilde.csv": lambda p: write_csv(res.h_tilde, p)}


def _cmd_sweep(cfg):
    n = cfg["n"]
    u = parse_boundary(cfg["boundary"], n)
    h = parse_trend(cfg["trend"], n)
    try:
        gammas = [float(g) for g in str(cfg["gammas"]).split(",") if g.strip()]
    except ValueError:
        raise DomainError(f"bad --gammas list {cfg['gammas']!r}") from None
    pr = project_polar_cone(h, tol=cfg["tol"])
    rows = gamma_sweep(u, h, gammas, n_paths=cfg["paths"], seed=cfg["seed"], pr=pr,
                       block_size=cfg["blocks"])
    contact = estimate_contact_band(u, pr.contact_set, n_paths=cfg["paths"], seed=cfg["seed"],
                                    stream_id=1, block_size=cfg["blocks"])
    bracket = contact.log_p
    bracket_se = contact.log_std_err
    report = {
        "norm_sq": pr.norm**2,
        "rows": [
            {
                "gamma": r.gamma,
                "log_psi": r.log_psi_hat,
                "rate": r.rate_hat,
                "rate_std_err": r.rate_std_err,
                "remainder": r.remainder_hat,
                "std_err": r.std_err,
                "remainder_below_bracket": bool(r.remainder_hat <= bracket + 3 * math.hypot(r.std_err, bracket_se)),
                "flags": r.flags,
            }
            for r in rows
        ],
        "contact_band": contact.to_dict(),
        "remainder_upper_bracket": bracket,
        "sweep": "sweep.csv",
    }

    def write(path):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "log_psi", "rate", "remainder", "std_err"])
        for r in rows:
            w.writerow([repr(r.gamma), repr(r.log_psi_hat), repr(r.rate_hat), repr(r.remainder_hat),
                        repr(r.std_err)])
        Path(path).write_text(buf.getvalue())

    return report, {"sweep.csv": write}


HANDLERS = {
    "estimate": _cmd_estimate,
    "bound": _cmd_bound,
    "project": _cmd_project,
    "majorant": _cmd_majorant,
    "sweep": _cmd_sweep,
    "reconcile": _cmd_reconcile,
}


def run(cfg: dict) -> Path:
    """Execute one command and atomically publish its output directory."""
    digest = config_hash(cfg)
    out = Path(cfg["out"] or f"runs/{cfg['command']}-{digest[:12]}")
    report, artifacts = HANDLERS[cfg["command"]](cfg)
    manifest = {
        "command": cfg["command"],
        "config": cfg,
        "config_hash": digest,
        "seed": cfg["seed"],
        "block_size": cfg["blocks"],
        "versions": _versions(),
        "numba": _kernels.USE_NUMBA,
        "files": ["manifest.json", "report.json"] + sorted(artifacts),
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        (tmp / "report.json").write_text(_dump(report))
        for name, writer in artifacts.items():
            writer(tmp / name)
        (tmp / "manifest.json").write_text(_dump(manifest))
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = run(cfg)
    except (DomainError, DimensionError, SolverError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, SolverError):
            err["residual"] = exc.residual
        sys.stderr.write(json.dumps(err) + "\n")
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
