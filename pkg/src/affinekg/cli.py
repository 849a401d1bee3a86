"""Command-line entry point: ``affinekg <subcommand> [--config PATH] ...``.

Reports go to ``<out>/<subcommand>.json`` (deterministic given config and
seed), tables to CSV next to them, and run metadata with timestamps to
``<out>/<subcommand>.manifest.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import approx as ap
from . import constants as cst
from . import flow as fl
from . import goodness as gd
from ._backend import default_backend
from .exponents import check_condition
from .subspace import AffineSubspace, Ball, ScalarParseError, parse_scalar

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION = 0, 2, 3

DEFAULTS = {
    "subspace": {"A": [["sqrt2 - 1"], ["sqrt3 - 1"]], "digits": 60},
    "ball": {"center": [0], "radius": "1/2"},
    "psi": {"form": "power", "c": 1, "a": 2},
    "xi": 0.5,
    "bounds": {"Q": 64, "exponentQ": 1000, "height": 20, "grid": 10000, "tMax": 8,
               "kmHeight": 10, "kmGrid": 201, "kmT": [0, 2, 4, 6, 8], "kmPerRank": 70,
               "goodTrials": 100},
    "sampling": "grid",
    "seed": 0,
    "overrides": {},
    "output": {"dir": "runs"},
}


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _schema() -> dict:
    return json.loads(resources.files("affinekg").joinpath("data/config.schema.json").read_text())


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


@dataclass
class RunConfig:
    raw: dict
    H: AffineSubspace
    U: Ball
    psi: ap.PsiFunction

    @property
    def bounds(self) -> dict:
        return self.raw["bounds"]

    @property
    def digest(self) -> str:
        # where results go does not change what is computed
        body = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _scalar(value, pointer: str, digits: int):
    try:
        return parse_scalar(value, digits)[0]
    except ScalarParseError as e:
        raise ConfigError(pointer, f"cannot parse {value!r}: {e}") from None


def build_config(user: dict) -> RunConfig:
    """Validate against the schema, merge defaults and parse every field."""
    try:
        jsonschema.validate(user, _schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(_pointer(e.absolute_path), e.message) from None
    if "subspace" in user and {"a0", "Aprime", "s", "n"} & set(user["subspace"]):
        base = _merge(DEFAULTS, {})
        base["subspace"] = {"digits": 60}
        raw = _merge(base, user)
    else:
        raw = _merge(DEFAULTS, user)
    sub = raw["subspace"]
    digits = sub.get("digits", 60)
    if "A" in sub:
        if {"a0", "Aprime"} & set(sub):
            raise ConfigError("/subspace", "give either A or a0/Aprime, not both")
        rows = sub["A"]
        if len({len(r) for r in rows}) != 1:
            raise ConfigError("/subspace/A", "rows must have equal length")
        for i, r in enumerate(rows):
            for j, v in enumerate(r):
                _scalar(v, f"/subspace/A/{i}/{j}", digits)
        s, n = len(rows) - 1, len(rows) - 1 + len(rows[0])
        raw_a0, raw_Ap = rows[0], rows[1:]
    else:
        if "a0" not in sub or "Aprime" not in sub:
            raise ConfigError("/subspace", "a0 and Aprime are both required without A")
        raw_a0, raw_Ap = sub["a0"], sub["Aprime"]
        for i, v in enumerate(raw_a0):
            _scalar(v, f"/subspace/a0/{i}", digits)
        for i, r in enumerate(raw_Ap):
            for j, v in enumerate(r):
                _scalar(v, f"/subspace/Aprime/{i}/{j}", digits)
        s, n = len(raw_Ap), len(raw_Ap) + len(raw_a0)
    for key, val in (("s", s), ("n", n)):
        if key in sub and sub[key] != val:
            raise ConfigError(f"/subspace/{key}", f"matrix shape implies {key}={val}")
    try:
        H = AffineSubspace(s, n, raw_a0, raw_Ap, digits=digits)
    except ValueError as e:
        raise ConfigError("/subspace", str(e)) from None
    ball = raw["ball"]
    center = [float(_scalar(v, f"/ball/center/{i}", digits)) for i, v in enumerate(ball["center"])]
    radius = float(_scalar(ball["radius"], "/ball/radius", digits))
    if len(center) != s:
        raise ConfigError("/ball/center", f"needs {s} coordinates")
    if radius <= 0:
        raise ConfigError("/ball/radius", "must be positive")
    try:
        psi = ap.PsiFunction(**raw["psi"])
    except (TypeError, ValueError) as e:
        raise ConfigError("/psi", str(e)) from None
    if "point" in raw:
        if len(raw["point"]) != s:
            raise ConfigError("/point", f"needs {s} coordinates")
        for i, v in enumerate(raw["point"]):
            _scalar(v, f"/point/{i}", digits)
    return RunConfig(raw, H, Ball(tuple(center), radius), psi)


def load_config(path: str | None, args) -> RunConfig:
    user = {}
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("", f"cannot read config: {e}") from None
        if not isinstance(user, dict):
            raise ConfigError("", "config must be a JSON object")
    bounds = dict(user.get("bounds", {}))
    for flag, key in (("grid", "grid"), ("qmax", "Q"), ("height", "height"), ("tmax", "tMax")):
        if getattr(args, flag, None) is not None:
            bounds[key] = getattr(args, flag)
    if bounds:
        user["bounds"] = bounds
    if args.seed is not None:
        user["seed"] = args.seed
    if args.override_constants:
        try:
            user["overrides"] = _merge(user.get("overrides", {}),
                                       cst.load_overrides(args.override_constants))
        except (OSError, ValueError) as e:
            raise ConfigError("/overrides", str(e)) from None
    if args.out:
        user.setdefault("output", {})["dir"] = args.out
    return build_config(user)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if hasattr(o, "to_dict"):
        return _jsonable(o.to_dict())
    if isinstance(o, (str, int, bool)) or o is None:
        return o
    return str(o)


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, data):
    _atomic_write(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows: list[dict]):
    if not rows:
        return
    cols = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(_jsonable(v)) if isinstance(v, (list, dict)) else _jsonable(v)
                    for k, v in r.items()})
    _atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands; each returns (report, tables, exit code)
# ---------------------------------------------------------------------------


def _condition(cfg: RunConfig):
    b = cfg.bounds
    return check_condition(cfg.H, b["exponentQ"], b["height"])


def _pipeline_constants(cfg: RunConfig, require_pass: bool = True):
    cond = _condition(cfg)
    no_theta = cond.empirical_theta <= 0 and "theta" not in cfg.raw["overrides"]
    if cond.verdict != "pass" and (require_pass or no_theta):
        raise ap.PreconditionError(f"exponent condition {cond.verdict}", cond)
    S = ap.sum_psi_lattice(cfg.psi, cfg.H.n)
    consts = cst.from_condition(cfg.H, cfg.U, cond, xi=cfg.raw["xi"], sum_psi=S.value,
                                overrides=cfg.raw["overrides"])
    return cond, consts


def _kappa(cfg: RunConfig, consts) -> float:
    return float(cfg.raw["kappa"]) if "kappa" in cfg.raw else consts.kappa


def cmd_exponents(cfg: RunConfig):
    cond = _condition(cfg)
    d = cond.to_dict()
    rows = [{"j": r["j"], "value": r["estimate"]["value"], "infinite": r["estimate"]["infinite"],
             "slope": r["estimate"]["slope"], "margin": r["margin"]} for r in d["perJ"]]
    return d, {"exponents_per_j.csv": rows}, EXIT_OK


def cmd_constants(cfg: RunConfig):
    cond, consts = _pipeline_constants(cfg)
    return {"constants": consts.to_dict(), "condition": cond.to_dict()}, {}, EXIT_OK


def cmd_good_check(cfg: RunConfig):
    rng = np.random.default_rng(cfg.raw["seed"])
    trials = cfg.bounds["goodTrials"]
    out = {}
    for s, l in ((1, 1), (1, 2), (2, 1)):
        C, alpha = cst.good_constant(s, l)
        fails = 0
        worst = 0.0
        for _ in range(trials):
            f = gd.random_polynomial(s, l, rng)
            B = Ball(tuple(rng.uniform(-2, 2, size=s)), float(rng.uniform(0.05, 3)))
            sup = gd.sup_on_ball(f, B)
            res = gd.check_good(f, C, alpha, B, [sup * float(rng.uniform(1e-3, 1))], sup=sup)
            fails += not res.passed
            worst = max(worst, res.worst_ratio)
        out[f"s{s}_l{l}"] = {"C": C, "alpha": alpha, "trials": trials, "failures": fails,
                             "worstRatio": worst}
    out["properties"] = gd.property_suite(seed=cfg.raw["seed"]).to_dict()
    out["verdict"] = "pass" if all(v["failures"] == 0 for k, v in out.items() if k.startswith("s")) \
        and out["properties"]["verdict"] == "pass" else "fail"
    return out, {}, EXIT_OK


def cmd_flow_trace(cfg: RunConfig):
    _, consts = _pipeline_constants(cfg, require_pass=False)
    x = [parse_scalar(v, cfg.raw["subspace"].get("digits", 60))[0] for v in cfg.raw.get("point", [])] \
        or list(cfg.U.center)
    rows = fl.flow_trace(cfg.H, x, _kappa(cfg, consts), cfg.U.radius, consts.beta,
                         cfg.bounds["tMax"])
    report = {"point": [float(v) for v in x], "kappa": _kappa(cfg, consts), "beta": consts.beta,
              "trace": rows}
    return report, {"flow_trace_per_t.csv": rows}, EXIT_OK


def _km_params(cfg, consts, t):
    return fl.FlowParameters(t, _kappa(cfg, consts), cfg.U.radius, consts.beta, cfg.H.s, cfg.H.n)


def cmd_km_check(cfg: RunConfig):
    cond, consts = _pipeline_constants(cfg, require_pass=False)
    b = cfg.bounds
    H, U = cfg.H, cfg.U
    bounds = fl.km2_rank_bounds(consts.K2, consts.K3, consts.K5, H.s, H.n, U.radius)
    rows, km2 = [], []
    for t in b["kmT"]:
        rep = fl.verify_km2(H, U, _km_params(cfg, consts, t), b["kmGrid"], b["kmHeight"],
                            consts.rho, bounds)
        km2.append(rep.to_dict())
        rows.append({"t": t, "empiricalRho": rep.empirical_rho, "formulaRho": rep.formula_rho,
                     "pass": rep.passed})
    km1 = None
    if b["kmPerRank"]:
        bases = {k: fl.primitive_bases_array(H.s, H.n, k, b["kmHeight"]) for k in range(1, H.n + 2)}
        km1 = fl.verify_km1(H, U, _km_params(cfg, consts, b["kmT"][-1] if b["kmT"] else 0), bases,
                            per_rank=b["kmPerRank"], seed=cfg.raw["seed"]).to_dict()
    verdict = all(r["pass"] for r in rows) and (km1 is None or km1["pass"])
    return ({"km2": km2, "km1": km1, "rho": consts.rho, "rankBounds": bounds,
             "verdict": "pass" if verdict else "fail"}, {"km2_per_t.csv": rows}, EXIT_OK)


def cmd_nondiv(cfg: RunConfig):
    _, consts = _pipeline_constants(cfg, require_pass=False)
    H, U = cfg.H, cfg.U
    rows = []
    for t in cfg.bounds["kmT"]:
        p = _km_params(cfg, consts, t)
        for div in (2, 4, 8, 16):
            eps2 = consts.rho / div
            m = fl.measure_nondivergence(H, U, p, eps2, cfg.bounds["kmGrid"])
            rhs = fl.nondivergence_rhs(consts.C, consts.alpha, consts.rho, eps2, H.n + 1, H.s,
                                       consts.Ns, U.measure())
            rows.append({"t": t, "eps2": eps2, "measured": m.measured, "bound": rhs,
                         "pass": m.measured <= rhs})
    verdict = "pass" if all(r["pass"] for r in rows) else "fail"
    return {"rho": consts.rho, "rows": rows, "verdict": verdict}, {"nondiv.csv": rows}, EXIT_OK


def cmd_bad_set(cfg: RunConfig):
    if "kappa" in cfg.raw:
        kappa, consts = float(cfg.raw["kappa"]), None
    else:
        _, consts = _pipeline_constants(cfg)
        kappa = consts.kappa
    b = cfg.bounds
    tails = None
    if consts is not None:
        tails = ap.tail_bounds(consts, cfg.psi, kappa, b["Q"], consts.sum_psi)
    rep = ap.measure_bad_set(cfg.H, cfg.U, cfg.psi, kappa, b["Q"], b["grid"], cfg.raw["sampling"],
                             cfg.raw["seed"], tails)
    return rep.to_dict(), {"bad_set_per_q.csv": rep.per_q}, EXIT_OK


def cmd_main_theorem(cfg: RunConfig):
    b = cfg.bounds
    out = ap.main_theorem_experiment(
        cfg.H, cfg.U, cfg.psi, cfg.raw["xi"], Q=b["Q"], grid=b["grid"], t_max=b["tMax"],
        height=b["height"], exponent_Q=b["exponentQ"], overrides=cfg.raw["overrides"],
        mode=cfg.raw["sampling"], seed=cfg.raw["seed"])
    per_t = [{"t": r["t"], "Atilde": r["Atilde"]["measured"], "AtildeBound": r["Atilde"]["bound"],
              "At": r["At"]["measured"]} for r in out["perT"]]
    tables = {"main_per_t.csv": per_t, "main_per_q.csv": out.pop("badSetPerQ"),
              "large_gradient_per_q.csv": out.pop("largeGradientPerQ")}
    return out, tables, EXIT_OK


COMMANDS = {
    "exponents": cmd_exponents,
    "constants": cmd_constants,
    "good-check": cmd_good_check,
    "flow-trace": cmd_flow_trace,
    "km-check": cmd_km_check,
    "nondiv": cmd_nondiv,
    "bad-set": cmd_bad_set,
    "main-theorem": cmd_main_theorem,
}


def _versions() -> dict:
    out = {"affinekg": __version__, "python": platform.python_version()}
    for dist in ("numpy", "numba", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _verdicts(report: dict) -> dict:
    return {k: v for k, v in report.items() if k == "verdict" or k.endswith("Verdict")}


def build_parser() -> argparse.ArgumentParser:
    ap_ = argparse.ArgumentParser(prog="affinekg", description=__doc__.splitlines()[0])
    sub = ap_.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--override-constants", help="JSON file of constant overrides")
        p.add_argument("--grid", type=int)
        p.add_argument("--qmax", type=int)
        p.add_argument("--height", type=int)
        p.add_argument("--tmax", type=int)
    return ap_


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.config, args)
    except ConfigError as e:
        print(f"invalid config at {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg.raw["output"]["dir"])
    stem = args.command.replace("-", "_")
    try:
        report, tables, code = COMMANDS[args.command](cfg)
    except ap.PreconditionError as e:
        report = {"error": str(e), "condition": e.report.to_dict()}
        write_json(out_dir / f"{stem}.json", report)
        print(f"precondition failed: {e}", file=sys.stderr)
        code, tables = EXIT_PRECONDITION, {}
    for name, rows in tables.items():
        write_csv(out_dir / name, rows)
    if code == EXIT_OK:
        write_json(out_dir / f"{stem}.json", report)
    manifest = {
        "command": args.command,
        "configHash": cfg.digest,
        "config": cfg.raw,
        "versions": _versions(),
        "backend": default_backend(),
        "timestamps": {"started": started, "finished": time.time()},
        "exitCode": code,
        "verdicts": _verdicts(report),
        "constants": report.get("constants"),
        "outputs": sorted([f"{stem}.json", *tables]),
    }
    write_json(out_dir / f"{stem}.manifest.json", manifest)
    print(json.dumps(_jsonable(_verdicts(report) or {"written": str(out_dir / f'{stem}.json')})))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
