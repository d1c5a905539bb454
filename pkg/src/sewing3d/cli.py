"""Command-line front end: ``sewing3d <verb> --config FILE``.

Exit codes: 0 success, 2 invalid scenario, 3 theory not applicable,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .audit import audit_tables
from .cycles import (
    Y_RANGE,
    find_limit_cycle,
    focus_focus_analyze,
    periodic_surface,
    scan_cylinders,
)
from .errors import InvalidScenario, NumericFailure, SewingError, TheoryNotApplicable
from .model import (
    AffinePiece,
    CanonicalParams,
    FocusCanonicalParams,
    PiecewiseSystem,
    QuasinormalParams,
    QuasinormalPiece,
    canonicalize,
    reduce_to_quasinormal,
)
from .oracle import closure_residual, integrate
from .spectral import SpectralType, pair_invariants, structure_of

EXIT_OK, EXIT_INVALID, EXIT_THEORY, EXIT_NUMERIC = 0, 2, 3, 4
ORBIT_MAX_CROSSINGS = 10000

_QN_FIELDS = ("a11", "a12", "a13", "a21", "a22", "a23", "a33", "b1", "b2")
MODE_KEYS = {
    "canonical": CanonicalParams.keys(),
    "focus": FocusCanonicalParams.keys(),
    "quasinormal": tuple(f"{f}_{s}" for s in ("plus", "minus") for f in _QN_FIELDS),
    "raw": ("A_plus", "b_plus", "A_minus", "b_minus"),
}
OPTION_KEYS = {
    "y_min": float, "y_max": float, "t_max": float, "n_nodes": int,
    "y_grid": "floats", "x0": float, "y0": float, "z0": float, "t_end": float,
    "sweep_param": str, "sweep_start": float, "sweep_stop": float, "sweep_num": int,
    "audit_draws": int, "max_crossings": int,
}
REQUIRED_OPTIONAL = {"canonical": {"m"}, "focus": set(), "quasinormal": set(), "raw": set()}


@dataclass
class Scenario:
    mode: str
    params: dict
    options: dict = field(default_factory=dict)

    def system(self):
        """The scenario as canonical (or focus-canonical) parameters."""
        if self.mode == "canonical":
            return CanonicalParams(**self.params)
        if self.mode == "focus":
            return FocusCanonicalParams(**self.params)
        if self.mode == "quasinormal":
            return canonicalize(_quasinormal(self.params))
        red = reduce_to_quasinormal(self.raw_system())
        return canonicalize(red.params)

    def raw_system(self) -> PiecewiseSystem:
        p = self.params
        return PiecewiseSystem(
            AffinePiece(np.reshape(p["A_plus"], (3, 3)), np.asarray(p["b_plus"])),
            AffinePiece(np.reshape(p["A_minus"], (3, 3)), np.asarray(p["b_minus"])),
        )


def _quasinormal(p) -> QuasinormalParams:
    up = QuasinormalPiece(**{f: p.get(f + "_plus", 0.0) for f in _QN_FIELDS})
    lo = QuasinormalPiece(**{f: p.get(f + "_minus", 0.0) for f in _QN_FIELDS})
    return QuasinormalParams(up, lo)


# ---------------------------------------------------------------------------
# config parsing


def _number(key, text, where):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise InvalidScenario(f"{where}: key '{key}' expects a number, got {text!r}") from None
    if not math.isfinite(v):
        raise InvalidScenario(f"{where}: key '{key}' must be finite")
    return v


def _numbers(key, value, where):
    if isinstance(value, str):
        value = [s for s in value.replace(";", ",").split(",") if s.strip()]
    if not isinstance(value, (list, tuple)):
        value = [value]
    flat = []
    for v in value:
        if isinstance(v, (list, tuple)):
            flat.extend(_numbers(key, v, where))
        else:
            flat.append(_number(key, v, where))
    return flat


def parse_config(text: str, source: str = "<config>") -> Scenario:
    """Parse a key=value or JSON scenario description."""
    stripped = text.strip()
    entries: list[tuple[str, object, str]] = []
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise InvalidScenario(f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise InvalidScenario(f"{source}: JSON config must be an object")
        entries = [(k, v, f"{source}: key '{k}'") for k, v in obj.items()]
    else:
        seen = set()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidScenario(f"{source}:{n}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise InvalidScenario(f"{source}:{n}: empty key")
            if k in seen:
                raise InvalidScenario(f"{source}:{n}: duplicate key '{k}'")
            seen.add(k)
            entries.append((k, v, f"{source}:{n}"))

    mode = "canonical"
    for k, v, where in entries:
        if k == "mode":
            mode = str(v).strip()
    if mode not in MODE_KEYS:
        raise InvalidScenario(f"{source}: unknown mode {mode!r}; expected one of {sorted(MODE_KEYS)}")
    allowed = set(MODE_KEYS[mode])
    params, options = {}, {}
    for k, v, where in entries:
        if k == "mode":
            continue
        if k in allowed:
            if mode == "raw":
                params[k] = _numbers(k, v, where)
            else:
                params[k] = _number(k, v, where)
        elif k in OPTION_KEYS:
            kind = OPTION_KEYS[k]
            if kind == "floats":
                options[k] = _numbers(k, v, where)
            elif kind is str:
                options[k] = str(v).strip()
            elif kind is int:
                x = _number(k, v, where)
                if x != int(x):
                    raise InvalidScenario(f"{where}: key '{k}' expects an integer")
                options[k] = int(x)
            else:
                options[k] = _number(k, v, where)
        else:
            raise InvalidScenario(f"{where}: unknown key '{k}' for mode '{mode}'")
    if mode in ("canonical", "focus", "raw"):
        missing = [k for k in MODE_KEYS[mode] if k not in params and k not in REQUIRED_OPTIONAL[mode]]
        if missing:
            raise InvalidScenario(f"{source}: missing keys for mode '{mode}': {', '.join(missing)}")
    if mode == "raw":
        for k, n in (("A_plus", 9), ("A_minus", 9), ("b_plus", 3), ("b_minus", 3)):
            if len(params[k]) != n:
                raise InvalidScenario(f"{source}: key '{k}' needs {n} numbers, got {len(params[k])}")
    return Scenario(mode, params, options)


def load_config(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidScenario(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path)


# ---------------------------------------------------------------------------
# output


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, SpectralType):
        return json.dumps(obj.value)
    return json.dumps(str(obj))


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r])
    return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


# ---------------------------------------------------------------------------
# commands


def _spectral_dict(sd):
    return {
        "type": sd.type.value,
        "lambda1": sd.lambda1,
        "lambda2": _cplx(sd.lambda2),
        "lambda3": _cplx(sd.lambda3),
        "s": sd.s,
    }


def _cplx(z):
    z = complex(z)
    return z.real if z.imag == 0 else {"re": z.real, "im": z.imag}


def _y_range(sc: Scenario):
    return sc.options.get("y_min", Y_RANGE[0]), sc.options.get("y_max", Y_RANGE[1])


def cmd_classify(sc: Scenario) -> dict:
    system = sc.system()
    out: dict = {"mode": sc.mode, "params": system.as_dict()}
    if isinstance(system, FocusCanonicalParams):
        out["pair"] = ["Fo", "Fo"]
        out["structure"] = {"kind": "FocusFocus", "clause": "focus-focus: at most one invariant cylinder",
                            "note": "routed to the focus path: at most one invariant cylinder"}
        return out
    inv = pair_invariants(system)
    st = structure_of(inv)
    out["pair"] = [inv.pair[0].value, inv.pair[1].value]
    out["upper"] = _spectral_dict(inv.upper)
    out["lower"] = _spectral_dict(inv.lower)
    out["invariants"] = {
        "alpha": inv.alpha, "beta": inv.beta, "kappa": inv.kappa, "lambda": inv.lambda_,
        "alpha_source": inv.alpha_source, "swapped": inv.swapped, "note": inv.note,
    }
    if inv.kappa not in (None, 0.0) and inv.alpha is not None and inv.lambda_ is not None:
        out["invariants"]["boundary_value"] = 1.0 + inv.alpha**2 * inv.lambda_ / inv.kappa
    out["structure"] = {"kind": st.kind, "clause": st.clause, "listed": st.listed, "reason": st.reason}
    if st.kind == "FocusFocus":
        out["structure"]["note"] = "routed to the focus path: at most one invariant cylinder"
    return out


def _cyl_dict(c):
    return {"y0": c.y0, "y1": c.y1, "tau_plus": c.tau_plus, "tau_minus": c.tau_minus,
            "residual": c.residual, "flag": c.flag}


def _outcome_dict(params, out):
    d = {"kind": out.kind, "rho": out.rho, "xi": out.xi, "B": out.B, "C": out.C}
    if out.cycle is not None:
        c = out.cycle
        d.update({"x0": c.x0, "x1": c.x1, "period": c.period, "multiplier": c.multiplier,
                  "stability": c.stability, "closure_residual": closure_residual(params, c.x0, c.y0)})
    return d


def cmd_cycles(sc: Scenario) -> dict:
    system = sc.system()
    yr = _y_range(sc)
    kw = {"t_max": sc.options.get("t_max"), "n_nodes": sc.options.get("n_nodes", 512)}
    if isinstance(system, FocusCanonicalParams):
        res = focus_focus_analyze(system, yr, **kw)
        out = {"pair": ["Fo", "Fo"], "cylinders": [_cyl_dict(c) for c in res.cylinders], "diagnostics": res.diagnostics}
        out["cycles"] = [_outcome_dict(system, res.outcome)] if res.outcome is not None else []
        return out
    try:
        st = structure_of(pair_invariants(system))
    except TheoryNotApplicable:
        st = None
    scan = scan_cylinders(system, yr, expected=st, **kw)
    out = {
        "structure": st.kind if st is not None else "Unclassified",
        "continuum": scan.continuum,
        "cylinder_count": "continuum" if scan.continuum else len(scan.cylinders),
        "undefined_nodes": len(scan.undefined),
        "diagnostics": scan.diagnostics,
    }
    if scan.continuum:
        grid = sc.options.get("y_grid")
        if grid:
            surf = periodic_surface(system, grid)
            out["surface"] = [
                {"y0": y, "x0": x0, "x1": x1, "period": T, "amplitude": a,
                 "closure_residual": closure_residual(system, x0, y)}
                for (y, x0, x1, T), a in zip(surf.samples, surf.amplitude)
            ]
            out["surface_continuity_ok"] = surf.continuity_ok
        out["cylinders"] = [_cyl_dict(c) for c in scan.cylinders[:: max(1, len(scan.cylinders) // 16)]]
        return out
    out["cylinders"] = [_cyl_dict(c) for c in scan.cylinders]
    out["cycles"] = [_outcome_dict(system, find_limit_cycle(system, c)) for c in scan.cylinders]
    return out


def cmd_orbit(sc: Scenario):
    system = sc.system()
    p0 = (sc.options.get("x0", 0.0), sc.options.get("y0", 1.0), sc.options.get("z0", 0.0))
    t_end = sc.options.get("t_end", 20.0)
    # orbits spiralling into the fold cross ever faster; cap the event count
    return integrate(system, p0, t_end, t_max_segment=sc.options.get("t_max"),
                     max_crossings=sc.options.get("max_crossings", ORBIT_MAX_CROSSINGS))


def _sweep_values(sc: Scenario):
    try:
        name = sc.options["sweep_param"]
        start, stop = sc.options["sweep_start"], sc.options["sweep_stop"]
    except KeyError as exc:
        raise InvalidScenario(f"sweep needs option {exc.args[0]}") from None
    num = sc.options.get("sweep_num", 11)
    if num < 1:
        raise InvalidScenario("sweep_num must be positive")
    if name not in sc.params and name not in MODE_KEYS[sc.mode]:
        raise InvalidScenario(f"sweep parameter '{name}' is not a key of mode '{sc.mode}'")
    if sc.mode == "raw":
        raise InvalidScenario("sweeps are not supported in raw mode")
    return name, np.linspace(start, stop, num)


def cmd_sweep(sc: Scenario) -> list[dict]:
    name, values = _sweep_values(sc)
    rows = []
    for v in values:
        sub = Scenario(sc.mode, {**sc.params, name: float(v)}, dict(sc.options))
        row = {name: float(v)}
        try:
            cl = cmd_classify(sub)
            row["pair"] = "/".join(cl["pair"])
            row["structure"] = cl["structure"]["kind"]
            inv = cl.get("invariants", {})
            row["kappa"] = inv.get("kappa")
            row["lambda"] = inv.get("lambda")
            cy = cmd_cycles(sub)
            row["cylinders"] = cy.get("cylinder_count", len(cy.get("cylinders", [])))
            cycles = [c for c in cy.get("cycles", []) if c["kind"] == "isolated"]
            row["limit_cycles"] = len(cycles)
            row["status"] = "ok"
        except SewingError as exc:
            row["status"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def cmd_audit(seed: int, draws: int, yr, t_max) -> dict:
    rep = audit_tables(seed=seed, draws=draws, y_range=yr, t_max=t_max)
    return {
        "seed": seed,
        "draws_per_row": draws,
        "rows": rep.summary(),
        "strict_mismatches": [{"name": r.name, "params": r.params, "note": r.note} for r in rep.failures],
        "theory_violations": [{"name": r.name, "params": r.params, "note": r.note} for r in rep.violations],
        "skipped": rep.skipped,
    }


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sewing3d", description="Invariant cylinders and limit cycles of "
                                 "3D piecewise-linear systems with a double invisible fold.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (key=value or JSON)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--y-min", type=float)
    common.add_argument("--y-max", type=float)
    common.add_argument("--t-max", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write output here instead of stdout")
    for verb, hlp in (("classify", "spectral types, invariants and predicted structure"),
                      ("cycles", "invariant cylinders and limit cycles"),
                      ("orbit", "integrate one orbit and export the trace"),
                      ("sweep", "classify/cycles over a parameter range"),
                      ("audit-tables", "randomised audit of the table predictions")):
        p = sub.add_parser(verb, parents=[common], help=hlp)
        if verb == "sweep":
            p.add_argument("--param")
            p.add_argument("--start", type=float)
            p.add_argument("--stop", type=float)
            p.add_argument("--num", type=int)
        if verb == "audit-tables":
            p.add_argument("--draws", type=int, default=5)
    return ap


def _apply_flags(sc: Scenario, args):
    for flag, key in (("y_min", "y_min"), ("y_max", "y_max"), ("t_max", "t_max")):
        v = getattr(args, flag, None)
        if v is not None:
            sc.options[key] = v
    for flag, key in (("param", "sweep_param"), ("start", "sweep_start"), ("stop", "sweep_stop"), ("num", "sweep_num")):
        v = getattr(args, flag, None)
        if v is not None:
            sc.options[key] = v


def run(argv=None) -> tuple[int, str]:
    args = build_parser().parse_args(argv)
    fmt = args.format
    if args.verb == "audit-tables":
        yr = (args.y_min or Y_RANGE[0], args.y_max or Y_RANGE[1])
        res = cmd_audit(args.seed, args.draws, yr, args.t_max)
        if fmt == "json":
            return EXIT_OK, to_json(res) + "\n"
        rows = [(k, v["draws"], v["matches"], v["consistent"]) for k, v in res["rows"].items()]
        return EXIT_OK, to_csv(("pair", "draws", "matches", "consistent"), rows)
    if not args.config:
        raise InvalidScenario(f"'{args.verb}' needs --config")
    sc = load_config(args.config)
    _apply_flags(sc, args)
    if args.verb == "classify":
        res = cmd_classify(sc)
    elif args.verb == "cycles":
        res = cmd_cycles(sc)
    elif args.verb == "orbit":
        tr = cmd_orbit(sc)
        if fmt == "csv":
            return EXIT_OK, to_csv(("t", "x", "y", "z", "piece", "crossing"), tr.rows())
        res = {"status": tr.status, "message": tr.message,
               "crossings": [{"t": c.t, "x": c.x, "y": c.y, "from": c.from_side, "to": c.to_side} for c in tr.crossings],
               "points": [list(r) for r in tr.rows()]}
        return EXIT_OK, to_json(res) + "\n"
    else:
        rows = cmd_sweep(sc)
        if fmt == "csv":
            header = list(dict.fromkeys(k for r in rows for k in r))
            return EXIT_OK, to_csv(header, ([r.get(h, "") for h in header] for r in rows))
        return EXIT_OK, to_json({"seed": args.seed, "rows": rows}) + "\n"
    if fmt == "csv":
        return EXIT_OK, to_csv(("key", "value"), _flatten(res))
    return EXIT_OK, to_json(res) + "\n"


def main(argv=None) -> int:
    try:
        code, text = run(argv)
        out = getattr(build_parser().parse_known_args(argv)[0], "out", None)
        if out:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return code
    except InvalidScenario as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TheoryNotApplicable as exc:
        print(f"error: theory not applicable: {exc}", file=sys.stderr)
        return EXIT_THEORY
    except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
