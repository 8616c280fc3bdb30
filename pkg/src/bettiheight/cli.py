"""Command-line driver.

Every subcommand prints one report object

    {"command", "config", "results", "errors", "meta"}

to stdout (json, csv or text).  Timing lives only under ``meta`` so that
reports for a fixed seed are byte-identical otherwise.  Exit codes: 0 ok,
2 invalid input, 3 numeric failure, 4 budget exceeded.

A config file (``--config FILE``) holds ``key = value`` lines mirroring
the long flags of the chosen subcommand; flags on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import gmpy2
import numpy as np

from . import __version__
from .counting import (MWLattice, alon_bound, alon_cross_validate, alon_test, covering_bound,
                       curve_points, dichotomy_scan, greedy_cover, hurwitz_packet_bound,
                       MultiPoly, nt_norm, split_small_large, vojta_large_bound)
from .elliptic import (SECTIONS, CurvePoint, WeierstrassCurve, check_legendre_parameter,
                       legendre_chart, parse_number)
from .errors import BettiHeightError, BudgetExceeded, ValidationError
from .heights import (DEFAULT_MAX_DIGITS, assemble_constants, duplication_defect, lambda_grid,
                      silverman_tate_scan, tate_limit_height)
from .intersection import (admissible_c1, graph_degree_recurrence, induced_scale, mf_upper_bound,
                           siu_bigness_check)
from .siegel import (PolarizationType, SiegelPoint, TangentVector, betti_coordinates,
                     betti_form_flat, betti_form_value, betti_to_fiber, chart_form_value,
                     hermitian_gram, kernel_directions, numerical_betti_rank, pullback_scaling,
                     push_to_ab)

log = logging.getLogger("bettiheight")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# parsing helpers -----------------------------------------------------------------

def parse_complex(text: str) -> complex:
    return complex(parse_number(text))


def parse_matrix(text: str) -> np.ndarray:
    """'2i,0.5;0.5,1i' -> 2x2 complex matrix; rows split on ';'."""
    rows = [[parse_complex(x) for x in row.split(",")] for row in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"ragged matrix {text!r}")
    return np.array(rows, dtype=complex)


def parse_vector(text: str, kind=parse_complex) -> list:
    return [kind(x) for x in text.split(",") if x.strip()]


def parse_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def parse_curve(text: str) -> WeierstrassCurve:
    """'A=0,B=-2', 'lambda=1/2' or 'a2=..,a4=..,a6=..'."""
    kv = {}
    for part in text.split(","):
        if "=" not in part:
            raise ValidationError(f"curve spec {text!r}: expected key=value pairs")
        k, v = part.split("=", 1)
        kv[k.strip().lower()] = parse_number(v)
    if set(kv) == {"lambda"}:
        check_legendre_parameter(complex(kv["lambda"]))
        return WeierstrassCurve.legendre(kv["lambda"])
    if set(kv) <= {"a", "b"}:
        return WeierstrassCurve.short(kv.get("a", 0), kv.get("b", 0))
    if set(kv) <= {"a2", "a4", "a6"}:
        return WeierstrassCurve(kv.get("a2", 0), kv.get("a4", 0), kv.get("a6", 0))
    raise ValidationError(f"curve spec {text!r}: use A,B or lambda or a2,a4,a6")


def parse_point(text: str) -> CurvePoint:
    if text.strip().lower() in ("inf", "o", "infinity"):
        return CurvePoint.infinity()
    xs = [parse_number(v) for v in text.split(",")]
    if len(xs) != 2:
        raise ValidationError(f"point {text!r}: expected 'x,y'")
    return CurvePoint(*xs)


def parse_points(text: str) -> list[CurvePoint]:
    return [parse_point(p) for p in text.split(";") if p.strip()]


def parse_number_or_inf(text: str):
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def read_config(path: str) -> list[tuple[str, str]]:
    """``key = value`` lines; '#' starts a comment."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out.append((k.replace("_", "-"), v))
    return out


def config_to_argv(pairs, parser: argparse.ArgumentParser) -> list[str]:
    flags = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:]] = action
    argv = []
    for k, v in pairs:
        if k not in flags or k in ("config", "help"):
            raise UsageError(f"unknown config key {k!r}")
        action = flags[k]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {k!r} expects a boolean")
            if v.lower() in ("true", "1", "yes"):
                argv.append("--" + k)
        elif action.dest == "action":
            continue
        else:
            argv += ["--" + k, v]
    return argv


# JSON plumbing ---------------------------------------------------------------------

def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(obj, complex):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    if isinstance(obj, CurvePoint):
        return "inf" if obj.is_infinity else [jsonable(obj.x), jsonable(obj.y)]
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def flatten(obj, prefix="") -> list[tuple[str, object]]:
    out = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            out += flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj and all(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            out += flatten(v, f"{prefix}[{i}]")
    else:
        out.append((prefix, json.dumps(obj) if isinstance(obj, list) else obj))
    return out


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        rows = report["results"].get("rows") if isinstance(report["results"], dict) else None
        w = csv.writer(buf, lineterminator="\n")
        if rows:
            keys = sorted({k for r in rows for k in r})
            w.writerow(keys)
            for r in rows:
                w.writerow([json.dumps(r[k]) if isinstance(r.get(k), (list, dict)) else r.get(k, "")
                            for k in keys])
        else:
            w.writerow(["key", "value"])
            for k, v in flatten(report["results"]):
                w.writerow([k, v])
        return buf.getvalue()
    lines = [f"command: {report['command']}"]
    lines += [f"{k}: {v}" for k, v in flatten(report["results"])]
    for e in report["errors"]:
        lines.append(f"error: {e['type']}: {e['message']}")
    return "\n".join(lines) + "\n"


# commands ---------------------------------------------------------------------------

def _random_tangent(rng, g: int) -> TangentVector:
    xw = rng.normal(size=g) + 1j * rng.normal(size=g)
    A = rng.normal(size=(g, g)) + 1j * rng.normal(size=(g, g))
    return TangentVector(xw, (A + A.T) / 2)


def cmd_betti(a, ctx) -> dict:
    Zm = parse_matrix(a.Z) if a.Z else None
    g = a.g or (Zm.shape[0] if Zm is not None else 1)
    if Zm is None:
        Zm = 1j * np.eye(g)
    if Zm.shape != (g, g):
        raise ValidationError(f"Z is {Zm.shape[0]}x{Zm.shape[1]}, expected {g}x{g}")
    Z = SiegelPoint(Zm)
    w = np.array(parse_vector(a.w) if a.w else [0.5 + 0.5j] * g)
    D = PolarizationType(tuple(parse_ints(a.D))) if a.D else None
    c = betti_coordinates(Z, w, D)
    back = betti_to_fiber(Z, c, D)
    res = {"g": g, "coordinates": {"a": c.a, "b": c.b, "a_raw": c.a_raw, "b_raw": c.b_raw,
                                   "round_trip_error": float(np.max(np.abs(back - w)))}}
    sections = {s for s in ("forms", "psd", "scaling") if getattr(a, s)} or {"forms", "psd", "scaling"}
    rng = np.random.default_rng(a.seed)
    frame = [_random_tangent(rng, g) for _ in range(a.samples)]
    if "forms" in sections:
        rows = []
        for i in range(len(frame)):
            for j in range(i + 1, len(frame)):
                h = betti_form_value(Z, w, frame[i], frame[j])
                f = betti_form_flat(push_to_ab(Z, w, frame[i], D), push_to_ab(Z, w, frame[j], D)) \
                    if D is None or all(d == 1 for d in D.D) else None
                rows.append({"i": i, "j": j, "hermitian": h, "flat": f})
        res["form_values"] = rows
    if "psd" in sections:
        G = hermitian_gram(Z, w, frame + kernel_directions(Z, w))
        ev = np.linalg.eigvalsh(G)
        res["psd"] = {"min_eigenvalue": ev[0], "max_eigenvalue": ev[-1],
                      "semi_positive": bool(ev[0] >= -1e-10 * max(ev[-1], 0.0)),
                      "kernel_dimension": len(kernel_directions(Z, w))}
    if "scaling" in sections:
        xi = frame[0] if frame else _random_tangent(rng, g)
        res["scaling"] = [{"N": N, "ratio": pullback_scaling(Z, w, xi, N)} for N in parse_ints(a.N)]
    return res


def cmd_nondegeneracy(a, ctx) -> dict:
    if a.family != "legendre":
        raise ValidationError(f"unknown family {a.family!r}")
    lam = parse_complex(a.lam)
    check_legendre_parameter(lam)
    chart = legendre_chart(a.section)
    t0 = (lam.real, lam.imag)
    rep = numerical_betti_rank(chart, t0, step=a.step, rank_tol=a.rank_tol, abs_tol=a.abs_tol)
    res = {"family": a.family, "section": a.section, "lambda": lam, "rank": rep.rank,
           "singular_values": rep.singular_values, "sigma_ratio": rep.ratio,
           "rank_half_step": rep.rank_half_step, "stable": rep.stable,
           "nondegenerate": rep.rank == 2, "step": a.step}
    if rep.rank == 2:
        res["form_value"] = chart_form_value(chart, t0, a.step)
    return res


def cmd_height(a, ctx) -> dict:
    curve = parse_curve(a.curve)
    P = parse_point(a.P)
    res = {"curve": str(curve), "P": P}
    try:
        rep = tate_limit_height(curve, P, tol=a.tol, max_digits=a.max_digits,
                                paranoid=a.paranoid, base_height=a.base_height)
    except BudgetExceeded as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            res["partial"] = partial.as_dict()
        raise _Partial(res, exc)
    if a.rescale != 1.0:
        rep = rep.rescaled(a.rescale)
    res["height"] = rep.as_dict()
    res["decay_ratios"] = rep.decay_ratios()
    if not P.is_infinity and P.y != 0:
        defect, ratio = duplication_defect(curve, P, rep.base_height)
        res["duplication_defect"] = {"defect": defect, "ratio": ratio}
    return res


def _scan(lams, sections, tol, max_digits, threads):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return silverman_tate_scan(lams, sections, tol, max_digits, map_fn=lambda f, xs: ex.map(f, xs))
    return silverman_tate_scan(lams, sections, tol, max_digits)


def cmd_silverman_tate(a, ctx) -> dict:
    sections = [s.strip() for s in a.sections.split(",")]
    for s in sections:
        if s not in SECTIONS:
            raise ValidationError(f"unknown section {s!r}")
    if a.n < 2:
        raise ValidationError("need at least 2 grid points")
    lams = lambda_grid(2 * a.n if a.double else a.n)
    rep = _scan(lams, sections, a.tol, a.max_digits, ctx["threads"])
    res = rep.as_dict()
    res["rows"] = res.pop("samples")
    res["grid_size"] = len(lams)
    if a.double:
        # the first half of the doubled grid is exactly the n-point grid
        res["sup_n"] = rep.sup_first_half
        res["sup_2n"] = rep.sup_ratio
        res["relative_change"] = rep.stability
    return res


def cmd_siu(a, ctx) -> dict:
    res = {}
    if a.kappa is not None:
        kappa, c = Fraction(a.kappa), Fraction(a.c)
        ac1 = admissible_c1(kappa, c, a.d)
        Fd, MF = induced_scale(kappa, c, a.d, a.N)
        res["admissible_c1"] = ac1
        res["induced"] = {"Fd": Fd, "MF": MF}
        c1 = Fraction(a.c1) if a.c1 is not None else ac1
    else:
        if a.Fd is None or a.MF is None or a.c1 is None:
            raise ValidationError("give --Fd, --MF and --c1, or --kappa and --c")
        Fd, MF, c1 = Fraction(a.Fd), Fraction(a.MF), Fraction(a.c1)
    res["check"] = {"Fd": Fd, "MF": MF, "d": a.d, "N": a.N, "c1": c1,
                    "rhs": a.d * c1 * a.N ** 2 * MF, "big": siu_bigness_check(Fd, MF, a.d, c1, a.N)}
    if a.a:
        acoeffs = {}
        for part in a.a.split(","):
            i, p, v = (int(x) for x in part.split(":"))
            acoeffs[(i, p)] = v
        exact, simplified = mf_upper_bound(a.d, a.n, a.m, a.l, a.Dprime, acoeffs)
        Dl, Dpl = graph_degree_recurrence(a.l, a.Dprime)
        res["mf_bound"] = {"D_l": Dl, "Dprime_l": Dpl, "exact_sum": exact, "simplified": simplified}
    return res


def _read_rows(path: str) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]


def cmd_count(a, ctx) -> dict:
    act = a.action
    if act == "cover":
        lat = MWLattice(parse_matrix(a.gram).real) if a.gram else MWLattice.identity(a.rho)
        if lat.rank != a.rho:
            raise ValidationError(f"gram has rank {lat.rank}, --rho is {a.rho}")
        if a.points:
            pts = [[float(x) for x in r] for r in _read_rows(a.points)]
            pts = [p for p in pts if p] if a.rho else [[] for _ in pts]
        else:
            rng = np.random.default_rng(a.seed)
            pts = _ball_sample(rng, a.random, a.rho, a.R, lat)
        R_meas = max((nt_norm(lat, p) for p in pts), default=0.0)
        if R_meas > a.R * (1 + 1e-12):
            raise ValidationError(f"points reach norm {R_meas:.6g} > R = {a.R}")
        centres = greedy_cover(pts, lat, a.r)
        bound = covering_bound(a.R, a.r, a.rho)
        return {"count": len(centres), "centres": centres, "bound": bound,
                "within_bound": len(centres) <= bound, "R_measured": R_meas, "points": len(pts)}
    if act == "split":
        if a.heights_file:
            items = [(r[0], float(r[1])) for r in _read_rows(a.heights_file)]
        else:
            items = [(k, float(v)) for k, v in (p.split(":") for p in (a.heights or "").split(",") if p)]
        part = split_small_large(items, a.B)
        return {"B": a.B, **part.as_dict()}
    if act == "bound":
        large, total = vojta_large_bound(a.c, a.rho)
        return {"c": a.c, "rho": a.rho, "large_bound": large, "total_bound": total}
    if act == "hurwitz":
        return {"genus": a.genus, "packet_bound": hurwitz_packet_bound(a.genus)}
    if act == "assemble":
        c2 = {}
        for part in (a.c2 or "").split(","):
            if part:
                k, v = part.split(":")
                c2[int(k)] = Fraction(v)
        N, c1f, c2f = assemble_constants(Fraction(a.c0), Fraction(a.c1), c2)
        return {"N": N, "c1_final": c1f, "c2_final": c2f}
    if act == "dichotomy":
        curve = parse_curve(a.curve)
        cands = list(enumerate(parse_points(a.points_inline or "")))
        res = dichotomy_scan(curve, cands, a.P, a.c3, a.c4, a.h_base, tol=a.tol,
                             max_digits=a.max_digits)
        return res.as_dict()
    raise ValidationError(f"unknown count action {act!r}")


def _ball_sample(rng, n: int, rho: int, R: float, lat: MWLattice) -> list:
    if rho == 0:
        return [[] for _ in range(n)]
    pts = []
    while len(pts) < n:
        v = rng.uniform(-1, 1, size=rho)
        nv = nt_norm(lat, v)
        if 0 < nv:
            u = rng.uniform() ** (1 / rho)
            pts.append(list(v / nv * R * u))
    return pts


def cmd_alon(a, ctx) -> dict:
    if a.grid:
        out = alon_cross_validate(a.max_M, a.max_deg, a.slack, budget=a.budget, seed=a.seed)
        return {"rows": out["instances"], "instances": len(out["instances"]),
                "counterexamples": len(out["counterexamples"])}
    res = {"bound": alon_bound(a.M, a.degC, a.degZ) if a.degZ else None}
    if a.linear:
        forms = []
        for part in a.linear.split(";"):
            j, coeffs = part.split(":")
            forms.append((int(j), [int(x) for x in coeffs.split(",")]))
        Z = MultiPoly.product_of_linear(forms, 2, a.M)
        sigma = curve_points(a.curve, a.size)
        res.update({"degZ": Z.degree(), "multidegree": list(Z.multidegree),
                    "size": len(sigma), "not_contained": alon_test(sigma, [Z], a.M, budget=a.budget)})
        if res["bound"] is None:
            res["bound"] = alon_bound(a.M, 1 if a.curve == "line" else 2, Z.degree())
    return res


class _Partial(Exception):
    def __init__(self, results, error):
        super().__init__(str(error))
        self.results, self.error = results, error


COMMANDS = {
    "betti": cmd_betti,
    "nondegeneracy": cmd_nondegeneracy,
    "height": cmd_height,
    "silverman-tate": cmd_silverman_tate,
    "siu": cmd_siu,
    "count": cmd_count,
    "alon": cmd_alon,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file mirroring the long flags")
    common.add_argument("--format", choices=("json", "csv", "text"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes (capped by BH_THREADS)")

    p = _Parser(prog="bettiheight", description="Betti map and height experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("betti", parents=[common], help="Betti coordinates, form, scaling")
    s.add_argument("--g", type=int)
    s.add_argument("--Z", help="period matrix, rows split by ';', e.g. '2i,0.5;0.5,1i'")
    s.add_argument("--w", help="comma separated complex vector")
    s.add_argument("--D", help="polarization type, e.g. '1,2'")
    s.add_argument("--samples", type=int, default=3, help="random tangent vectors")
    s.add_argument("--N", default="2,3,5")
    s.add_argument("--forms", action="store_true")
    s.add_argument("--psd", action="store_true")
    s.add_argument("--scaling", action="store_true")

    s = sub.add_parser("nondegeneracy", parents=[common], help="rank of the Betti differential")
    s.add_argument("--family", default="legendre")
    s.add_argument("--section", choices=SECTIONS, default="const_x2")
    s.add_argument("--lambda", dest="lam", default="0.3")
    s.add_argument("--step", type=float, default=1e-4)
    s.add_argument("--rank-tol", type=float, default=1e-6)
    s.add_argument("--abs-tol", type=float, default=1e-6)

    s = sub.add_parser("height", parents=[common], help="Tate-limit canonical height")
    s.add_argument("--curve", required=True, help="'A=0,B=-2', 'lambda=1/2' or 'a2=..,a4=..,a6=..'")
    s.add_argument("--P", required=True, help="'x,y' with rational entries, or 'inf'")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-digits", type=int, default=DEFAULT_MAX_DIGITS)
    s.add_argument("--paranoid", action="store_true")
    s.add_argument("--base-height", type=float)
    s.add_argument("--rescale", type=float, default=1.0)

    s = sub.add_parser("silverman-tate", parents=[common], help="ratio scan over a lambda grid")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--sections", default=",".join(SECTIONS))
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--max-digits", type=int, default=2_000_000)
    s.add_argument("--double", action="store_true", help="also scan the doubled grid")

    s = sub.add_parser("siu", parents=[common], help="bigness inequality and degree bounds")
    s.add_argument("--Fd")
    s.add_argument("--MF")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--N", type=int, default=1)
    s.add_argument("--c1")
    s.add_argument("--kappa")
    s.add_argument("--c", default="1")
    s.add_argument("--a", help="a_ip coefficients as 'i:p:value,...'")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--l", type=int, default=1)
    s.add_argument("--Dprime", type=int, default=1)

    s = sub.add_parser("count", parents=[common], help="covers, splits and bounds")
    s.add_argument("action", choices=("cover", "split", "bound", "hurwitz", "assemble", "dichotomy"))
    s.add_argument("--rho", type=int, default=0)
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--r", type=float, default=1.0)
    s.add_argument("--gram")
    s.add_argument("--points", help="csv file of lattice coordinates")
    s.add_argument("--random", type=int, default=20, help="random points when --points is absent")
    s.add_argument("--heights", help="'id:h,...'")
    s.add_argument("--heights-file", help="csv of id,h")
    s.add_argument("--B", type=float, default=0.0)
    s.add_argument("--c", type=float, default=7.0)
    s.add_argument("--genus", type=int, default=2)
    s.add_argument("--c0", default="0")
    s.add_argument("--c1", default="1")
    s.add_argument("--c2", help="'N:value,...'")
    s.add_argument("--curve", default="A=0,B=-2")
    s.add_argument("--points-inline", help="'x,y;x,y;...' candidate points")
    s.add_argument("--P", type=int, default=0, help="index of P among the candidates")
    s.add_argument("--c3", type=float, default=1.0)
    s.add_argument("--c4", type=parse_number_or_inf, default=math.inf)
    s.add_argument("--h-base", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-digits", type=int, default=DEFAULT_MAX_DIGITS)

    s = sub.add_parser("alon", parents=[common], help="product lemma bound and test")
    s.add_argument("--grid", action="store_true", help="run the small-instance cross-validation")
    s.add_argument("--max-M", type=int, default=3)
    s.add_argument("--max-deg", type=int, default=3)
    s.add_argument("--slack", type=int, default=2)
    s.add_argument("--M", type=int, default=1)
    s.add_argument("--degC", type=int, default=2)
    s.add_argument("--degZ", type=int)
    s.add_argument("--curve", choices=("line", "conic"), default="conic")
    s.add_argument("--linear", help="linear forms 'factor:c0,c1,c2;...' whose product is Z")
    s.add_argument("--size", type=int, default=10)
    s.add_argument("--budget", type=int, default=10 ** 6)
    return p


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _explicit_keys(argv: list[str]) -> set:
    return {t[2:].split("=", 1)[0] for t in argv if t.startswith("--")}


def effective_threads(requested: int) -> int:
    cap = os.environ.get("BH_THREADS")
    n = max(1, requested)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"BH_THREADS={cap!r} is not an integer")
    return n


def run(argv: list[str] | None = None) -> tuple[dict, int]:
    """Parse, run and return (report, exit code)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    parser = build_parser()
    command = next((t for t in argv if t in COMMANDS), None)
    report = {"command": command, "config": {}, "results": {}, "errors": []}
    code = 0
    fmt = "json"
    try:
        args = parser.parse_args(argv)
        fmt = args.format
        cfg_keys = set()
        if args.config:
            sp = _subparser(parser, args.command)
            pairs = read_config(args.config)
            cfg_keys = {k for k, _ in pairs}
            i = argv.index(args.command)
            cmd_args = argv[i + 1:]
            args = parser.parse_args(argv[:i + 1] + config_to_argv(pairs, sp) + cmd_args)
            fmt = args.format
        explicit = _explicit_keys(argv)
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "config")}
        provenance = {}
        for k in config:
            flag = "lambda" if k == "lam" else k.replace("_", "-")
            provenance[k] = "cli" if flag in explicit else ("config" if flag in cfg_keys else "default")
        report["config"] = {"values": jsonable(config), "provenance": provenance}
        ctx = {"threads": effective_threads(args.threads)}
        report["results"] = COMMANDS[args.command](args, ctx)
    except _Partial as p:
        report["results"] = p.results
        report["errors"].append(_error_obj(p.error))
        code = p.error.exit_code
    except BettiHeightError as exc:
        report["errors"].append(_error_obj(exc))
        code = exc.exit_code
    except (ValueError, ZeroDivisionError, OSError) as exc:
        report["errors"].append({"type": type(exc).__name__, "message": str(exc), "exit_code": 2})
        code = 2
    report["results"] = jsonable(report["results"])
    report["meta"] = {"version": __version__, "python": platform.python_version(),
                      "numpy": np.__version__, "gmpy2": gmpy2.version(),
                      "elapsed_seconds": round(time.perf_counter() - t0, 6),
                      "exit_code": code, "format": fmt}
    return report, code


def _error_obj(exc: BettiHeightError) -> dict:
    return {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("BH_LOGLEVEL", "WARNING"), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    report, code = run(argv)
    for e in report["errors"]:
        log.error("%s: %s", e["type"], e["message"])
    sys.stdout.write(render(report, report["meta"]["format"]))
    return code


if __name__ == "__main__":
    sys.exit(main())
