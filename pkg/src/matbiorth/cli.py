"""Scenario runner: `matbiorth run scenario.json` and `matbiorth plot report.json --series name`.

A scenario names a kernel, a truncation n and a list of steps (factorize, transform, toda).
The report holds every residual the steps compute, per-step pass flags and plot series.
Exit codes: 0 all residuals within tolerance, 1 numerical failure, 2 usage or schema error.
"""

import argparse
import csv
import json
import os
import sys

import jsonschema
import numpy as np

from . import kernels as K
from . import toda as TD
from . import tol
from . import transforms as T
from .errors import MatBiorthError, UnknownSeries
from .factor import factorize, quasidet_H
from .matpoly import MatPoly, normalized, spectral_data

DEFAULT_TOL = {
    "factorize": 1e-9, "route": 1e-7, "bridge": 1e-8, "toda": 1e-6, "sato_wilson": 1e-4,
    "sato": 1e-9, "baker": 1e-10, "bilinear": 1e-8, "kp_linear": 1e-2, "kp": 1e-3,
}

_NUM = {"oneOf": [{"type": "number"},
                  {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_NUMS = {"type": "array", "items": _NUM}
_POLY = {"type": "object", "required": ["coeffs"], "properties": {"coeffs": {"type": "array", "minItems": 1}}}

SCHEMA = {
    "type": "object",
    "required": ["name", "kernel", "n", "steps"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "n": {"type": "integer", "minimum": 1, "maximum": 40},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "kernel": {
            "type": "object", "required": ["variant"],
            "properties": {
                "variant": {"enum": ["hilbert", "hankel", "discrete", "diagonal", "random_discrete"]},
                "p": {"type": "integer", "minimum": 1, "maximum": 4},
                "nodes": {"type": "integer", "minimum": 1},
            },
        },
        "steps": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["op"],
                "properties": {
                    "op": {"enum": ["factorize", "transform", "toda"]},
                    "kind": {"enum": ["geronimus", "christoffel", "geronimus_uvarov", "uvarov",
                                      "christoffel_right"]},
                    "routes": {"type": "array", "items": {"type": "string"}},
                    "W_C": _POLY, "W_G": _POLY, "W": _POLY,
                    "masses": {"type": "array"}, "terms": {"type": "array"},
                    "checks": {"type": "array", "items": {
                        "enum": ["toda", "toda_second", "sato_wilson", "sato", "baker", "kp_linear", "kp",
                                 "bilinear"]}},
                    "t1": _NUMS, "t2": _NUMS,
                },
            },
        },
    },
}

ROUTES = {
    "geronimus": {"direct", "spectral", "nonspectral"},
    "geronimus_uvarov": {"direct", "spectral", "mixed"},
    "christoffel": {"direct", "spectral"},
    "christoffel_right": {"direct", "adjugate"},
    "uvarov": {"direct", "formula"},
}


class SchemaError(Exception):
    pass


# ------------------------------------------------------------------ parsing

def _carray(obj, ndims):
    """Nested lists to a complex array of one of the allowed dimensions; one extra
    trailing axis of length 2 holds (re, im)."""
    ndims = (ndims,) if isinstance(ndims, int) else ndims
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("arrays must hold numbers or [re, im] pairs") from None
    if a.ndim in ndims:
        return a.astype(complex)
    if a.ndim - 1 in ndims and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    raise SchemaError(f"array of shape {a.shape} does not match dimensions {ndims}")


def _cnum(v):
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _poly(obj, p):
    """Coefficients lowest degree first: p x p matrices, or plain numbers when p = 1."""
    c = _carray(obj["coeffs"], (1, 3))
    if c.ndim == 1:
        c = c[:, None, None]
    if c.shape[1:] != (p, p):
        raise SchemaError(f"polynomial coefficients must be {p} x {p}")
    return MatPoly(c)


def build_kernel(spec, seed):
    v = spec["variant"]
    if v == "hilbert":
        return K.hilbert(spec.get("moments", 82))
    if v == "hankel":
        return K.hankel(_carray(spec["moments"], (1, 3)))
    if v == "discrete":
        return K.discrete(_carray(spec["nodes_x"], 1), _carray(spec["nodes_y"], 1),
                          _carray(spec["weights"], (2, 4)))
    if v == "diagonal":
        return K.diagonal(_carray(spec["nodes"], 1), _carray(spec["weights"], (1, 3)))
    rng = np.random.default_rng(seed)
    p, m = spec.get("p", 1), spec.get("nodes", 8)
    xs, ys = rng.uniform(-1, 1, m), rng.uniform(-1, 1, m)
    return K.discrete(xs, ys, rng.normal(size=(m, m, p, p)))


def _masses(spec, W_G):
    if not spec:
        return ()
    if W_G is None or W_G.degree == 0:
        raise SchemaError("masses need a Geronimus polynomial of positive degree")
    sd = spectral_data(normalized(W_G))
    lead = None if np.allclose(W_G.lead, np.eye(W_G.p)) else W_G.lead
    out = []
    for m in spec:
        a = m.get("eig", 0)
        if a >= len(sd.eigenvalues):
            raise SchemaError(f"mass eigenvalue index {a} out of range")
        lam = sd.eigenvalues[a]
        items = [(lam if it[0] is None else _cnum(it[0]), int(it[1]), _carray(it[2], 1)) for it in m["items"]]
        out.append(T.mass_term(sd, a, m.get("chain", 0), m.get("order", 0), items, lead))
    return tuple(out)


def _uvarov_terms(spec, p):
    out = []
    for t in spec or ():
        items = tuple((_cnum(it[0]), int(it[1]), _carray(it[2], 2).reshape(p, p)) for it in t["items"])
        out.append(K.UvarovTerm(_cnum(t["point"]), int(t.get("order", 0)), items))
    return out


def load_scenario(path):
    try:
        with open(path) as fh:
            sc = json.load(fh)
    except (OSError, ValueError) as e:
        raise SchemaError(f"cannot read scenario: {e}") from None
    try:
        jsonschema.validate(sc, SCHEMA)
    except jsonschema.ValidationError as e:
        raise SchemaError(f"schema: {e.message}") from None
    variant = sc["kernel"]["variant"]
    for i, st in enumerate(sc["steps"]):
        if st["op"] == "transform":
            kind = st.get("kind")
            if kind is None:
                raise SchemaError(f"step {i}: transform needs a kind")
            bad = set(st.get("routes", ["direct"])) - ROUTES[kind]
            if bad:
                raise SchemaError(f"step {i}: routes {sorted(bad)} invalid for {kind}")
            if variant == "hankel" and "spectral" in st.get("routes", ()) and kind != "christoffel":
                raise SchemaError(f"step {i}: spectral routes need Cauchy transforms, unavailable for raw moments")
        if st["op"] == "toda" and variant in ("hilbert", "hankel"):
            raise SchemaError(f"step {i}: Toda flows need a discrete kernel")
    return sc


# ------------------------------------------------------------------- report

def _cz(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


class Report:
    def __init__(self, sc, seed):
        self.data = {"name": sc["name"], "seed": seed, "n": sc["n"], "steps": [], "series": {}}

    def series(self, name, columns, rows, complex_cols=()):
        base, k = name, 2
        while name in self.data["series"]:
            name, k = f"{base}_{k}", k + 1
        cells = [[_cz(v) if c in complex_cols else v for c, v in zip(columns, r)] for r in rows]
        self.data["series"][name] = {"columns": list(columns), "complex": list(complex_cols), "rows": cells}
        return name

    def step(self, entry):
        self.data["steps"].append(entry)

    @property
    def passed(self):
        return all(s.get("passed", True) for s in self.data["steps"])

    def dump(self):
        self.data["passed"] = self.passed
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def _limit(sc, name):
    return float(sc.get("tolerances", {}).get(name, DEFAULT_TOL[name]))


# -------------------------------------------------------------------- steps

def _factorize_step(sc, k, st, rep):
    n = st.get("n", sc["n"])
    F = factorize(k, n)
    qd = max(np.linalg.norm(quasidet_H(F.G, F.p, j) - F.H[j]) / np.linalg.norm(F.H[j]) for j in range(n))
    rec = F.reconstruction_residual()
    lim = _limit(sc, "factorize")
    rep.series("H_norms", ["k", "norm"], [[j, float(np.linalg.norm(F.H[j]))] for j in range(n)])
    rep.series("H", ["k", "i", "j", "value"],
               [[j, a, b, F.H[j][a, b]] for j in range(n) for a in range(F.p) for b in range(F.p)], ["value"])
    rep.step({"op": "factorize", "n": n, "H": _cz(F.H), "reconstruction_residual": float(rec),
              "quasideterminant_residual": float(qd), "tolerance": lim, "passed": bool(max(rec, qd) <= lim)})


def _transform_step(sc, k, st, rep, seed):
    p, kind = k.p, st["kind"]
    n = st.get("n", sc["n"] - 1)
    routes = st.get("routes", ["direct"])
    I = MatPoly.identity(p)
    W_C = _poly(st["W_C"], p) if "W_C" in st else I
    W_G = _poly(st["W_G"], p) if "W_G" in st else I
    if kind == "christoffel" and "W" in st:
        W_C = _poly(st["W"], p)
    if kind == "geronimus" and "W" in st:
        W_G = _poly(st["W"], p)
    masses = _masses(st.get("masses"), W_G)
    F = factorize(k, n + W_C.degree + W_G.degree + 2)
    out, results = {}, {}
    if kind == "christoffel_right":
        W = _poly(st["W"], p)
        ref = T._direct_result(K.christoffel_right_kernel(k, W), n)
        if "adjugate" in routes:
            WCa, WGa = T.adjugate_recast(W, max(k.r_x or 1.0, 1.0))
            Fa = factorize(k, n + WCa.degree + WGa.degree + 2)
            results["adjugate"] = T.geronimus_uvarov_mixed(Fa, k, WCa, WGa, (), n,
                                                           kp=K.geronimus_kernel(k, WGa))
    elif kind == "uvarov":
        terms = _uvarov_terms(st.get("terms"), p)
        ref = T.uvarov_direct(k, terms, n)
        if "formula" in routes:
            results["formula"] = T.uvarov(F, k, terms, n)
    else:
        ref = T.geronimus_uvarov_direct(k, W_C, W_G, masses, n)
        for r in routes:
            if r == "spectral":
                results[r] = T.geronimus_uvarov_spectral(F, k, W_C, W_G, masses, n)
            elif r in ("nonspectral", "mixed"):
                res = T.geronimus_uvarov_mixed(F, k, W_C, W_G, masses, n)
                res.route = r
                results[r] = res
    lim = _limit(sc, "route")
    table = {}
    for r, res in results.items():
        d = T.deviation(res, ref)
        table[r] = {key: float(v) for key, v in d.items()}
        table[r]["flags"] = list(res.flags)
    ok = all(v["max"] <= lim for v in table.values())
    out = {"op": "transform", "kind": kind, "n": n, "routes": table, "direct": ref.to_json(), "tolerance": lim}
    if kind == "geronimus" and W_G.degree > 0 and {"spectral", "nonspectral"} & set(routes):
        if k.variant == "discrete" or k.provider is not None:
            b = T.bridge_residual(F, k, W_G, masses, kmax=n)
            out["bridge_residual"] = float(b)
            ok = ok and b <= _limit(sc, "bridge")
    out["passed"] = bool(ok)
    rep.series("route_deviation", ["route", "deviation"], [[r, v["max"]] for r, v in sorted(table.items())])
    rep.step(out)


def _richardson_entry(rep, name, r, lim):
    rep.series(f"richardson_{name}", ["h", "residual"], [[r["h"], r["residual_h"]], [r["h"] / 2, r["residual_h2"]]])
    e = {key: float(v) for key, v in r.items()}
    e["tolerance"] = lim
    e["passed"] = bool(r["residual_h"] <= lim)
    return e


def _toda_step(sc, k, st, rep, seed):
    t1 = [_cnum(v) for v in st.get("t1", [])]
    t2 = [_cnum(v) for v in st.get("t2", [])]
    z = _cnum(st.get("z", 3.0))
    checks = st.get("checks", ["toda"])
    n = st.get("n", sc["n"] - 1)
    res = {}
    for c in checks:
        lim = _limit(sc, "toda" if c == "toda_second" else c)
        if c in ("toda", "toda_second"):
            r = TD.toda_residual(k, t1, t2, n=n, h=st.get("h", 1e-3), eq="system" if c == "toda" else "second")
            res[c] = _richardson_entry(rep, c, r, lim)
        elif c == "sato_wilson":
            r = TD.sato_wilson_residual(k, t1, t2, n=sc["n"], j=st.get("j", 1), h=st.get("h", 1e-3),
                                        flow=st.get("flow", 1))
            res[c] = _richardson_entry(rep, c, r, lim)
        elif c == "sato":
            r = TD.sato_check(k, z, sc["n"], t1, t2)
            res[c] = {"residuals": r, "tolerance": lim, "passed": bool(max(r.values()) <= lim)}
        elif c == "baker":
            r = float(TD.baker_residual(k, t1, t2, sc["n"], z))
            res[c] = {"residual": r, "tolerance": lim, "passed": bool(r <= lim)}
        elif c == "kp_linear":
            r = TD.kp_linear_residual(k, st.get("row", 1), t1, t2, z, st.get("h_kp", 1e-2), order=st.get("order", 2))
            res[c] = _richardson_entry(rep, c, r, lim)
        elif c == "kp":
            r = TD.kp_residual(k, st.get("row", 1), t1, t2, st.get("h_kp", 1e-2))
            e = _richardson_entry(rep, c, {key: r[key] for key in ("h", "residual_h", "residual_h2", "ratio")}, lim)
            e["commutator"] = r["commutator"]
            res[c] = e
        elif c == "bilinear":
            p = k.p
            I = MatPoly.identity(p)
            W_C = _poly(st["W_C"], p) if "W_C" in st else I
            W_G = _poly(st["W_G"], p) if "W_G" in st else I
            tp = ([_cnum(v) for v in st.get("t1_prime", [])], [_cnum(v) for v in st.get("t2_prime", [])])
            r1 = st.get("r1", 1.5 * k.r_x)
            r2 = st.get("r2", 1.5 * k.r_y)
            r = TD.bilinear_residual(k, (t1, t2), tp, W_C, W_G, st.get("k", 1), st.get("l", 1), r1, r2,
                                     masses=_masses(st.get("masses"), W_G), M=st.get("M"))
            res[c] = {"residual": r["residual"], "M": r["M"], "doubling_change": r["doubling_change"],
                      "radii": [float(r1), float(r2)], "tolerance": lim, "passed": bool(r["residual"] <= lim)}
    rep.step({"op": "toda", "t1": _cz(t1), "t2": _cz(t2), "checks": res,
              "passed": all(v["passed"] for v in res.values())})


def run(path, out_dir=".", seed=None):
    """Run a scenario; returns (exit code, report path or None)."""
    sc = load_scenario(path)
    seed = int(seed if seed is not None else sc.get("seed", 0))
    k = build_kernel(sc["kernel"], seed)
    rep = Report(sc, seed)
    rep.data["kernel"] = {"variant": sc["kernel"]["variant"], "p": int(k.p)}
    code = 0
    try:
        for st in sc["steps"]:
            if st["op"] == "factorize":
                _factorize_step(sc, k, st, rep)
            elif st["op"] == "transform":
                _transform_step(sc, k, st, rep, seed)
            else:
                _toda_step(sc, k, st, rep, seed)
    except (MatBiorthError, np.linalg.LinAlgError, ValueError) as e:
        rep.data["error"] = f"{type(e).__name__}: {e}"
        rep.step({"op": "error", "passed": False})
        code = 1
    if code == 0 and not rep.passed:
        code = 1
    os.makedirs(out_dir, exist_ok=True)
    dest = os.path.join(out_dir, f"{sc['name']}.report.json")
    with open(dest, "w") as fh:
        fh.write(rep.dump())
    return code, dest


def emit_plot_data(report, names, out=None):
    """Write the named series as headered CSV; complex columns split into _re and _im."""
    out = sys.stdout if out is None else out
    if not names:
        raise UnknownSeries("no series requested")
    series = report.get("series", {})
    for name in names:
        if name not in series:
            raise UnknownSeries(f"unknown series {name!r}; available: {sorted(series)}")
    w = csv.writer(out, lineterminator="\n")
    for i, name in enumerate(names):
        s = series[name]
        cplx = set(s["complex"])
        if len(names) > 1:
            out.write(("\n" if i else "") + f"# {name}\n")
        w.writerow(sum(([f"{c}_re", f"{c}_im"] if c in cplx else [c] for c in s["columns"]), []))
        for row in s["rows"]:
            w.writerow(sum(([v[0], v[1]] if c in cplx else [v] for c, v in zip(s["columns"], row)), []))


def main(argv=None):
    ap = argparse.ArgumentParser(prog="matbiorth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario and write its report")
    r.add_argument("scenario")
    r.add_argument("--out", default=".")
    r.add_argument("--seed", type=int)
    pl = sub.add_parser("plot", help="emit CSV for report series")
    pl.add_argument("report")
    pl.add_argument("--series", action="append", default=[])
    pl.add_argument("--out", help="CSV file (default stdout)")
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    if tol.ENV_VAR in os.environ:
        try:
            json.loads(os.environ[tol.ENV_VAR])
        except ValueError:
            print(f"error: {tol.ENV_VAR} is not valid JSON", file=sys.stderr)
            return 2
    if args.cmd == "run":
        try:
            code, dest = run(args.scenario, args.out, args.seed)
        except SchemaError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        with open(dest) as fh:
            rep = json.load(fh)
        if "error" in rep:
            print(f"numerical failure: {rep['error']}", file=sys.stderr)
        print(f"{dest}: {'pass' if code == 0 else 'FAIL'}")
        return code
    try:
        with open(args.report) as fh:
            rep = json.load(fh)
    except (OSError, ValueError) as e:
        print(f"error: cannot read report: {e}", file=sys.stderr)
        return 2
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                emit_plot_data(rep, args.series, fh)
        else:
            emit_plot_data(rep, args.series)
    except UnknownSeries as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
