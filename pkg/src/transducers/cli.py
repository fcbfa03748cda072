"""Command line front-end: demos, sweeps, compilation and composition reports.

Every subcommand prints an aligned table and, with ``--out``, writes a JSON
report (and a CSV for sweeps).  Exit codes: 0 when every embedded check
passes, 2 on invalid input, 3 when a check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import adversary, compose, engine, program, purifier, walks
from .canonical import CanonicalTransducer, from_unitary, invert, parallel
from .errors import TransducerError, ValidationError
from .linalg import matrix_from_json, rng_from, vector_from_json
from .transducer import Transducer, example_reflection

EXIT_OK, EXIT_INVALID, EXIT_ASSERT = 0, 2, 3
DEFAULT_TOL = 1e-8


# -- formatting ----------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    if isinstance(x, complex):
        return f"{x.real:.12g}{x.imag:+.12g}j"
    return str(x)


def clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.12g}") if np.isfinite(obj) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [clean(obj.real), clean(obj.imag)]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


def report_format(rows: list, columns: list | None = None) -> str:
    """Aligned table; an empty report prints only the header."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[k]) for row in cells]) for k, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def to_csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


class Report:
    def __init__(self, kind: str, columns: list):
        self.kind, self.columns = kind, columns
        self.rows: list = []
        self.checks: list = []
        self.extra: dict = {}

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "pass": bool(ok), "detail": detail})

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> dict:
        return clean({"kind": self.kind, "columns": self.columns, "rows": self.rows,
                      "checks": self.checks, "pass": self.ok, **self.extra})

    def emit(self, out: str | None, csv_out: bool = False) -> None:
        print(report_format(self.rows, self.columns))
        for c in self.checks:
            print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['name']} {c['detail']}".rstrip())
        if out:
            path = Path(out)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
            if csv_out:
                path.with_suffix(".csv").write_text(to_csv(self.rows, self.columns))


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc


# -- demos ---------------------------------------------------------------------


def demo_walk(args) -> Report:
    rep = Report("walk", ["graph", "marked", "tau_sign", "W_empty", "R_marked", "K", "decision",
                          "p0", "measured_error", "predicted_bound"])
    cases = [("path2", walks.path2(4.0)), ("path2", walks.path2(4.0, {"b"})),
             ("figure", walks.figure_graph(())), ("figure", walks.figure_graph())]
    W_empty = {nm: inst.total_weight for nm, inst in cases}
    for nm, inst in cases:
        cert = walks.walk_certificate(inst)
        det = walks.detect_marked(inst, eps=args.eps)
        R = walks.electrical_flow(inst).energy if inst.marked else float("nan")
        sign = int(np.sign(np.vdot(inst.xi(), cert.tau).real))
        rep.rows.append({"graph": nm, "marked": ",".join(sorted(inst.marked)) or "-", "tau_sign": sign,
                         "W_empty": W_empty[nm], "R_marked": R, "K": det.K, "decision": det.decision,
                         "p0": det.p0, "measured_error": det.report.measured_error,
                         "predicted_bound": det.report.predicted_bound})
        rep.check(f"{nm}[{','.join(sorted(inst.marked)) or '-'}] residual", cert.residual <= args.tolerance,
                  fmt(cert.residual))
        want = "nonempty" if inst.marked else "empty"
        rep.check(f"{nm}[{','.join(sorted(inst.marked)) or '-'}] decision", det.decision == want)
        rep.check(f"{nm}[{','.join(sorted(inst.marked)) or '-'}] error bound",
                  det.report.measured_error <= det.report.predicted_bound + 1e-9)
    return rep


def _purifier_point(job) -> dict:
    c, d, D, m1, seed = job
    params = purifier.PurifierParams(c, d, D)
    S = purifier.build_boolean_purifier(params)
    g = rng_from(seed)
    ph = np.exp(2j * np.pi * g.random(2))
    psi = np.array([np.sqrt(1 - m1) * ph[0], np.sqrt(m1) * ph[1]])
    cert = S.certificate(purifier.oracle_for(psi), np.array([1.0 + 0j]))
    return {"D": D, "norm_psi1_sq": m1, "f": purifier.classify(psi, params), "tau": cert.tau[0].real,
            "delta": cert.delta, "nominal_bound": params.nominal_delta_bound,
            "chain_bound": params.chain_delta_bound, "W": cert.W, "L": cert.L,
            "L_bound": params.L_bound, "admissibility_violation": cert.admissibility_violation}


PURIFIER_COLS = ["D", "norm_psi1_sq", "f", "tau", "delta", "nominal_bound", "chain_bound", "W", "L",
                 "L_bound", "admissibility_violation"]


def grid(c: float, d: float) -> list:
    return [0.0, (c - d) / 2, c - d, c + d, (1 + c + d) / 2, 1.0]


def demo_purifier(args) -> Report:
    rep = Report("purifier", PURIFIER_COLS)
    for k, m1 in enumerate(grid(0.5, 0.3)):
        rep.rows.append(_purifier_point((0.5, 0.3, args.D, m1, args.seed + k)))
    for r in rep.rows:
        tag = f"D={r['D']} |psi1|^2={fmt(r['norm_psi1_sq'])}"
        rep.check(f"{tag} sign", abs(r["tau"] - (1 - 2 * r["f"])) <= args.tolerance)
        rep.check(f"{tag} L <= 2/(1-mu)", r["L"] <= r["L_bound"] + 1e-9, fmt(r["L"]))
        rep.check(f"{tag} delta <= 2 mu^((D-1)/2)", r["delta"] <= r["chain_bound"] + 1e-9, fmt(r["delta"]))
    return rep


def demo_adversary(args) -> Report:
    rep = Report("adversary", ["function", "x", "value", "output", "error", "W", "L", "objective"])
    for nm, sol in (("identity", adversary.identity_solution()), ("or2", adversary.or2_solution())):
        S = adversary.build_function_transducer(sol)
        for x, val in sorted(sol.f.items()):
            tau, cert = adversary.evaluate(S, x)
            want = np.zeros(S.h, dtype=complex)
            want[val] = 1
            err = float(np.linalg.norm(tau - want))
            rep.rows.append({"function": nm, "x": "".join(map(str, x)), "value": val,
                             "output": int(np.argmax(np.abs(tau))), "error": err, "W": cert.W,
                             "L": cert.L, "objective": sol.objective})
            rep.check(f"{nm}({''.join(map(str, x))})", err <= args.tolerance
                      and cert.W <= sol.objective + args.tolerance)
    return rep


# -- sweeps ----------------------------------------------------------------------


def _pumping_point(job) -> dict:
    op, h, K, xi = job
    S = Transducer.from_matrix(op, h)
    r = engine.run_uniform(S, K, xi)
    return {"K": K, "measured_error": r.measured_error, "bound": r.predicted_bound, "W": r.W,
            "invocations": r.s_invocations}


def _pmap(fn, jobs, n: int):
    if n and n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def sweep_pumping(args) -> Report:
    if args.transducer:
        data = load_json(args.transducer)
        T = Transducer.from_json(data)
        order = np.concatenate([T.pub, T.priv])
        op, h = np.asarray(T.op)[np.ix_(order, order)], T.h
        xi = vector_from_json(data["xi"]) if "xi" in data else np.eye(h, dtype=complex)[0]
    else:
        T = example_reflection()
        op, h, xi = np.asarray(T.op), 1, np.array([1.0 + 0j])
    Ks = [2 ** k for k in range(args.kmax + 1)]
    rep = Report("sweep-pumping", ["K", "measured_error", "bound", "W", "invocations"])
    rep.rows = _pmap(_pumping_point, [(op, h, K, xi) for K in Ks], args.parallel)
    for r in rep.rows:
        rep.check(f"K={r['K']}", r["measured_error"] <= r["bound"] + 1e-9)
    return rep


def sweep_purifier(args) -> Report:
    rep = Report("sweep-purifier", PURIFIER_COLS)
    jobs = [(args.c, args.d, D, m1, args.seed + 100 * D + k)
            for D in range(args.dmin, args.dmax + 1) for k, m1 in enumerate(grid(args.c, args.d))]
    rep.rows = _pmap(_purifier_point, jobs, args.parallel)
    for r in rep.rows:
        rep.check(f"D={r['D']} |psi1|^2={fmt(r['norm_psi1_sq'])} L", r["L"] <= r["L_bound"] + 1e-9)
    return rep


# -- compile / compose / validate ------------------------------------------------


def _oracles(data) -> dict:
    return {k: matrix_from_json(v) for k, v in (data or {}).items()}


def compile_program(args) -> Report:
    data = load_json(args.path)
    A = program.program_from_json(data)
    O = _oracles(data.get("oracles"))
    missing = set(A.slots) - set(O)
    if missing:
        raise ValidationError(f"no oracle given for slots {sorted(missing)}")
    full = program.program_matrix(A, O)
    rep = Report("compile", ["model", "xi", "action_error", "W", "expected_W", "n"])
    circ, qrag = program.to_transducer_circuit(A), program.to_transducer_qrag(A)
    for b in range(A.dim):
        xi = np.zeros(A.dim, dtype=complex)
        xi[b] = 1
        L = program.run_program(A, O, xi)[1].L
        for nm, S, exp in (("circuit", circ, L), ("qrag", qrag, qrag.meta["rounds"] - 1.0)):
            cert = S.certificate(S.oracle_map(O), xi)
            err = float(np.linalg.norm(cert.tau - full[:, b]))
            rep.rows.append({"model": nm, "xi": b, "action_error": err, "W": cert.W, "expected_W": exp,
                             "n": S.n})
            rep.check(f"{nm} e{b} action", err <= args.tolerance, fmt(err))
            rep.check(f"{nm} e{b} W", abs(cert.W - exp) <= args.tolerance)
    if "eps" in data:
        xi = vector_from_json(data["xi"]) if "xi" in data else np.eye(A.dim, dtype=complex)[0]
        cc = program.query_compress(A, float(data["eps"]), data.get("L_bounds", {}),
                                    data.get("model", "qrag"), float(np.linalg.norm(xi)))
        r = cc.run(O, xi)
        rep.extra["compressed"] = {"schedule": cc.schedule.to_json(), "measured_error": r.measured_error,
                                   "oracle_queries": r.oracle_queries, "eps": cc.eps}
        rep.check("query_compress error <= eps", r.measured_error <= cc.eps, fmt(r.measured_error))
    return rep


def _build_child(ref: dict, max_dim: int) -> CanonicalTransducer:
    if "plan" in ref:
        return _build_plan(ref["plan"], max_dim)[0]
    if ref.get("ref") == "reflection":
        return from_unitary(np.asarray(example_reflection().op), 1, name="reflection")
    if "transducer" in ref:
        T = Transducer.from_json(ref["transducer"])
        order = np.concatenate([T.pub, T.priv])
        return from_unitary(np.asarray(T.op)[np.ix_(order, order)], T.h)
    if "program" in ref:
        A = program.program_from_json(ref["program"])
        S = program.to_transducer_qrag(A) if ref.get("model") == "qrag" else program.to_transducer_circuit(A)
        if ref.get("admissible_e0"):
            adm = np.zeros((S.h, S.h), dtype=complex)
            adm[0, 0] = 1
            S.admissible = adm
        return S
    if "walk" in ref:
        W = walks.build_walk(walks.WalkInstance.from_json(ref["walk"]))
        return from_unitary(np.asarray(W.op), W.h, name="walk")
    if "adversary" in ref:
        sol = adversary.solution_from_json(ref["adversary"])
        if isinstance(sol, adversary.StateConversionSolution):
            return adversary.build_state_transducer(sol)
        return adversary.build_function_transducer(sol)
    if "purifier" in ref:
        pr = purifier.PurifierParams.from_json(ref["purifier"])
        if pr.p == 2 and not ref.get("general"):
            return purifier.build_boolean_purifier(pr)
        return purifier.build_general_purifier(pr.p, pr.d, pr.D, pr.dimN)
    raise ValidationError(f"unknown child reference {sorted(ref)}")


def _build_plan(plan: dict, max_dim: int) -> tuple:
    kind = plan.get("kind")
    kids = [_build_child(c, max_dim) for c in plan.get("children", [])]
    if not kids:
        raise ValidationError("plan has no children")
    if plan.get("invert"):
        kids = [invert(k) if flag else k for k, flag in zip(kids, plan["invert"])]
    if kind == "parallel":
        S = parallel(kids, plan.get("mode", "shared"))
    elif kind == "seq_sequential":
        S = compose.sequential_seq(kids)
    elif kind == "seq_parallel":
        S = compose.sequential_par(kids)
    elif kind == "functional":
        if len(kids) != 2:
            raise ValidationError("functional plans take exactly two children")
        S = compose.functional(kids[0], kids[1], plan["slots"])
    else:
        raise ValidationError(f"unknown plan kind {kind!r}")
    if S.n > max_dim:
        raise ValidationError(f"composed dimension {S.n} exceeds --max-dim {max_dim}")
    return S, kind


def compose_plan(args) -> Report:
    plan = load_json(args.path)
    S, kind = _build_plan(plan, args.max_dim)
    O = _oracles(plan.get("oracles"))
    om = {k: v for k, v in S.oracle_map(O).items()} if S.slots else {}
    xi = vector_from_json(plan["xi"]) if "xi" in plan else np.eye(S.h, dtype=complex)[0]
    cert = S.certificate(om, xi)
    pred = compose.predicted_certificate(S, om, xi)
    dq = max([float(np.linalg.norm(cert.q[k] - pred.q[k])) for k in cert.q] + [0.0])
    rows = [{"quantity": "W", "measured": cert.W, "predicted": pred.W, "diff": abs(cert.W - pred.W)},
            {"quantity": "L", "measured": cert.L, "predicted": pred.L, "diff": abs(cert.L - pred.L)},
            {"quantity": "action", "measured": 0.0, "predicted": 0.0,
             "diff": float(np.linalg.norm(cert.tau - pred.tau))},
            {"quantity": "query_state", "measured": 0.0, "predicted": 0.0, "diff": dq},
            {"quantity": "delta", "measured": cert.delta, "predicted": pred.delta,
             "diff": cert.delta - pred.delta}]
    rep = Report("compose", ["quantity", "measured", "predicted", "diff"])
    rep.rows = rows
    tol = float(plan.get("tolerance", args.tolerance))
    for r in rows[:4]:
        rep.check(f"{kind} {r['quantity']}", r["diff"] <= tol, fmt(r["diff"]))
    rep.check(f"{kind} delta subadditive", cert.delta <= pred.delta + tol)
    rep.extra["n"] = S.n
    return rep


def validate_solution(args) -> Report:
    sol = adversary.solution_from_json(load_json(args.path))
    fr = adversary.validate(sol, args.tolerance)
    rep = Report("validate", ["kind", "max_violation", "feasible", "objective"])
    kind = "state" if isinstance(sol, adversary.StateConversionSolution) else "function"
    rep.rows.append({"kind": kind, "max_violation": fr.max_violation, "feasible": fr.feasible,
                     "objective": fr.objective if fr.objective is not None else ""})
    rep.check("feasible", fr.feasible, f"worst pair {fr.worst}")
    return rep


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for grid phases")
    common.add_argument("--tolerance", type=float, default=DEFAULT_TOL, help="check tolerance")
    common.add_argument("--max-dim", type=int, default=compose.MAX_DIM, help="dimension cap")
    common.add_argument("--out", default=None, help="report JSON path (sweeps add a .csv)")
    common.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="transducers", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    demo = sub.add_parser("demo", parents=[common], help="built-in demonstrations")
    demo.add_argument("what", choices=["walk", "purifier", "adversary"])
    demo.add_argument("--eps", type=float, default=0.5)
    demo.add_argument("--D", type=int, default=6)
    cp = sub.add_parser("compose", parents=[common], help="composition plan report")
    cp.add_argument("path")
    cm = sub.add_parser("compile", parents=[common], help="program to transducer report")
    cm.add_argument("path")
    sw = sub.add_parser("sweep", parents=[common], help="parameter sweeps with CSV output")
    sw.add_argument("what", choices=["pumping", "purifier"])
    sw.add_argument("--transducer", default=None, help="transducer JSON (default: the 3-dim reflection example)")
    sw.add_argument("--kmax", type=int, default=10)
    sw.add_argument("--c", type=float, default=0.5)
    sw.add_argument("--d", type=float, default=0.3)
    sw.add_argument("--dmin", type=int, default=3)
    sw.add_argument("--dmax", type=int, default=8)
    va = sub.add_parser("validate", parents=[common], help="check an adversary solution")
    va.add_argument("path")
    rn = sub.add_parser("run", parents=[common], help="run a scenario JSON")
    rn.add_argument("path")
    return p


DISPATCH = {("demo", "walk"): demo_walk, ("demo", "purifier"): demo_purifier,
            ("demo", "adversary"): demo_adversary, ("sweep", "pumping"): sweep_pumping,
            ("sweep", "purifier"): sweep_purifier, ("compose", None): compose_plan,
            ("compile", None): compile_program, ("validate", None): validate_solution}


def run_scenario(path: str, base: argparse.Namespace | None = None) -> int:
    """Scenario JSON: {"kind": ..., "what"/"path": ..., plus any flag}."""
    sc = load_json(path)
    kind = sc.get("kind")
    argv = []
    if kind in ("walk", "purifier", "adversary"):
        argv = ["demo", kind]
    elif kind == "sweep":
        argv = ["sweep", sc.get("what", "pumping")]
    elif kind in ("compose", "compile", "validate"):
        if "path" not in sc:
            raise ValidationError("scenario needs a 'path'")
        ref = Path(sc["path"])
        if not ref.is_absolute():
            ref = Path(path).parent / ref
        if not ref.exists():
            raise ValidationError(f"referenced file {ref} does not exist")
        argv = [kind, str(ref)]
    else:
        raise ValidationError(f"unknown scenario kind {kind!r}")
    for k, v in sc.items():
        if k in ("kind", "what", "path"):
            continue
        argv += [f"--{k.replace('_', '-')}", str(v)]
    if base is not None and base.out and "out" not in sc:
        argv += ["--out", base.out]
    return main(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return run_scenario(args.path, args)
        fn = DISPATCH[(args.command, getattr(args, "what", None) if args.command in ("demo", "sweep") else None)]
        rep = fn(args)
    except (ValidationError, TransducerError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rep.emit(args.out, csv_out=args.command == "sweep")
    if not rep.ok:
        failed = [c["name"] for c in rep.checks if not c["pass"]]
        print(f"assertion failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
