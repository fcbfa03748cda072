"""The nine acceptance criteria, each at its stated tolerance and time limit.

Every test prints one line ``CRITERION n: PASS|FAIL ...`` and records it for
the terminal summary.
"""

import itertools
import time

import numpy as np

from conftest import ACCEPTANCE, program_oracles, random_canonical, random_oracles, random_program
from transducers.adversary import (
    build_function_transducer,
    compose_functions,
    evaluate,
    identity_solution,
    iterate,
    or2_solution,
    validate,
)
from transducers.canonical import gate, parallel
from transducers.compose import functional, predicted_certificate, sequential_par, sequential_seq
from transducers.engine import PumpingSchedule, bound_formula, run_scheduled, run_uniform
from transducers.linalg import direct_sum, haar_unitary, random_state
from transducers.program import program_matrix, query_compress, run_program, to_transducer_circuit, to_transducer_qrag
from transducers.purifier import (
    PurifierParams,
    bit_oracle,
    build_boolean_purifier,
    build_general_purifier,
    classify,
    composed_or_of_xor,
    general_oracles,
    noisy_bit_program,
    oracle_for,
    purified_program,
    xor_bits_oracles,
)
from transducers.transducer import Transducer, example_reflection, solve_catalyst
from transducers.walks import (
    WalkInstance,
    build_walk,
    detect_marked,
    figure_graph,
    max_resistance,
    path2,
    walk_certificate,
)


class Criterion:
    def __init__(self, n: int, limit: float):
        self.n, self.limit = n, limit
        self.failures: list = []
        self.cases = 0
        self.t0 = time.perf_counter()

    def check(self, ok: bool, what: str) -> None:
        self.cases += 1
        if not ok:
            self.failures.append(what)

    def finish(self, summary: str = "") -> None:
        dt = time.perf_counter() - self.t0
        if dt >= self.limit:
            self.failures.append(f"runtime {dt:.1f}s >= {self.limit:.0f}s")
        status = "PASS" if not self.failures else "FAIL"
        line = f"CRITERION {self.n}: {status} ({self.cases} checks, {dt:.2f}s) {summary}".rstrip()
        if self.failures:
            shown = "; ".join(self.failures[:3])
            more = f" (+{len(self.failures) - 3} more)" if len(self.failures) > 3 else ""
            line += f" | {len(self.failures)} failing: {shown}{more}"
        print(line)
        ACCEPTANCE.append(line)
        assert not self.failures, line


# -- 1 -----------------------------------------------------------------------


def test_criterion_1_catalyst_solver():
    cr = Criterion(1, 1.0)
    c = solve_catalyst(example_reflection(), np.array([1.0 + 0j]))
    cr.check(abs(c.W - 0.5) <= 1e-9, f"W = {c.W}")
    cr.check(np.allclose(c.catalyst, [0.5, 0.5], atol=1e-9, rtol=0), f"v = {c.catalyst}")
    cr.check(np.allclose(c.tau, [1.0], atol=1e-9, rtol=0), f"tau = {c.tau}")
    cr.finish("reflection example: W = 1/2, v = (|1>+|2>)/2, tau = |0>")


# -- 2 -----------------------------------------------------------------------


def _random_transducer(g):
    n = int(g.integers(2, 33))
    h = int(g.integers(1, n))
    if g.random() < 0.3 and n - h >= 2:
        # private space with a fixed subspace, exercising the pseudoinverse
        k = int(g.integers(1, n - h))
        op = direct_sum(haar_unitary(n - k, g), np.eye(k))
    else:
        op = haar_unitary(n, g)
    return Transducer.from_matrix(op, h)


def test_criterion_2_pumping_bound():
    cr = Criterion(2, 60.0)
    g = np.random.default_rng(2002)
    Ks = [2 ** k for k in range(11)]
    worst = 0.0
    for t in range(50):
        S = _random_transducer(g)
        xi = random_state(S.h, g)
        W = solve_catalyst(S, xi).W
        for K in Ks:
            rep = run_uniform(S, K, xi, reference=(solve_catalyst(S, xi).tau, W))
            bound = 2 * np.sqrt(W / K)
            cr.check(rep.measured_error <= bound + 1e-9, f"case {t} K={K}: {rep.measured_error:.3e} > {bound:.3e}")
            cr.check(rep.s_invocations == K, f"case {t} K={K}: {rep.s_invocations} invocations")
            worst = max(worst, rep.measured_error / bound if bound else 0.0)
    cr.finish(f"50 transducers x 11 K; worst error/bound = {worst:.3f}")


# -- 3 -----------------------------------------------------------------------


def test_criterion_3_scheduled_implementation():
    cr = Criterion(3, 60.0)
    g = np.random.default_rng(3003)
    worst = 0.0
    for t in range(24):
        r = int(g.integers(1, 4))
        slots = [(f"o{i}", int(g.integers(2, 4)), int(g.integers(1, 3))) for i in range(r)]
        S = random_canonical(g, int(g.integers(1, 3)), int(g.integers(0, 3)), slots)
        O = random_oracles(g, S)
        K = 2 ** int(g.integers(2, 9))
        Ki = {nm: 2 ** int(g.integers(0, int(np.log2(K)) + 1)) for nm, _, _ in slots}
        sch = PumpingSchedule(K, Ki)
        xi = random_state(S.h, g)
        rep = run_scheduled(S, sch, O, xi)
        c = S.certificate(O, xi)
        bound = bound_formula(c.W, K, c.L_partial, sch, c.delta)
        cr.check(rep.s_invocations == K, f"case {t}: S executed {rep.s_invocations} != {K}")
        cr.check(rep.oracle_queries == Ki, f"case {t}: queries {rep.oracle_queries} != {Ki}")
        cr.check(rep.measured_error <= bound + 1e-9, f"case {t}: {rep.measured_error:.3e} > {bound:.3e}")
        worst = max(worst, rep.measured_error / bound)
    # a perturbed transducer: the purifier with its δ term
    pr = PurifierParams(0.5, 0.3, 6)
    S = build_boolean_purifier(pr)
    for m1 in (0.1, 0.9):
        O = oracle_for(np.array([np.sqrt(1 - m1), np.sqrt(m1)], dtype=complex))
        sch = PumpingSchedule(64, {"O": 16, "O*": 8})
        rep = run_scheduled(S, sch, O, np.array([1.0 + 0j]))
        cr.check(rep.oracle_queries == {"O": 16, "O*": 8}, f"purifier queries {rep.oracle_queries}")
        cr.check(rep.s_invocations == 64, "purifier invocations")
        cr.check(rep.measured_error <= rep.predicted_bound + 1e-9, f"purifier m1={m1} error above bound")
    cr.finish(f"24 random multi-oracle cases + 2 purifier runs; worst error/bound = {worst:.3f}")


# -- 4 -----------------------------------------------------------------------


def laplacian_resistance(inst, M):
    """R_{σ,M} from the pseudoinverse of the Laplacian with M contracted."""
    verts = [u for u in inst.A + inst.B if u not in M]
    pos = {u: k for k, u in enumerate(verts)}
    sink = len(verts)
    node = lambda u: sink if u in M else pos[u]
    lap = np.zeros((sink + 1, sink + 1))
    for a, b, w in inst.edges:
        i, j = node(a), node(b)
        if i == j:
            continue
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    dem = np.zeros(sink + 1)
    for u, p in inst.sigma.items():
        dem[node(u)] += p
    dem[sink] -= 1.0
    return float(dem @ np.linalg.pinv(lap) @ dem)


def _walk_corpus():
    out = [("path2", path2(4.0), {"b"}),
           ("parallel", WalkInstance(("a",), ("b",), (("a", "b", 1.0), ("a", "b", 2.0)), {"a": 1.0}), {"b"}),
           ("series", WalkInstance(("a", "c"), ("b", "d"), (("a", "b", 1.0), ("c", "b", 2.0), ("c", "d", 0.5)),
                                   {"a": 1.0}), {"d"}),
           ("series-parallel", WalkInstance(("a", "c"), ("b", "d"),
                                            (("a", "b", 1.0), ("a", "d", 1.0), ("c", "b", 1.0), ("c", "d", 3.0)),
                                            {"a": 1.0}), {"c"}),
           ("figure", figure_graph(()), {"b2"})]
    g = np.random.default_rng(4004)
    for t in range(7):
        na, nb = int(g.integers(1, 5)), int(g.integers(1, 5))
        A = tuple(f"a{i}" for i in range(na))
        B = tuple(f"b{i}" for i in range(nb))
        edges = [(A[0], B[0], float(g.uniform(0.3, 3)))]
        seen = {"A": [A[0]], "B": [B[0]]}
        rest = [("A", u) for u in A[1:]] + [("B", u) for u in B[1:]]
        for k in g.permutation(len(rest)):
            side, u = rest[k]
            other = seen["B" if side == "A" else "A"]
            v = other[int(g.integers(len(other)))]
            w = float(g.uniform(0.3, 3))
            edges.append((u, v, w) if side == "A" else (v, u, w))
            seen[side].append(u)
        sup = A[: int(g.integers(1, na + 1))]
        inst = WalkInstance(A, B, tuple(edges), dict(zip(sup, g.dirichlet(np.ones(len(sup))))))
        verts = A + B
        M = set(g.choice(len(verts), size=int(g.integers(1, 3)), replace=False).tolist())
        out.append((f"random{t}", inst, {verts[k] for k in M}))
    return out


def test_criterion_4_electric_walks():
    cr = Criterion(4, 30.0)
    corpus = _walk_corpus()
    for name, inst, M in corpus:
        empty, marked = inst.with_marked(()), inst.with_marked(M)
        ce, cm = walk_certificate(empty), walk_certificate(marked)
        cr.check(np.allclose(ce.tau, -empty.xi(), atol=1e-9) and ce.residual <= 1e-9, f"{name}: M=∅ action")
        cr.check(np.allclose(cm.tau, marked.xi(), atol=1e-9) and cm.residual <= 1e-9, f"{name}: M action")
        cr.check(abs(ce.W - empty.total_weight) <= 1e-8, f"{name}: W(S_∅) = {ce.W}")
        R = laplacian_resistance(marked, M)
        cr.check(abs(cm.W - R) <= 1e-8, f"{name}: W(S_M) = {cm.W} vs R = {R}")
        mn = solve_catalyst(build_walk(marked), marked.xi())
        cr.check(abs(mn.W - R) <= 1e-8, f"{name}: minimal catalyst W = {mn.W} vs R = {R}")
        Rb = max(max_resistance(inst), R)
        for case, want in ((empty, "empty"), (marked, "nonempty")):
            d = detect_marked(case, 0.5, R_bound=Rb, W_bound=inst.total_weight)
            cr.check(d.decision == want, f"{name}: decided {d.decision}, expected {want}")
            cr.check(d.report.measured_error <= d.report.predicted_bound + 1e-9, f"{name}: pumping error")
    cr.finish(f"{len(corpus)} graphs, both M = ∅ and M ≠ ∅")


# -- 5 -----------------------------------------------------------------------


def _compose_case(g, t):
    h = int(g.integers(1, 3))
    mk = lambda: random_canonical(g, h, int(g.integers(0, 3)),
                                  [("O", 2, int(g.integers(1, 3))), ("P", 3, 1)][: int(g.integers(1, 3))])
    kind = ["parallel", "seq", "functional", "triple-par", "triple-seq", "fun-of-seq"][t % 6]
    if kind == "parallel":
        return kind, parallel([mk(), mk()]), None
    if kind == "seq":
        a, b = mk(), mk()
        return kind, sequential_seq([a, b]), sequential_par([a, b])
    if kind == "triple-par":
        return kind, parallel([mk(), mk(), mk()]), None
    if kind == "triple-seq":
        a, b, c = mk(), mk(), mk()
        return kind, sequential_seq([a, b, c]), sequential_par([a, b, c])
    inner_h = 2
    A = random_canonical(g, h, int(g.integers(0, 2)), [("A", inner_h, int(g.integers(1, 3))), ("O", 2, 1)])
    if kind == "functional":
        B = random_canonical(g, inner_h, int(g.integers(0, 3)), [("O", 2, 1)])
    else:
        B = sequential_seq([random_canonical(g, inner_h, 1, [("O", 2, 1)]),
                            random_canonical(g, inner_h, 0, [("O", 2, 1)])])
    return kind, functional(A, B, "A"), None


def test_criterion_5_composition_identities():
    cr = Criterion(5, 120.0)
    g = np.random.default_rng(5005)
    n = 36
    for t in range(n):
        kind, S, twin = _compose_case(g, t)
        O = random_oracles(g, S)
        xi = random_state(S.h, g)
        c = S.certificate(O, xi)
        p = predicted_certificate(S, O, xi)
        cr.check(abs(c.W - p.W) <= 1e-8, f"{t} {kind}: W {c.W} vs {p.W}")
        cr.check(np.allclose(c.tau, p.tau, atol=1e-8, rtol=0), f"{t} {kind}: action")
        for nm in c.q:
            cr.check(np.allclose(c.q[nm], p.q[nm], atol=1e-8, rtol=0), f"{t} {kind}: q[{nm}]")
        cr.check(c.residual <= 1e-8, f"{t} {kind}: coupling residual {c.residual:.2e}")
        if twin is not None:
            c2 = twin.certificate(O, xi)
            p2 = predicted_certificate(twin, O, xi)
            cr.check(abs(c2.W - p2.W) <= 1e-8 and c2.residual <= 1e-8, f"{t} {kind}: seq-parallel W")
            psi, gap = xi, 0.0
            for k, child in enumerate(S.children):
                if k:
                    gap += float(np.vdot(psi, psi).real)
                psi = child.certificate({s.name: O[s.name] for s in child.slots}, psi).tau
            cr.check(abs((c2.W - c.W) - gap) <= 1e-8, f"{t} {kind}: W gap {c2.W - c.W} vs {gap}")
            A1, A2 = S.declared_action(O), twin.declared_action(O)
            cr.check(np.allclose(A1, A2, atol=1e-8, rtol=0), f"{t} {kind}: sequential actions differ")
            for nm in c.q:
                cr.check(np.allclose(c.q[nm], c2.q[nm], atol=1e-8, rtol=0), f"{t} {kind}: query states differ")
    cr.finish(f"{n} compositions (pairs and triples)")


# -- 6 -----------------------------------------------------------------------


def test_criterion_6_program_bridge():
    cr = Criterion(6, 120.0)
    g = np.random.default_rng(6006)
    n = 22
    for t in range(n):
        A = random_program(g, dim=4, n_steps=int(g.integers(1, 7)), n_slots=int(g.integers(1, 3)))
        O = program_oracles(g, A)
        circ, qrag = to_transducer_circuit(A), to_transducer_qrag(A)
        full = program_matrix(A, O)
        m = len(A.rounds())
        inputs = list(np.eye(A.dim, dtype=complex)) + [g.uniform(0.5, 2) * random_state(A.dim, g)]
        for k, xi in enumerate(inputs):
            L = run_program(A, O, xi)[1].L
            nrm = float(np.vdot(xi, xi).real)
            for nm, S, exp in (("circuit", circ, L), ("qrag", qrag, (m - 1) * nrm)):
                c = S.certificate(S.oracle_map(O), xi)
                cr.check(np.allclose(c.tau, full @ xi, atol=1e-8, rtol=0), f"{t} {nm} input {k}: action")
                cr.check(abs(c.W - exp) <= 1e-8, f"{t} {nm} input {k}: W {c.W} vs {exp}")
        # per-slot bound: every query state has norm at most ‖ξ‖
        counts = {nm: sum(1 for kind, a in A.steps if kind == "query" and a == nm) for nm in A.slots}
        eps = 0.5 if t % 2 else 0.35
        cc = query_compress(A, eps, counts)
        xi = random_state(A.dim, g)
        Lp = run_program(A, O, xi)[1].L_partial
        if all(Lp.get(nm, 0.0) <= counts[nm] + 1e-12 for nm in counts):
            rep = cc.run(O, xi)
            cr.check(rep.measured_error <= eps, f"{t}: query_compress error {rep.measured_error:.3f} > {eps}")
    cr.finish(f"{n} programs, circuit and QRAG models, query_compress")


# -- 7 -----------------------------------------------------------------------


def _bits(tau):
    k = int(np.argmax(np.abs(tau)))
    return k, float(np.linalg.norm(tau - np.eye(tau.size)[k]))


def test_criterion_7_adversary():
    cr = Criterion(7, 60.0)
    ident = build_function_transducer(identity_solution())
    for x in (0, 1):
        tau, c = evaluate(ident, (x,))
        cr.check(_bits(tau) == (x, 0.0) or (_bits(tau)[0] == x and _bits(tau)[1] <= 1e-12), f"identity x={x}")
        cr.check(c.delta <= 1e-12, f"identity x={x}: δ = {c.delta}")
        cr.check(abs(c.W - 1) <= 1e-8 and abs(c.L - 1) <= 1e-8, f"identity x={x}: W={c.W}, L={c.L}")
    sol = or2_solution()
    rep = validate(sol)
    cr.check(rep.feasible, f"OR2 fixture infeasible ({rep.max_violation:.2e})")
    S = build_function_transducer(sol)
    for x in itertools.product(range(2), repeat=2):
        tau, c = evaluate(S, x)
        k, err = _bits(tau)
        cr.check(k == int(any(x)) and err <= 1e-8 and c.delta <= 1e-8, f"OR2 {x}")
        cr.check(abs(c.W - c.L) <= 1e-8 and c.L <= rep.objective + 1e-8, f"OR2 {x}: W={c.W}, L={c.L}")
    cases = [("OR2∘id", compose_functions(S, ident), lambda x: int(any(x))),
             ("id∘OR2", compose_functions(ident, S), lambda x: int(any(x))),
             ("OR2^(2)", iterate(S, 2), lambda x: int(any(x))),
             ("id^(2)", iterate(ident, 2), lambda x: x[0])]
    for name, T, fn in cases:
        nv = len(T.meta["vars"])
        for x in itertools.product(range(2), repeat=nv):
            tau, c = evaluate(T, x)
            k, err = _bits(tau)
            cr.check(k == fn(x) and err <= 1e-8 and c.delta <= 1e-8, f"{name} {x}")
    cr.finish("identity, OR2, OR2∘id, id∘OR2, OR2^(2), id^(2) by brute force")


# -- 8 -----------------------------------------------------------------------


def test_criterion_8_purifier():
    cr = Criterion(8, 120.0)
    c0, d0 = 0.5, 0.3
    g = np.random.default_rng(8008)
    grid = [0.0, (c0 - d0) / 2, c0 - d0, c0 + d0, (1 + c0 + d0) / 2, 1.0]
    ONE = np.array([1.0 + 0j])
    worst_ratio, worst_at = 0.0, None
    for D in range(3, 9):
        pr = PurifierParams(c0, d0, D)
        cr.check(abs(pr.mu - 0.8) <= 1e-12, f"μ = {pr.mu}")
        S = build_boolean_purifier(pr)
        bound = 2 * 0.8 ** (D - 1)
        for m1 in grid:
            ph = np.exp(2j * np.pi * g.random())
            psi = np.array([np.sqrt(1 - m1), ph * np.sqrt(m1)], dtype=complex)
            f = classify(psi, pr)
            c = S.certificate(oracle_for(psi), ONE)
            cr.check(np.allclose(c.tau, [(-1) ** f]), f"D={D} m1={m1:.2f}: sign")
            cr.check(c.delta <= bound + 1e-9, f"D={D} |ψ1|²={m1:.2f}: δ={c.delta:.4f} > {bound:.4f}")
            if c.delta / bound > worst_ratio:
                worst_ratio, worst_at = c.delta / bound, (D, m1)
            cr.check(c.L <= 10 + 1e-9, f"D={D} m1={m1:.2f}: L={c.L:.4f}")
            if f == 0:
                cr.check(c.residual <= 1e-9, f"D={D} m1={m1:.2f}: negative-branch residual {c.residual:.2e}")
    # general purifier, p = 4: |b> ⇝ |b ⊕ f(ψ)>
    P = build_general_purifier(4, d0, 3)
    for f in range(4):
        mass = np.full(4, 0.2 / 3)
        mass[f] = 0.8
        psi = np.sqrt(mass) * np.exp(2j * np.pi * g.random(4))
        O = general_oracles(psi)
        O = {k: O[k] for k in P.slot_names()}
        for b in range(4):
            c = P.certificate(O, np.eye(4, dtype=complex)[b])
            target = np.eye(4)[b ^ f]
            out = P.apply(O, c.state)[: P.h]
            cr.check(np.linalg.norm(c.tau - target) <= 1e-9, f"p=4 f={f} b={b}: declared action")
            cr.check(np.linalg.norm(out - target) <= c.delta + 1e-9, f"p=4 f={f} b={b}: not within δ")
    cr.finish(f"max δ / 2·0.8^(D−1) = {worst_ratio:.3f} at (D, |ψ1|²) = {worst_at}")


# -- 9 -----------------------------------------------------------------------


def _bit(m1, phase=1.0):
    return np.array([np.sqrt(1 - m1), phase * np.sqrt(m1)], dtype=complex)


def test_criterion_9_perturbation_calculus():
    cr = Criterion(9, 60.0)
    ONE = np.array([1.0 + 0j])
    P4, P5, P6 = (build_boolean_purifier(PurifierParams(0.5, 0.3, D)) for D in (4, 5, 6))
    cases = []
    for m1 in (0.9, 1.0):
        O = oracle_for(_bit(m1, 1j))
        cases += [(f"seq(P4,P6) m1={m1}", sequential_seq([P4, P6]), O, ONE),
                  (f"seqpar(P4,P5) m1={m1}", sequential_par([P4, P5]), O, ONE),
                  (f"par(P4,P6) m1={m1}", parallel([P4, P6]), O, np.array([0.6, 0.8], dtype=complex)),
                  (f"seq(I,P4,I) m1={m1}", sequential_seq([gate(np.eye(1)), P4, gate(np.eye(1))]), O, ONE)]
    cases.append(("par per-branch", parallel([P4, P6], "per-branch"),
                  {**oracle_for(_bit(0.85)), **{k + "@1": v for k, v in oracle_for(_bit(0.95)).items()}},
                  np.array([0.8, 0.6], dtype=complex)))
    for p, D, mass in ((2, 2, [0.1, 0.9]), (2, 3, [0.15, 0.85]), (4, 2, [0.05, 0.05, 0.05, 0.85])):
        S = build_general_purifier(p, 0.3, D)
        O = general_oracles(np.sqrt(np.array(mass, dtype=complex)))
        cases.append((f"general p={p} D={D}", S, {k: O[k] for k in S.slot_names()}, np.eye(p, dtype=complex)[1]))
    Sp = purified_program(noisy_bit_program(1 / 3), PurifierParams(0.5, 1 / 6, 4))
    for x in (0, 1):
        O = bit_oracle(x)
        cases.append((f"purified noisy bit x={x}", Sp, {k: O[k] for k in Sp.slot_names()},
                      np.eye(2, dtype=complex)[0]))
    Sor = composed_or_of_xor(PurifierParams(0.5, 1 / 6, 2))
    for y in ((0, 1, 0, 0), (1, 1, 1, 0)):
        O = xor_bits_oracles(y)
        cases.append((f"OR2∘purified-XOR y={y}", Sor, {k: O[k] for k in Sor.slot_names()},
                      np.array([1, 0], dtype=complex)))
    positive = 0
    for name, S, O, xi in cases:
        c = S.certificate(O, xi)
        p = predicted_certificate(S, O, xi)
        positive += c.delta > 1e-6
        cr.check(c.delta <= p.delta + 1e-8, f"{name}: δ = {c.delta:.4g} > predicted {p.delta:.4g}")
    cr.finish(f"{len(cases)} compositions, {positive} with δ > 0")
