"""The acceptance checks, shared by ``cftg check`` and the test suite.

Each check returns a ``CheckResult``; ``run_checks`` runs a selection in
order.  Time limits are part of a check's verdict where they are stated.
"""

from __future__ import annotations

import inspect
import logging
import random
import time
from dataclasses import dataclass

from .closure import eliminate_production, inverse_alphabetic, inverse_elementary
from .derivtree import FOUND, close, derive, find_dtree, find_pump, pump, pumping_params, validate_dtree
from .dycklab import (
    SIGMA_ALPHABET as G_EX_SOURCE,
    DyckParams,
    G_EX,
    H_EX,
    NO_REFUTATION,
    REFUTED_BY_ENUMERATION,
    RefuteBounds,
    build_witness,
    bounded_L,
    check_key_lemma,
    counts_ok,
    factorize,
    gen_U,
    h_ex_preimage,
    iota,
    is_dyck,
    refute_candidate,
    replay_transcript,
    scripted_derivation,
    sentential_counts_ok,
    witness_tree,
)
from .formats import parse_grammar, sample_grammar, sample_hom
from .grammar import (
    OI,
    UNRESTRICTED,
    Cftg,
    Production,
    bounded_language,
    enumerate_bounded,
    forms_bounded,
    language,
    random_oi_derivation,
    remove_useless,
    verify_oi_decomposition,
)
from .hom import apply_hom
from .normalform import normalize, stage_from_grammar, TORSIONFREE
from .terms import Tree, TreeTuple, all_trees, compose, count_symbol, parse_tree, show, sort_key

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    ok: bool
    detail: str
    seconds: float

    def line(self):
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# 1. G_ex enumeration.

def check_gex_enumeration(max_steps=8):
    res, secs = _timed(enumerate_bounded, G_EX, None, max_steps)
    pre = [h_ex_preimage(s) for s in res.trees]
    bad = [show(s) for s, t in zip(res.trees, pre) if t is None or not counts_ok(t)]
    forms = forms_bounded(G_EX, max_steps=max_steps)
    bad_forms = [show(f) for f in forms if not sentential_counts_ok(f)]
    ok = len(res.trees) >= 10 and secs < 5 and not bad and not bad_forms
    detail = (
        f"{len(res.trees)} trees in {secs:.2f}s, {len(bad)} count violations, "
        f"{len(forms)} sentential forms with {len(bad_forms)} violations"
    )
    return ok, detail


# 2. The worked derivation.

EXAMPLE_FINAL = parse_tree(
    "δ1(#,δ2(c(a(c(c(a(a(c(#))))))),δ1(d(b(d(#))),δ2(c(a(a(c(#)))),"
    "δ1(d(b(b(d(d(b(b(d(#)))))))),δ2(#,#))))))"
)
EXAMPLE_PREIMAGE = parse_tree(
    "σ(#,c(a(c(c(a(a(c(#))))))),σ(d(b(d(#))),c(a(a(c(#)))),σ(d(b(b(d(d(b(b(d(#)))))))),#,#)))"
)
EXAMPLE_IOTA = "caaccacdbdcaacdbbddbbd"


def check_example_replay():
    forms = scripted_derivation()
    final = forms[-1]
    pre = h_ex_preimage(final)
    word = iota(pre) if pre is not None else None
    results = {
        "final form": final == EXAMPLE_FINAL,
        "preimage": pre == EXAMPLE_PREIMAGE,
        "ι": word == EXAMPLE_IOTA,
        "Dyck": word is not None and is_dyck(word),
        "h_ex(preimage)": pre is not None and apply_hom(H_EX, pre) == final,
    }
    failed = [k for k, v in results.items() if not v]
    return not failed, f"{len(forms) - 1} steps; " + (f"mismatch: {', '.join(failed)}" if failed else f"ι = {word}")


# 3. U_i factorizations.

def check_factorizations(max_i=5, es=(1, 2)):
    t0 = time.perf_counter()
    cases = 0
    problems = []
    for i in range(1, max_i + 1):
        for e in es:
            if not is_dyck(gen_U(i, e)):
                problems.append(f"U_{i} (e={e}) is not Dyck")
            for j in range(1, 2 ** (i - 1) + 1):
                cases += 1
                for bad in factorize(i, j, e).check():
                    problems.append(f"i={i} j={j} e={e}: {bad}")
    secs = time.perf_counter() - t0
    ok = not problems and secs < 30
    return ok, f"{cases} factorizations, {len(problems)} problems" + (f"; first: {problems[0]}" if problems else "")


# 4. The key lemma.

def check_key_lemma_bruteforce(max_i=3, exp_bound=3, e=1):
    t0 = time.perf_counter()
    cases = 0
    bad = 0
    for i in range(1, max_i + 1):
        report = check_key_lemma(i, exp_bound, e)
        cases += report.cases
        bad += len(report.counterexamples) + len(report.structural_failures)
    secs = time.perf_counter() - t0
    return bad == 0 and secs < 60, f"{cases} perturbations, {bad} counterexamples"


# 5. Witness and its derivation.

def check_witness(ps=(1, 2), e=1):
    parts = []
    ok = True
    for p in ps:
        params = DyckParams(p, e)
        t, steps = build_witness(params)
        final, n = replay_transcript(steps)
        sigmas = count_symbol(t, "σ")
        good = sigmas == params.m and iota(t) == gen_U(params.q, e) and final == apply_hom(H_EX, t)
        ok = ok and good
        parts.append(f"p={p}: |t|_σ={sigmas} (m={params.m}), {n} steps{'' if good else ' MISMATCH'}")
    return ok, "; ".join(parts)


# 6. Normal forms.

NORMAL_FORM_SAMPLES = ("twins.cftg", "ladder.cftg", "nested.cftg")


def check_normal_forms(max_size=12, samples=NORMAL_FORM_SAMPLES):
    problems = []
    stages = 0
    for name in samples:
        G = sample_grammar(name)
        ref = bounded_language(G, max_size)
        for sg in normalize(G):
            stages += 1
            if bounded_language(sg.grammar, max_size) != ref:
                problems.append(f"{name}/{sg.stage}: language changed")
            if sg.violations():
                problems.append(f"{name}/{sg.stage}: {sg.violations()[0]}")
    return not problems, f"{len(samples)} grammars, {stages} stage outputs, {len(problems)} problems" + (
        f"; first: {problems[0]}" if problems else ""
    )


# 7. Pumping.

PUMP_TREE = parse_tree("σ(a(a(a(a(#)))),a(a(a(a(#)))),σ(b(#),b(#),#))")


def check_pumping(sample="dform.cftg", t=PUMP_TREE):
    sg = stage_from_grammar(sample_grammar(sample), TORSIONFREE)
    params = pumping_params(sg)
    search = find_dtree(sg, t)
    if search.status != FOUND:
        return False, f"no derivation tree for {show(t)}: {search.reason}"
    kappa = search.tree
    target = None
    for w in kappa.positions():
        s = kappa.at(w).node.s
        for i in range(1, s.k):
            if _chain_length(s[i]) > params.H:
                target = (w, i)
                break
        if target:
            break
    if target is None:
        return False, f"no component longer than H = {params.H}"
    w, i = target
    triple = find_pump(kappa, w, i, params)
    s = kappa.at(w).node.s
    problems = []
    if compose(compose(triple.v, triple.y), triple.z) != s:
        problems.append("s ≠ v·y·z")
    if _chain_length(triple.y[i]) == 0:
        problems.append("|π_i·y| = 0")
    if _chain_length(compose(triple.y, triple.z)[i]) > params.H:
        problems.append("suffix longer than H")
    sigmas = count_symbol(t, sg.spinal.sigma)
    sizes = []
    for j in range(4):
        pumped = pump(kappa, triple, j)
        if not validate_dtree(sg, pumped):
            problems.append(f"j={j}: invalid derivation tree")
            continue
        tj = close(sg, derive(sg, pumped))
        sizes.append(tj.size())
        if tj not in bounded_language(sg.grammar, tj.size()):
            problems.append(f"j={j}: {show(tj)} not in the bounded language")
        if count_symbol(tj, sg.spinal.sigma) != sigmas:
            problems.append(f"j={j}: σ-count changed")
    detail = f"H={params.H}, pumped component {i} at {w or 'ε'}, sizes {sizes}"
    return not problems, detail + (f"; {problems[0]}" if problems else "")


def _chain_length(c):
    n = 0
    while not c.is_var and c.children:
        n += 1
        c = c.children[0]
    return n


# 8. Closure constructions.

ALPHABETIC_PAIRS = (("gnf_chain.cftg", "erase.hom"), ("gnf_mon.cftg", "swap.hom"), ("gnf_unit.cftg", "unit.hom"))
ELEMENTARY_PAIRS = (("gnf_pair.cftg", "pair.hom"), ("gnf_left.cftg", "left.hom"), ("gnf_spine.cftg", "spine.hom"))

ELIM_EXAMPLE = """\
terminals δ1/3 δ2/2 α/0
nonterminals S/0 A/1 B/0 C/1 D/1 E/0 A0/0 B1/1
axiom S
rule A(x1) -> δ1(B, C(D(x1)), E)
rule C(x1) -> δ2(A0, B1(x1))
"""
ELIM_EXPECTED = (
    "A(x1) -> δ1(B,C(D(x1)),E)",
    "A(x1) -> δ1(B,δ2(A0,B1(D(x1))),E)",
)


def preimage_oracle(G, h, max_size):
    """Source trees up to ``max_size`` whose image is in L(G), by brute force."""
    trees = all_trees(h.source, max_size)
    images = {t: apply_hom(h, t) for t in trees}
    bound = max((s.size() for s in images.values()), default=1)
    lang = bounded_language(G, bound)
    return frozenset(t for t, s in images.items() if s in lang)


def closure_pair_ok(construction, gname, hname, max_size):
    G, h = sample_grammar(gname), sample_hom(hname)
    out = construction(G, h)
    return bounded_language(out, max_size) == preimage_oracle(G, h, max_size)


def elim_example_ok():
    G = parse_grammar(ELIM_EXAMPLE)
    rho = G.productions[1]
    out = eliminate_production(G, rho)
    return tuple(str(p) for p in out.productions) == ELIM_EXPECTED


def check_closure(max_size=12):
    failed = []
    for g, h in ALPHABETIC_PAIRS:
        if not closure_pair_ok(inverse_alphabetic, g, h, max_size):
            failed.append(f"inv-alpha {g}")
    for g, h in ELEMENTARY_PAIRS:
        if not closure_pair_ok(inverse_elementary, g, h, max_size):
            failed.append(f"inv-elem {g}")
    if not elim_example_ok():
        failed.append("elimination example")
    n = len(ALPHABETIC_PAIRS) + len(ELEMENTARY_PAIRS)
    return not failed, f"{n} pairs at size ≤ {max_size} plus the elimination example" + (
        f"; failed: {', '.join(failed)}" if failed else ""
    )


# 9. Engine properties.

ENGINE_SAMPLES = (
    "dform.cftg", "g_ex.cftg", "gnf_chain.cftg", "gnf_left.cftg", "gnf_mon.cftg", "gnf_pair.cftg",
    "gnf_spine.cftg", "gnf_unit.cftg", "ladder.cftg", "nested.cftg", "pump.cftg", "twins.cftg",
)

LEMMA_GRAMMAR = """\
terminals f/2 g/1 a/0
nonterminals S/0 A/1 B/0
axiom S
rule S -> A(B)
rule A(x1) -> f(x1, x1)
rule A(x1) -> g(x1)
rule B -> a
rule B -> A(a)
"""


def _random_tree(rng, G, k, depth):
    """A small tree over G's symbols and x_1..x_k."""
    leaves = [Tree(i) for i in range(1, k + 1)] + [Tree("a"), Tree("B")]
    if depth == 0 or rng.random() < 0.35:
        return rng.choice(leaves)
    label = rng.choice(["f", "g", "A"])
    arity = G.terminals.get(label, G.nonterminals.get(label))
    return Tree(label, [_random_tree(rng, G, k, depth - 1) for _ in range(arity)])


def lemma_instances(count=100, seed=0, max_steps=4):
    """Engine-generated (η, κ, t, n) with η·κ ⇒ⁿ t by OI steps, t terminal."""
    G = parse_grammar(LEMMA_GRAMMAR)
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        p, q, r = rng.randint(1, 2), rng.randint(1, 2), rng.randint(0, 2)
        eta = TreeTuple(q, [_random_tree(rng, G, q, 2) for _ in range(p)])
        kappa = TreeTuple(r, [_random_tree(rng, G, r, 1) for _ in range(q)])
        t, n = random_oi_derivation(G, compose(eta, kappa), rng, max_steps)
        if all(G.is_terminal(c) for c in t.components):
            out.append((eta, kappa, t, n))
    return G, out


def check_engine(max_size=14, instances=100, seed=0):
    problems = []
    for name in ENGINE_SAMPLES:
        G = sample_grammar(name)
        oi = language(G, max_size, mode=OI)
        un = language(G, max_size, mode=UNRESTRICTED)
        if oi != un:
            problems.append(f"{name}: OI and unrestricted differ")
        if bounded_language(remove_useless(G), max_size) != bounded_language(G, max_size):
            problems.append(f"{name}: remove_useless changed the language")
    G, cases = lemma_instances(instances, seed)
    misses = sum(1 for eta, kappa, t, n in cases if verify_oi_decomposition(G, eta, kappa, t, n) is None)
    if misses:
        problems.append(f"{misses} decompositions not found")
    return not problems, f"{len(ENGINE_SAMPLES)} samples at size ≤ {max_size}, {len(cases)} decomposition instances" + (
        f"; {problems[0]}" if problems else ""
    )


# 10. Refuter.

WRONG_CANDIDATE = """\
terminals σ/3 #/0 a/1 b/1 c/1 d/1
nonterminals S/0
axiom S
rule S -> σ(#, c(#), σ(d(#), #, #))
"""



def finite_candidate(max_size=10, params=DyckParams(1, 1)):
    """A finite grammar generating the members of L up to ``max_size`` and the witness."""
    trees = sorted(bounded_L(max_size) | {witness_tree(params)}, key=sort_key)
    prods = [Production("S", 0, t) for t in trees]
    return Cftg({"S": 0}, G_EX_SOURCE, Tree("S"), prods)


def check_refuter():
    wrong = parse_grammar(WRONG_CANDIDATE)
    r, secs = _timed(refute_candidate, wrong, RefuteBounds(max_size=12))
    bad_ok = r.verdict == REFUTED_BY_ENUMERATION and secs < 5
    good = finite_candidate(10)
    g = refute_candidate(good, RefuteBounds(max_size=10, complete_size=10))
    ok = bad_ok and g.verdict == NO_REFUTATION
    return ok, f"wrong candidate: {r.verdict} in {secs:.2f}s; finite candidate: {g.verdict}"


CHECKS = (
    (1, "G_ex enumeration", check_gex_enumeration),
    (2, "worked derivation replay", check_example_replay),
    (3, "U_i factorizations", check_factorizations),
    (4, "key lemma brute force", check_key_lemma_bruteforce),
    (5, "witness and transcript", check_witness),
    (6, "normal-form pipeline", check_normal_forms),
    (7, "pumping", check_pumping),
    (8, "closure constructions", check_closure),
    (9, "engine properties", check_engine),
    (10, "refuter sanity", check_refuter),
)


def run_check(number, seed=0):
    for n, name, fn in CHECKS:
        if n == number:
            t0 = time.perf_counter()
            try:
                ok, detail = fn(seed=seed) if "seed" in inspect.signature(fn).parameters else fn()
            except Exception as exc:  # a crash is a failed check, reported with its cause
                log.exception("check %d crashed", n)
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            return CheckResult(n, name, ok, detail, time.perf_counter() - t0)
    raise KeyError(f"no check numbered {number}")


def run_checks(numbers=None, seed=0):
    return [run_check(n, seed) for n in (numbers or [n for n, _, _ in CHECKS])]
