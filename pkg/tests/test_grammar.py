import random

import pytest
from hypothesis import given, settings, strategies

from cftg.checks import LEMMA_GRAMMAR, lemma_instances
from cftg.dycklab import ETA_EX, G_EX, RULE1, RULE3, scripted_derivation
from cftg.formats import parse_grammar, sample_grammar
from cftg.grammar import (
    NO_WITHIN_LIMITS,
    OI,
    UNRESTRICTED,
    YES,
    ClaimError,
    Cftg,
    GrammarError,
    ModeError,
    Production,
    ProductionError,
    SoundnessError,
    bounded_language,
    derive_step,
    enumerate_bounded,
    is_total,
    language,
    make_total,
    member_bounded,
    productive_and_reachable,
    remove_useless,
    rewrites,
    verify_oi_decomposition,
)
from cftg.terms import identity, parse_tree, positions, substitute, subtree, tup

T = parse_tree
NONDELETING_SAMPLES = ("g_ex.cftg", "twins.cftg", "ladder.cftg", "nested.cftg", "dform.cftg", "gnf_chain.cftg")


def grammar(text):
    return parse_grammar(text)


def test_derive_step_examples():
    second = derive_step(G_EX, ETA_EX, (2,), RULE1)
    assert second == T("δ1(#,A(a(c(#)),b(d(#)),δ2(#,#)))")
    assert second == scripted_derivation()[1]
    assert derive_step(G_EX, ETA_EX, (2,), RULE3) == T("δ1(#,δ2(c(c(#)),δ1(d(d(#)),δ2(#,#))))")
    g = grammar("terminals α/0\nnonterminals S/0\naxiom S\nrule S -> α\n")
    assert derive_step(g, T("S"), (), g.productions[0]) == T("α")


def test_derive_step_errors():
    with pytest.raises(ProductionError):
        derive_step(G_EX, ETA_EX, (1,), RULE1)
    nested = T("δ1(#,A(A(#,#,#),#,#))")
    with pytest.raises(ModeError):
        derive_step(G_EX, nested, (2, 1), RULE3, mode=OI)
    assert derive_step(G_EX, nested, (2, 1), RULE3, mode=UNRESTRICTED) == T(
        "δ1(#,A(δ2(c(#),δ1(d(#),#)),#,#))"
    )
    with pytest.raises(ModeError):
        derive_step(G_EX, ETA_EX, (2,), RULE1, mode="io")


def test_enumerate_examples():
    one = enumerate_bounded(G_EX, ETA_EX, max_steps=1)
    assert one.trees == {T("δ1(#,δ2(c(c(#)),δ1(d(d(#)),δ2(#,#))))")}
    assert one.truncated
    loop = grammar("terminals α/0\nnonterminals S/0\naxiom S\nrule S -> S\n")
    res = enumerate_bounded(loop, max_steps=5)
    assert res.trees == frozenset() and res.truncated
    single = grammar("terminals #/0\nnonterminals S/0\naxiom S\nrule S -> #\n")
    res = enumerate_bounded(single, max_steps=3)
    assert res.trees == {T("#")} and not res.truncated


def test_enumerate_reaches_worked_example():
    final = scripted_derivation()[-1]
    assert final in enumerate_bounded(G_EX, max_steps=8).trees
    assert final not in enumerate_bounded(G_EX, max_steps=7).trees


def test_enumerate_rejects_bad_limits():
    with pytest.raises(ValueError):
        enumerate_bounded(G_EX, max_steps=-1)
    with pytest.raises(ValueError):
        enumerate_bounded(G_EX, max_size=0)


def test_member_examples():
    assert member_bounded(G_EX, scripted_derivation()[-1]) == YES
    assert member_bounded(G_EX, T("#")) == NO_WITHIN_LIMITS
    single = grammar("terminals #/0\nnonterminals S/0\naxiom S\nrule S -> #\n")
    assert member_bounded(single, T("#")) == YES


def test_member_on_deleting_grammar():
    g = grammar(
        "terminals f/1 α/0\nnonterminals S/0 K/1 L/0\naxiom S\n"
        "rule S -> K(L)\nrule K(x1) -> f(α)\nrule L -> L\n"
    )
    assert not g.is_nondeleting()
    assert member_bounded(g, T("f(α)")) == YES


def test_productive_and_reachable():
    g = grammar("terminals α/0\nnonterminals S/0 A/1\naxiom S\nrule S -> A(α)\nrule A(x1) -> A(x1)\n")
    productive, _ = productive_and_reachable(g)
    assert "A" not in productive
    assert not is_total(g)
    productive, reachable = productive_and_reachable(G_EX)
    assert productive == {"A"} and reachable == {"A"}
    g = grammar("terminals α/0\nnonterminals S/0 B/0\naxiom S\nrule S -> α\nrule B -> α\n")
    _, reachable = productive_and_reachable(g)
    assert "B" not in reachable


def test_remove_useless_examples():
    g = grammar(
        "terminals α/0 β/0 f/1\nnonterminals S/0 A/1\naxiom S\n"
        "rule S -> α\nrule S -> A(β)\nrule A(x1) -> A(f(x1))\n"
    )
    assert [str(p) for p in remove_useless(g).productions] == ["S -> α"]
    assert remove_useless(G_EX) == G_EX
    deleting = grammar("terminals α/0\nnonterminals S/0 K/1\naxiom S\nrule S -> K(α)\nrule K(x1) -> α\n")
    with pytest.raises(SoundnessError):
        remove_useless(deleting)


@pytest.mark.parametrize("name", NONDELETING_SAMPLES)
def test_remove_useless_preserves_language(name):
    G = sample_grammar(name)
    assert language(remove_useless(G), 10) == language(G, 10)


@pytest.mark.parametrize("name", NONDELETING_SAMPLES)
def test_fixpoint_agrees_with_search(name):
    # two independent routes: breadth-first OI search and the least fixpoint
    G = sample_grammar(name)
    assert bounded_language(G, 11) == language(G, 11)


@pytest.mark.parametrize("name", NONDELETING_SAMPLES)
def test_oi_complete_against_unrestricted(name):
    G = sample_grammar(name)
    assert language(G, 10, mode=OI) == language(G, 10, mode=UNRESTRICTED)


def test_language_requires_nondeleting():
    deleting = grammar("terminals α/0\nnonterminals S/0 K/1\naxiom S\nrule S -> K(α)\nrule K(x1) -> α\n")
    with pytest.raises(SoundnessError):
        language(deleting, 5)
    assert bounded_language(deleting, 5) == {T("α")}


def test_classification_predicates():
    assert G_EX.classify() == {"linear": True, "nondeleting": True, "simple": True, "monadic": False, "regular": False}
    twins = sample_grammar("twins.cftg")
    assert not twins.is_linear() and twins.is_monadic()
    for name in NONDELETING_SAMPLES:
        G = sample_grammar(name)
        if G.is_simple():
            for p in G.productions:
                vs = [u.label for u in _leaves(p.rhs) if u.is_var]
                assert sorted(vs) == list(range(1, p.rank + 1))


def _leaves(t):
    if not t.children:
        yield t
    for c in t.children:
        yield from _leaves(c)


def test_grammar_invariants():
    with pytest.raises(GrammarError):
        Cftg({"A": 0}, {"A": 0}, T("A"), [])
    with pytest.raises(ProductionError):
        Cftg({"A": 1}, {"a": 0}, T("a"), [Production("A", 2, T("a"))])
    with pytest.raises(Exception):
        Cftg({"A": 1}, {"a": 0}, T("a"), [Production("A", 1, T("x2"))])


def test_verify_decomposition_examples():
    G = grammar(LEMMA_GRAMMAR)
    terminal = tup(0, T("a"))
    found = verify_oi_decomposition(G, terminal, tup(0), terminal, 0)
    assert found is not None and found[0] == 0
    eta = tup(1, T("A(x1)"))
    kappa = tup(0, T("a"))
    t = tup(0, T("g(a)"))
    k, u_tilde, theta, v = verify_oi_decomposition(G, eta, kappa, t, 1)
    assert (k, u_tilde, theta, v) == (1, tup(1, T("g(x1)")), identity(1), tup(0, T("a")))
    with pytest.raises(ClaimError):
        verify_oi_decomposition(G, eta, kappa, t, 2)


def test_decomposition_on_engine_derivations():
    G, cases = lemma_instances(count=40, seed=3)
    for eta, kappa, t, n in cases:
        assert verify_oi_decomposition(G, eta, kappa, t, n) is not None


@settings(deadline=None)
@given(strategies.data())
def test_derive_step_is_local(data):
    forms = scripted_derivation()
    eta = data.draw(strategies.sampled_from(forms[:-1]))
    options = list(rewrites(G_EX, eta, mode=UNRESTRICTED))
    at, prod, new = data.draw(strategies.sampled_from(options))
    assert derive_step(G_EX, eta, at, prod, mode=UNRESTRICTED) == new
    for w in positions(eta):
        if w[: len(at)] == at:
            continue
        if at[: len(w)] == w:
            continue
        assert subtree(new, w).label == subtree(eta, w).label
    args = subtree(eta, at).children
    assert subtree(new, at) == substitute(prod.rhs, args)


def test_make_total_examples():
    g = grammar(
        "terminals f/2 α/0\nnonterminals S/0 A/1 B/0\naxiom S\n"
        "rule S -> A(B)\nrule A(x1) -> f(α,α)\nrule A(x1) -> f(x1,α)\nrule B -> B\n"
    )
    assert not is_total(g)
    total = make_total(g)
    assert is_total(total)
    assert bounded_language(total, 6) == bounded_language(g, 6) == {T("f(α,α)")}
    empty = grammar("terminals α/0\nnonterminals S/0\naxiom S\nrule S -> S\n")
    with pytest.raises(GrammarError):
        make_total(empty)


@settings(deadline=None, max_examples=30)
@given(strategies.data())
def test_make_total_preserves_language(data):
    rng = random.Random(data.draw(strategies.integers(0, 10**6)))
    rhs_pool = ["f(x1,x1)", "g(x1)", "a", "B", "C(x1)", "f(B,x1)", "g(C(a))", "f(a,C(x1))", "x1"]
    lines = ["terminals f/2 g/1 a/0", "nonterminals S/0 A/1 B/0 C/1", "axiom S", "rule S -> A(B)"]
    for lhs, arity in (("A", "A(x1)"), ("B", "B"), ("C", "C(x1)")):
        for _ in range(rng.randint(1, 3)):
            rhs = rng.choice([r for r in rhs_pool if lhs != "B" or "x1" not in r])
            lines.append(f"rule {arity} -> {rhs}")
    g = grammar("\n".join(lines) + "\n")
    try:
        total = make_total(g)
    except GrammarError:
        assert not bounded_language(g, 7)
        return
    assert is_total(total)
    assert bounded_language(total, 7) == bounded_language(g, 7)
