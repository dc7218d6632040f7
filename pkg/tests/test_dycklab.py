import pytest
from hypothesis import given, settings, strategies

from cftg.checks import EXAMPLE_IOTA, EXAMPLE_PREIMAGE, WRONG_CANDIDATE, finite_candidate
from cftg.dycklab import (
    G_EX,
    H_EX,
    NO_REFUTATION,
    REFUTED_BY_ENUMERATION,
    REFUTED_BY_PUMPING,
    CompletionError,
    DyckAlphabetError,
    DyckParams,
    PerturbationError,
    RefuteBounds,
    ShapeError,
    algorithm1,
    apply_perturbation,
    bounded_L,
    build_fixtures,
    chains_Z,
    check_key_lemma,
    complete_chain,
    cut_witness,
    describe_factorization,
    dyck_reduce,
    factorize,
    gen_U,
    iota,
    iota_prime,
    is_dyck,
    membership_props,
    perturb_check,
    refute_candidate,
    replay_refutation,
    replay_transcript,
    scripted_derivation,
    sentential_counts_ok,
    witness_tree,
)
from cftg.formats import parse_grammar, sample_grammar
from cftg.grammar import YES, member_bounded
from cftg.hom import apply_hom, classify_hom
from cftg.terms import Tree, count_symbol, decompress_word, parse_tree

T = parse_tree
WORDS = strategies.text(alphabet="abcd", max_size=24)


def test_dyck_reduce_examples():
    assert dyck_reduce("ab") == ""
    assert dyck_reduce("acdb") == ""
    assert dyck_reduce("aab") == "a"
    word = decompress_word("c a^2 c^2 a c d b d c a^2 c d b^2 d^2 b^2 d")
    assert word == EXAMPLE_IOTA
    assert dyck_reduce(word) == ""
    with pytest.raises(DyckAlphabetError):
        dyck_reduce("ax")


@given(WORDS)
def test_dyck_reduce_is_idempotent(w):
    r = dyck_reduce(w)
    assert dyck_reduce(r) == r
    assert is_dyck(w) == (r == "")


@given(WORDS, WORDS)
def test_dyck_reduce_respects_concatenation(u, v):
    assert dyck_reduce(u + v) == dyck_reduce(dyck_reduce(u) + dyck_reduce(v))


@given(WORDS)
def test_reduced_words_have_no_adjacent_pair(w):
    r = dyck_reduce(w)
    assert all(pair not in r for pair in ("ab", "cd"))


def test_fixtures():
    G, h = build_fixtures()
    assert G == G_EX and h.images == H_EX.images
    assert G.is_simple()
    assert classify_hom(h).simple
    assert [str(p) for p in G.productions] == [
        "A(x1,x2,x3) -> A(a(x1),b(x2),x3)",
        "A(x1,x2,x3) -> A(c(c(x1)),d(#),A(c(#),d(d(x2)),x3))",
        "A(x1,x2,x3) -> δ2(c(x1),δ1(d(x2),x3))",
    ]
    assert member_bounded(G_EX, scripted_derivation()[-1]) == YES


def test_iota_examples():
    assert iota(EXAMPLE_PREIMAGE) == EXAMPLE_IOTA
    assert iota(T("σ(#,c(c(#)),σ(d(d(#)),#,#))")) == "ccdd"
    with pytest.raises(ShapeError):
        iota(T("#"))


def test_iota_prime_on_sentential_forms():
    for eta in scripted_derivation():
        assert is_dyck(iota_prime(eta))
        assert sentential_counts_ok(eta)
    final = scripted_derivation()[-1]
    assert iota_prime(final) == iota(EXAMPLE_PREIMAGE)


def test_membership_props_examples():
    r = membership_props(EXAMPLE_PREIMAGE)
    assert (r.shape_ok, r.counts_ok, r.dyck_ok, r.gex_member_bounded) == (True, True, True, True)
    assert count_symbol(EXAMPLE_PREIMAGE, "c") == 4 * 3 - 6
    assert not membership_props(T("σ(#,c(#),σ(d(#),#,#))")).counts_ok
    assert not membership_props(T("#")).shape_ok
    delta = membership_props(scripted_derivation()[3])
    assert delta.sentential_counts_ok and delta.dyck_ok


def test_bounded_members_satisfy_the_necessary_conditions():
    members = bounded_L(12)
    assert members
    for t in members:
        r = membership_props(t, check_member=False)
        assert r.shape_ok and r.counts_ok and r.dyck_ok


def test_complete_chain_examples():
    assert complete_chain(T("σ(#,x1,σ(d(d(#)),#,#))")) == T("c(c(#))")
    assert complete_chain(T("σ(#,c(c(#)),σ(d(d(#)),#,x1))")) == T("#")
    with pytest.raises(CompletionError):
        complete_chain(T("σ(#,x1,σ(a(#),#,#))"))
    with pytest.raises(CompletionError):
        complete_chain(T("σ(#,c(c(#)),σ(d(d(#)),#,#))"))


def _chain_holes(t):
    """(tree with hole, removed subtree) for every chain position of t."""
    out = []

    def walk(node, rebuild):
        if node.label != "σ":
            return
        for side in (0, 1):
            path = []
            sub = node.children[side]
            while True:
                out.append((rebuild(_with_hole(node, side, path)), sub))
                if not sub.children:
                    break
                path.append(sub.label)
                sub = sub.children[0]
        walk(node.children[2], lambda x, node=node, rebuild=rebuild: rebuild(Tree("σ", [node.children[0], node.children[1], x])))

    walk(t, lambda x: x)
    return out


def _with_hole(node, side, prefix):
    chain = Tree(1)
    for label in reversed(prefix):
        chain = Tree(label, [chain])
    kids = list(node.children)
    kids[side] = chain
    return Tree("σ", kids)


@settings(deadline=None, max_examples=60)
@given(strategies.data())
def test_complete_chain_recovers_removed_chain(data):
    t = data.draw(strategies.sampled_from(sorted(bounded_L(14), key=str)))
    holed, removed = data.draw(strategies.sampled_from(_chain_holes(t)))
    assert complete_chain(holed) == removed


def test_gen_u_examples():
    assert gen_U(1) == "cacdbd"
    assert gen_U(2) == "caac" + "cacdbd" + "cacdbd" + "dbbd"
    for i in range(1, 7):
        assert is_dyck(gen_U(i))
    assert gen_U(2, e=2) == "caaaac" + "caacdbbd" * 2 + "dbbbbd"


@pytest.mark.parametrize("i", [1, 2, 3, 4])
@pytest.mark.parametrize("e", [1, 2])
def test_chains_spell_u(i, e):
    Z = chains_Z(i, e)
    assert len(Z) == 2 ** i
    spelled = "".join(z[::-1] if k % 2 == 0 else z for k, z in enumerate(Z))
    assert spelled == gen_U(i, e)


def test_factorize_examples():
    f = factorize(1, 1)
    assert (f.P, f.S, len(f.defects)) == ("cac", "dbd", 2)
    f = factorize(2, 1)
    assert describe_factorization(f) == ("α2 α1", "β1 U1 β2")
    assert f.V == (False,) and f.W == (True,)
    assert f.D == "$caaccac$dbd$dbbd$"
    assert {(d.kind, d.lo, d.hi) for d in f.defects} == {("a", 1, 2), ("b", 1, 1), ("b", 2, 2)}
    with pytest.raises(IndexError):
        factorize(2, 3)


@pytest.mark.parametrize("i", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("e", [1, 2])
def test_factorization_invariants(i, e):
    for j in range(1, 2 ** (i - 1) + 1):
        f = factorize(i, j, e)
        assert f.check() == []
        assert len(f.defects) == i + 1


def test_perturbation_examples():
    f = factorize(2, 1)
    assert apply_perturbation(f.P, (2, 1)) == f.P
    assert perturb_check(2, 1, (2, 1))
    assert not perturb_check(2, 1, (1, 1))
    with pytest.raises(PerturbationError):
        apply_perturbation(f.P, (1,))


@pytest.mark.parametrize("i", [1, 2, 3])
def test_key_lemma_bruteforce(i):
    report = check_key_lemma(i, exp_bound=3, e=1)
    assert report.ok and report.cases > 0 and report.congruent > 0


def test_key_lemma_scaled_unit():
    report = check_key_lemma(2, exp_bound=4, e=2)
    assert report.ok and report.congruent > 0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_witness_sigma_count(p):
    params = DyckParams(p, 1)
    t = witness_tree(params)
    assert count_symbol(t, "σ") == params.m
    assert iota(t) == gen_U(params.q)


@pytest.mark.parametrize("p", [1, 2])
def test_transcript_derives_the_image(p):
    params = DyckParams(p, 1)
    t = witness_tree(params)
    final, _ = replay_transcript(algorithm1(params))
    assert final == apply_hom(H_EX, t)


def test_witness_is_a_member():
    t = witness_tree(DyckParams(1, 1))
    assert membership_props(t).all_true()


def test_cut_witness_examples():
    t = witness_tree(DyckParams(1, 1))
    t1, t2, z1, z2 = cut_witness(t, 1)
    assert count_symbol(t1, "σ") == 1 and count_symbol(t2, "σ") == 2
    Z = chains_Z(2)
    assert z1 == (Z[0],) and z2 == Z[1:]
    defects = factorize(2, 1).defects
    assert len(defects) == 2 + 1
    with pytest.raises(IndexError):
        cut_witness(t, 3)


def test_refuter_catches_wrong_counts():
    G = parse_grammar(WRONG_CANDIDATE)
    r = refute_candidate(G, RefuteBounds(max_size=12))
    assert r.verdict == REFUTED_BY_ENUMERATION
    assert replay_refutation(G, r)


def test_refuter_accepts_exact_finite_grammar():
    G = finite_candidate(10)
    r = refute_candidate(G, RefuteBounds(max_size=10, complete_size=10))
    assert r.verdict == NO_REFUTATION


def test_refuter_reports_missed_member():
    trees = sorted(bounded_L(10), key=str)[1:]
    text = "terminals σ/3 #/0 a/1 b/1 c/1 d/1\nnonterminals S/0\naxiom S\n"
    text += "".join(f"rule S -> {t}\n" for t in trees)
    G = parse_grammar(text)
    r = refute_candidate(G, RefuteBounds(max_size=10, complete_size=10))
    assert r.verdict == REFUTED_BY_ENUMERATION and r.kind == "missed"
    assert replay_refutation(G, r)


def test_refuter_by_pumping():
    G = sample_grammar("pump.cftg")
    r = refute_candidate(G, RefuteBounds(max_size=12, complete_size=0))
    assert r.verdict == REFUTED_BY_PUMPING
    assert not is_dyck(iota(r.tree))
    assert replay_refutation(G, r)
    assert r.witness()["verdict"] == REFUTED_BY_PUMPING

