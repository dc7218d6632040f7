import pytest
from hypothesis import given, settings, strategies

from cftg import normalform as nf
from cftg.dycklab import G_EX
from cftg.formats import parse_grammar, sample_grammar
from cftg.grammar import bounded_language, nonterminal_tree
from cftg.terms import Tree, TreeTuple, compose, parse_tree, variables

T = parse_tree
SAMPLES = ("twins.cftg", "ladder.cftg", "nested.cftg")
GAMMA_TOY = (
    "terminals σ/3 #/0 g/1\nnonterminals S/0 A/3\naxiom S\n"
    "rule S -> A(#,#,#)\nrule A(x1,x2,x3) -> σ(g(x1),x2,x3)\nrule A(x1,x2,x3) -> A(g(x1),x2,σ(x1,x2,x3))\n"
)


@pytest.fixture(scope="module", params=SAMPLES)
def pipeline(request):
    G = sample_grammar(request.param)
    return G, nf.normalize(G)


def test_pipeline_runs_every_stage(pipeline):
    _, steps = pipeline
    assert [s.stage for s in steps] == list(nf.STAGES)


def test_every_stage_passes_its_checker(pipeline):
    _, steps = pipeline
    for sg in steps:
        assert sg.violations() == []


def test_every_stage_preserves_bounded_language(pipeline):
    G, steps = pipeline
    want = bounded_language(G, 12)
    for sg in steps:
        assert bounded_language(sg.grammar, 12) == want, sg.stage


def test_scope_error_on_non_spinal_alphabet():
    with pytest.raises(nf.ScopeError):
        nf.uniformize(G_EX)
    with pytest.raises(nf.ScopeError):
        nf.SpinalAlphabet.of({"σ": 3, "τ": 3, "#": 0})


def test_stage_error_on_wrong_input():
    sg = nf.uniformize(sample_grammar("twins.cftg"))
    with pytest.raises(nf.StageError):
        nf.limit_spine(sg)
    with pytest.raises(nf.StageError):
        nf.remove_torsions(sg)
    with pytest.raises(nf.StageError):
        nf.split_spine_chain(sample_grammar("twins.cftg"))


def test_uniformize_stores_hash_in_a_slot():
    G = parse_grammar("terminals σ/3 #/0\nnonterminals S/0\naxiom S\nrule S -> #\n")
    sg = nf.uniformize(G)
    assert sg.p == 1
    assert sg.grammar.axiom == T("S(#)")
    assert [str(p) for p in sg.grammar.productions] == ["S(x1) -> x1"]


def test_uniformize_splits_nested_rhs():
    G = parse_grammar(GAMMA_TOY)
    sg = nf.uniformize(G)
    assert sg.check()
    forms = {form for _, form in nf.production_forms(sg)}
    assert {"N1", "N3", "N4"} <= forms
    assert bounded_language(sg.grammar, 10) == bounded_language(G, 10)


def test_uniformize_keeps_normal_grammar_up_to_padding():
    G = parse_grammar(
        "terminals σ/3 #/0 g/1\nnonterminals S/3 A/3\naxiom S(#,#,#)\n"
        "rule S(x1,x2,x3) -> A(x1,x2,x3)\nrule A(x1,x2,x3) -> σ(x1,x2,x3)\nrule A(x1,x2,x3) -> g(x2)\n"
    )
    sg = nf.uniformize(G)
    assert sg.check()
    assert bounded_language(sg.grammar, 8) == bounded_language(G, 8)


def _split_toy():
    return nf.split_spine_chain(nf.uniformize(parse_grammar(GAMMA_TOY)))


def test_split_examples():
    sg = _split_toy()
    p = sg.p
    rules = {str(prod) for prod in sg.grammar.productions}
    # (N4) σ(x_i,x_j,x_q) gives the spine copy σ(x_i,x_j,x_{p+q})
    sigma_rules = [prod for prod in sg.grammar.productions if prod.rhs.label == "σ"]
    assert sigma_rules and all(prod.rhs.children[2].label > p for prod in sigma_rules)
    # (N3) γ(x_i) is kept on the chain copy
    assert any(r.endswith("-> g(x1)") and "_c(" in r for r in rules)
    assert sg.grammar.axiom == Tree(sg.grammar.axiom.label, [T("#")] * (2 * p))
    assert bounded_language(sg.grammar, 10) == bounded_language(parse_grammar(GAMMA_TOY), 10)


def test_limit_examples():
    split = _split_toy()
    sg = nf.limit_spine(split)
    p = sg.p
    assert sg.check()
    # (A2) A → x_{p+q} turns into ⟨A,q⟩ → x_{p+1}
    a2 = [prod for prod, form in nf.production_forms(split) if form == "A2"]
    out = {str(prod) for prod in sg.grammar.productions}
    for prod in a2:
        q = prod.rhs.label - p
        head = f"{prod.lhs}@{q}(" + ",".join(f"x{i}" for i in range(1, p + 2)) + ")"
        assert f"{head} -> x{p + 1}" in out
    # (A1) productions expand to p·p annotated variants
    a1 = [prod for prod, form in nf.production_forms(split) if form == "A1" and prod.lhs != split.grammar.axiom.label]
    for lhs in {prod.lhs for prod in a1}:
        count = sum(1 for prod in a1 if prod.lhs == lhs)
        variants = [r for r in sg.grammar.productions if r.lhs.startswith(lhs + "@") and "~" not in r.lhs]
        assert len(variants) == count * p * p
    assert bounded_language(sg.grammar, 10) == bounded_language(parse_grammar(GAMMA_TOY), 10)


@pytest.mark.parametrize("name", SAMPLES)
def test_limited_spine_trees_have_one_spine_variable(name):
    sg = nf.normalize(sample_grammar(name), until=nf.LIMITED)[-1]
    _, spine = nf._kinds(sg.grammar, nf.LIMITED, sg.p)
    for a in spine:
        for t in bounded_language(sg.grammar, 10, start=nonterminal_tree(a, sg.p + 1)):
            assert variables(t).count(sg.p + 1) == 1


def _limited(text, p):
    return nf.stage_from_grammar(parse_grammar(text), nf.LIMITED, p)


LIMITED_TOY = """\
terminals σ/3 #/0 a/1
nonterminals S/2 A/2 B/2 D/2 E/1
axiom S(#,#)
rule S(x1,x2) -> A(x1,D(x1,x2))
rule A(x1,x2) -> B(E(x1),x2)
rule B(x1,x2) -> σ(x1,x1,x2)
rule D(x1,x2) -> x2
rule E(x1) -> a(x1)
"""


def test_eliminate_chains_examples():
    sg = _limited(LIMITED_TOY, 1)
    out = nf.eliminate_chains(sg)
    assert out.check()
    rules = [str(prod) for prod in out.grammar.productions]
    # (B2) stays as A → B ⊸ D; (B7) contributes a to u_E
    assert "S(x1,x2) -> A(x1,D(x1,x2))" in rules
    assert "A(x1,x2) -> B(a(x1),x2)" in rules
    assert nf.chain_witnesses(sg)["E"] == T("a(x1)")
    assert out.metadata["chain_determinism"].startswith("singleton")
    assert bounded_language(out.grammar, 10) == bounded_language(sg.grammar, 10) == {T("σ(a(#),a(#),#)")}


def test_eliminate_chains_needs_productive_chains():
    text = LIMITED_TOY.replace("rule E(x1) -> a(x1)\n", "rule E(x1) -> E(E(x1))\n")
    with pytest.raises(nf.PreconditionError):
        nf.eliminate_chains(_limited(text, 1))


def test_eliminate_chains_reports_nondeterminism():
    text = LIMITED_TOY + "rule E(x1) -> x1\n"
    out = nf.eliminate_chains(_limited(text, 1))
    assert out.metadata["chain_determinism"].startswith("violated")


CHAINFREE_TOY = """\
terminals σ/3 #/0 a/1
nonterminals S/2 B/2 C/2
axiom S(#,#)
rule S(x1,x2) -> B(x1,C(x1,x2))
rule B(x1,x2) -> σ(x1,x1,x2)
rule C(x1,x2) -> x2
rule C(x1,x2) -> σ(x1,x1,x2)
"""


def test_remove_projections_examples():
    sg = nf.stage_from_grammar(parse_grammar(CHAINFREE_TOY), nf.CHAINFREE, 1)
    assert nf.projecting_nonterminals(sg) == {"C"}
    out = nf.remove_projections(sg)
    rules = [str(prod) for prod in out.grammar.productions]
    assert "S(x1,x2) -> B(x1,x2)" in rules
    assert "C(x1,x2) -> x2" not in rules
    assert out.check()
    assert bounded_language(out.grammar, 10) == bounded_language(sg.grammar, 10)


def test_remove_projections_without_projections_is_identity():
    text = CHAINFREE_TOY.replace("rule C(x1,x2) -> x2\n", "")
    sg = nf.stage_from_grammar(parse_grammar(text), nf.CHAINFREE, 1)
    assert nf.remove_projections(sg).grammar.productions == sg.grammar.productions


NOPROJ_TOY = """\
terminals σ/3 #/0 a/1
nonterminals S/2 B/2
axiom S(#,#)
rule S(x1,x2) -> B(a(x1),x2)
rule B(x1,x2) -> B(a(x1),x2)
rule B(x1,x2) -> σ(x1,x1,x2)
"""


def test_remove_torsions_identity_case():
    sg = nf.stage_from_grammar(parse_grammar(NOPROJ_TOY), nf.NOPROJ, 1)
    out = nf.remove_torsions(sg)
    assert out.check()
    assert len([p for p in out.grammar.productions if p.rhs.label != "σ"]) >= 2
    assert bounded_language(out.grammar, 10) == bounded_language(sg.grammar, 10)


def test_remove_torsions_pushes_copies_into_theta():
    text = NOPROJ_TOY.replace("nonterminals S/2 B/2", "nonterminals S/3 B/3").replace("S(#,#)", "S(#,#,#)")
    text = (
        text.replace("S(x1,x2) -> B(a(x1),x2)", "S(x1,x2,x3) -> B(a(x1),a(x1),x3)")
        .replace("B(x1,x2) -> B(a(x1),x2)", "B(x1,x2,x3) -> B(a(x1),x2,x3)")
        .replace("B(x1,x2) -> σ(x1,x1,x2)", "B(x1,x2,x3) -> σ(x1,x2,x3)")
    )
    sg = nf.stage_from_grammar(parse_grammar(text), nf.NOPROJ, 2)
    out = nf.remove_torsions(sg)
    assert out.check()
    for prod, form in nf.production_forms(out):
        if form == "D1":
            assert TreeTuple(3, prod.rhs.children).is_torsion_free()
    assert bounded_language(out.grammar, 12) == bounded_language(sg.grammar, 12)


def test_stage_from_grammar_rejects_wrong_forms():
    with pytest.raises(nf.StageError):
        nf.stage_from_grammar(parse_grammar(NOPROJ_TOY), nf.SPLIT, 1)
    sg = nf.stage_from_grammar(sample_grammar("dform.cftg"), nf.TORSIONFREE)
    assert sg.p == 1 and sg.check()


def test_certificate_names_stage_and_p():
    sg = nf.normalize(sample_grammar("twins.cftg"), until=nf.SPLIT)[-1]
    assert sg.certificate()["stage"] == "split"
    assert sg.certificate()["p"] == str(sg.p)
    assert set(nf.CLI_STAGES.values()) == set(nf.STAGES)


def _d1_productions(sg):
    return [prod for prod, form in nf.production_forms(sg) if form == "D1"]


@settings(deadline=None, max_examples=50)
@given(strategies.data())
def test_d1_chains_compose_torsion_free(data):
    name = data.draw(strategies.sampled_from(SAMPLES))
    sg = nf.normalize(sample_grammar(name))[-1]
    d1 = _d1_productions(sg)
    if not d1:
        return
    prod = data.draw(strategies.sampled_from(d1))
    acc = TreeTuple(sg.p + 1, prod.rhs.children)
    for _ in range(data.draw(strategies.integers(0, 4))):
        nxt = [q for q in d1 if q.lhs == prod.rhs.label]
        if not nxt:
            break
        prod = data.draw(strategies.sampled_from(nxt))
        acc = compose(TreeTuple(sg.p + 1, prod.rhs.children), acc)
        assert acc.is_torsion_free()


@settings(deadline=None, max_examples=25)
@given(strategies.data())
def test_random_uniformize_preserves_language(data):
    pool = ["σ(x1,x2,#)", "σ(g(x1),#,x2)", "A(g(x1),x2)", "A(x2,σ(x1,#,#))", "g(x1)", "x2", "σ(#,#,A(x1,x1))"]
    rules = data.draw(strategies.lists(strategies.sampled_from(pool), min_size=1, max_size=4, unique=True))
    text = "terminals σ/3 #/0 g/1\nnonterminals S/0 A/2\naxiom S\nrule S -> A(#,#)\n"
    text += "".join(f"rule A(x1,x2) -> {r}\n" for r in rules)
    G = parse_grammar(text)
    sg = nf.uniformize(G)
    assert sg.check()
    assert bounded_language(sg.grammar, 9) == bounded_language(G, 9)
