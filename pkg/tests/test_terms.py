import pytest
from hypothesis import given, strategies

from cftg.terms import (
    DimensionError,
    ParseError,
    PositionError,
    RankError,
    RankedAlphabet,
    Tree,
    VariableIndexError,
    compose,
    compress_word,
    count_symbol,
    decompress_word,
    identity,
    is_spine_tuple,
    lin,
    navigate,
    parse_position,
    parse_tree,
    power,
    projection,
    replace,
    show,
    spine_compose,
    spine_tuple,
    substitute,
    symbol_counts,
    torsion,
    tup,
    variables,
    word_to_tree,
)
from treegen import draw_tree, draw_tuple

T = parse_tree
ALPHA = {"f": 2, "g": 1, "a": 0, "b": 0}
EXAMPLE_T = T("σ(#,c(a(c(c(a(a(c(#))))))),σ(d(b(d(#))),c(a(a(c(#)))),σ(d(b(b(d(d(b(b(d(#)))))))),#,#)))")


def test_parse_and_show_round_trip():
    t = T("σ(#, c(x1), x3)")
    assert show(t) == "σ(#,c(x1),x3)"
    assert T(show(t)) == t
    assert t.size() == 5


def test_parse_errors():
    with pytest.raises(ParseError):
        T("σ(#,")
    with pytest.raises(ParseError):
        T("f(a))")
    with pytest.raises(VariableIndexError):
        Tree(0)
    with pytest.raises(RankError):
        Tree(1, [Tree("a")])


def test_parse_checks_ranks_against_alphabet():
    alphabet = RankedAlphabet({"f": 2, "a": 0})
    assert T("f(a,a)", alphabet) == Tree("f", [Tree("a"), Tree("a")])
    with pytest.raises(RankError):
        T("f(a)", alphabet)


def test_compose_examples():
    ab = tup(1, T("a(x1)"), T("b(x1)"))
    assert compose(identity(2), ab) == ab
    assert compose(projection(2, 2), ab) == tup(1, T("b(x1)"))
    assert compose(tup(3, T("σ(x1,x2,x3)")), tup(0, T("#"), T("c(#)"), T("#"))) == tup(0, T("σ(#,c(#),#)"))


def test_compose_dimension_error():
    with pytest.raises(DimensionError):
        compose(identity(2), identity(3))


def test_spine_compose_examples():
    assert spine_compose(tup(1, T("δ1(#,x1)")), tup(0, T("δ2(#,#)"))) == tup(0, T("δ1(#,δ2(#,#))"))
    axiom = spine_compose(tup(1, T("δ1(#,x1)")), spine_compose(tup(1, T("A(c(#),d(#),x1)")), tup(0, T("δ2(#,#)"))))
    assert axiom.components[0] == T("δ1(#,A(c(#),d(#),δ2(#,#)))")
    got = spine_compose(tup(1, T("σ(#,c(c(#)),x1)")), tup(0, T("σ(d(d(#)),#,#)")))
    assert got.components[0] == T("σ(#,c(c(#)),σ(d(d(#)),#,#))")


def test_lin_examples():
    v, theta = lin(tup(2, T("x1"), T("a(x2)")))
    assert (v, theta) == (tup(2, T("x1"), T("a(x2)")), identity(2))
    v, theta = lin(tup(2, T("x2"), T("a(x2)")))
    assert v == tup(2, T("x1"), T("a(x2)"))
    assert theta.images() == (2, 2)
    assert compose(v, theta) == tup(2, T("x2"), T("a(x2)"))
    v, theta = lin(tup(3, T("#")))
    assert v == tup(0, T("#")) and theta == torsion(3, []) and theta.k == 3


def test_substitute_examples():
    assert substitute(T("x1"), [T("a(#)")]) == T("a(#)")
    assert substitute(T("σ(x1,x2,x3)"), [T("#"), T("c(#)"), T("#")]) == T("σ(#,c(#),#)")
    assert substitute(T("γ(x1)"), [T("γ(x1)")]) == T("γ(γ(x1))")
    with pytest.raises(VariableIndexError):
        substitute(T("f(x1,x2)"), [T("a")])


def test_navigate_and_replace():
    t = T("σ(#,c(#),#)")
    assert navigate(T("σ(#,#,#)"), ()) == ("σ", T("σ(#,#,#)"))
    assert navigate(t, parse_position("2·1")) == ("#", T("#"))
    assert replace(T("σ(#,#,#)"), (1,), T("c(#)")) == T("σ(c(#),#,#)")
    with pytest.raises(PositionError):
        navigate(t, (4,))


def test_counts():
    assert count_symbol(T("σ(#,#,#)"), "#") == 3
    assert count_symbol(EXAMPLE_T, "σ") == 3
    assert count_symbol(EXAMPLE_T, "c") == 6
    assert sum(symbol_counts(EXAMPLE_T).values()) == EXAMPLE_T.size()


def test_words():
    assert word_to_tree("cac") == T("c(a(c(#)))")
    assert compress_word("caaccd") == "c a^2 c^2 d"
    assert decompress_word("c a^2 c^2 d") == "caaccd"


def test_spine_tuple_invariant():
    s = spine_tuple(2, [T("a(x1)"), T("x2")])
    assert is_spine_tuple(s)
    assert not is_spine_tuple(tup(3, T("x3"), T("x1"), T("x3")))


def test_trees_are_immutable():
    t = T("f(a,b)")
    with pytest.raises(AttributeError):
        t.label = "g"


@given(strategies.data())
def test_compose_is_associative(data):
    u = draw_tuple(data, ALPHA, 2, 2)
    v = draw_tuple(data, ALPHA, 2, 3)
    w = draw_tuple(data, ALPHA, 3, 1)
    assert compose(compose(u, v), w) == compose(u, compose(v, w))


@given(strategies.data())
def test_lin_round_trip(data):
    u = draw_tuple(data, ALPHA, data.draw(strategies.integers(1, 3)), 3)
    v, theta = lin(u)
    assert compose(v, theta) == u
    assert v.is_torsion_free()
    assert theta.is_torsion()


@given(strategies.data())
def test_power_law(data):
    u = draw_tuple(data, {"g": 1, "a": 0}, 2, 2)
    for j in range(4):
        assert power(u, j + 1) == compose(u, power(u, j))


def _rightmost_leaf(t):
    while t.children:
        t = t.children[-1]
    return t


@given(strategies.data())
def test_spine_compose_keeps_spine_shape(data):
    # s, t are chains hung off a spine ending in the spine variable x2
    chains = {"g": 1, "a": 0}
    s = tup(2, Tree("σ", [draw_tree(data, chains, 1, 2), Tree(2)]))
    t = tup(2, Tree("σ", [draw_tree(data, chains, 1, 2), Tree(2)]))
    out = spine_compose(s, t).components[0]
    assert variables(out).count(2) == 1
    assert _rightmost_leaf(out) == Tree(2)
    pair = spine_tuple(1, [out.children[0]])
    assert is_spine_tuple(pair)


@given(strategies.data())
def test_parse_show_round_trip_random(data):
    t = draw_tree(data, ALPHA, 2, 4)
    assert T(show(t)) == t
