"""Inverse linear homomorphisms for linear monadic grammars in Greibach form.

The construction runs in two flavours: inverse *alphabetic* homomorphisms
(an E-chain absorbs erased symbols, a universal nonterminal Z fills deleted
argument slots) and inverse *elementary ordered* homomorphisms (split off
δ₂-headed productions, eliminate them, drop useless rules, relabel δ₁/δ₂
pairs as σ).  ``inverse_linear_pipeline`` chains both along a
decomposition h = ψ_k ∘ ⋯ ∘ ψ₁ ∘ φ.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

from .grammar import (
    Cftg,
    GrammarError,
    Production,
    bounded_language,
    productive_and_reachable,
    remove_useless,
)
from .hom import ClassificationError, classify_hom, decompose_hom, elementary_data
from .terms import Tree, iter_nodes, show, substitute

log = logging.getLogger(__name__)

DEFAULT_ELIM_CAP = 12


class ClosureError(GrammarError):
    """A construction stage failed; ``stage`` names it."""

    def __init__(self, message, stage=None, grammar=None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage
        self.grammar = grammar


class GnfError(ClosureError):
    pass


class PreconditionError(ClosureError):
    pass


class CapacityError(ClosureError):
    pass


class InclusionError(ClosureError):
    pass


class PropertyPError(ClosureError):
    pass


# Greibach normal form.

G1, G2, G3 = "G1", "G2", "G3"


@dataclass(frozen=True)
class GreibachGrammar:
    grammar: Cftg
    forms: tuple  # (production, form) pairs

    ok = True

    def certificate(self):
        return [f"{form}: {prod}" for prod, form in self.forms]


@dataclass(frozen=True)
class GnfRejection:
    production: Production
    reason: str

    ok = False

    def __str__(self):
        where = f"'{self.production}': " if self.production is not None else ""
        return where + self.reason


def _is_chain(t, nts, var):
    """t is a chain of unary nonterminals ending in x1 (var) or in a nullary nonterminal."""
    while True:
        if t.is_var:
            return var
        if t.label not in nts:
            return False
        if nts[t.label] == 0:
            return not var
        t = t.children[0]


def _gnf_form(prod, G):
    nts, rhs = G.nonterminals, prod.rhs
    if rhs.is_var or rhs.label in nts:
        return None, "the right-hand side is not rooted by a terminal"
    if not rhs.children:
        return (G1, "") if prod.rank == 0 else (None, "a rank-1 nonterminal rewrites to a constant")
    var = prod.rank == 1
    special = [c for c in rhs.children if not (not c.is_var and c.label in nts and nts[c.label] == 0)]
    if var:
        holders = [c for c in rhs.children if any(u.is_var for u in iter_nodes(c))]
        if len(holders) != 1 or not _is_chain(holders[0], nts, True):
            return None, "x1 must occur in exactly one argument, below a chain of unary nonterminals"
        special = [c for c in special if c is not holders[0]]
        if special:
            return None, f"argument {show(special[0])} is not a nullary nonterminal"
        return G3, ""
    if len(special) > 1:
        return None, "more than one argument is not a nullary nonterminal"
    if special and not _is_chain(special[0], nts, False):
        return None, f"argument {show(special[0])} is not a chain of nonterminals"
    return G2, ""


def validate_gnf(G):
    """A GreibachGrammar, or a GnfRejection naming the first offending production."""
    nts = G.nonterminals
    if G.axiom.is_var or G.axiom.label not in nts or nts[G.axiom.label] != 0:
        return GnfRejection(None, f"axiom {show(G.axiom)} is not a nullary nonterminal")
    if not G.is_monadic():
        return GnfRejection(None, "the grammar is not monadic")
    forms = []
    for prod in G.productions:
        if not prod.is_linear() or not prod.is_nondeleting():
            return GnfRejection(prod, "not linear and nondeleting")
        form, why = _gnf_form(prod, G)
        if form is None:
            return GnfRejection(prod, why)
        forms.append((prod, form))
    return GreibachGrammar(G, tuple(forms))


def _require_gnf(G, stage="gnf"):
    if isinstance(G, GreibachGrammar):
        return G
    checked = validate_gnf(G)
    if not checked.ok:
        raise GnfError(f"not in Greibach normal form: {checked}", stage, G)
    return checked


def _fresh(base, taken):
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}{n}"
    taken.add(name)
    return name


# Inverse alphabetic homomorphisms.

def inverse_alphabetic(G, h):
    """A linear monadic grammar for h⁻¹(L(G)), h linear alphabetic."""
    gg = _require_gnf(G)
    G = gg.grammar
    cls = classify_hom(h)
    if not (cls.linear and cls.alphabetic):
        raise ClassificationError(f"{h.name} is not linear alphabetic")
    missing = [a for a in G.terminals if a not in h.target]
    if missing:
        raise ClassificationError(f"terminal(s) {', '.join(missing)} outside the target alphabet of {h.name}")
    taken = set(G.nonterminals) | set(G.terminals) | set(h.source)
    z = _fresh("Z", taken)
    e = _fresh("E", taken)

    def wrap(t):
        return Tree(e, [t])

    def fill(sigma, placed):
        n = h.source[sigma]
        return Tree(sigma, [placed.get(ell, Tree(z)) for ell in range(1, n + 1)])

    # symbols erased to a variable, and symbols mapped onto each target letter
    erasing, onto = [], {}
    for sigma in h.source:
        img = h.images[sigma]
        if img.is_var:
            erasing.append((sigma, img.label))
        else:
            onto.setdefault(img.label, []).append((sigma, [c.label for c in img.children]))

    prods = []
    for prod, form in gg.forms:
        rhs = prod.rhs
        for sigma, js in onto.get(rhs.label, []):
            placed = {j: child for j, child in zip(js, rhs.children)}
            prods.append(Production(prod.lhs, prod.rank, wrap(fill(sigma, placed))))
    for sigma, j in erasing:
        prods.append(Production(e, 1, fill(sigma, {j: Tree(1)})))
    prods.append(Production(e, 1, Tree(1)))
    prods.append(Production(e, 1, wrap(wrap(Tree(1)))))
    for sigma, n in h.source.items():
        prods.append(Production(z, 0, Tree(sigma, [Tree(z)] * n)))
    nts = dict(G.nonterminals)
    nts[z] = 0
    nts[e] = 1
    return Cftg(nts, h.source, G.axiom, prods)


# Inverse elementary ordered homomorphisms.

def compute_tildeN(G, delta2="δ2"):
    """Nonterminals with a δ₂-rooted production; G must be total and reachable."""
    G = G.grammar if isinstance(G, GreibachGrammar) else G
    productive, reachable = productive_and_reachable(G)
    lazy = set(G.nonterminals) - (productive & reachable)
    if lazy:
        raise PreconditionError(f"nonterminal(s) {', '.join(sorted(lazy))} are useless; remove them first", "tildeN", G)
    return {p.lhs for p in G.productions if not p.rhs.is_var and p.rhs.label == delta2}


def _variants(t, a, rhs):
    """Every tree obtained from t by replacing some subset of its a-nodes by rhs."""
    if t.is_var:
        return [t]
    kid_sets = [_variants(c, a, rhs) for c in t.children]
    out = []
    for kids in itertools.product(*kid_sets):
        out.append(Tree(t.label, kids))
        if t.label == a:
            out.append(substitute(rhs, list(kids)))
    return out


def eliminate_production(G, rho, cap=DEFAULT_ELIM_CAP):
    """Add every partial inlining of ``rho`` to each production, then drop ``rho``."""
    a = rho.lhs
    if any(u.label == a for u in iter_nodes(rho.rhs)):
        raise PreconditionError(f"{a} occurs in the right-hand side of '{rho}'", "elim", G)
    if rho not in G.productions:
        raise PreconditionError(f"'{rho}' is not a production of the grammar", "elim", G)
    out, seen = [], set()
    for prod in G.productions:
        if prod == rho:
            continue
        count = sum(1 for u in iter_nodes(prod.rhs) if u.label == a)
        if count > cap:
            raise CapacityError(f"'{prod}' has {count} occurrences of {a}, above the cap {cap}", "elim", G)
        for rhs in _variants(prod.rhs, a, rho.rhs):
            new = Production(prod.lhs, prod.rank, rhs)
            if new not in seen:
                seen.add(new)
                out.append(new)
    return G.replace(productions=out)


def elementary_preimage(t, data, omega=None):
    """The unique s with h(s) = t for the elementary h described by ``data``, or None.

    ``omega`` lists the symbols h maps to themselves; None admits any.
    """
    sigma, d1, d2, ell, k = data
    if t.is_var:
        return t
    if t.label == d2 or (omega is not None and t.label != d1 and t.label not in omega):
        return None
    kids = list(t.children)
    if t.label == d1:
        inner = kids[ell - 1] if len(kids) >= ell else None
        if inner is None or inner.is_var or inner.label != d2:
            return None
        kids = kids[: ell - 1] + list(inner.children) + kids[ell:]
        label = sigma
    else:
        label = t.label
    mapped = [elementary_preimage(c, data, omega) for c in kids]
    if any(c is None for c in mapped):
        return None
    return Tree(label, mapped)


def shape_violations(t, data, nonterminals=()):
    """Subtrees of the forbidden shapes: δ₂ under a terminal other than δ₁ or
    at the wrong place under δ₁, and δ₁ whose ℓ-th child is a terminal other than δ₂."""
    _, d1, d2, ell, _ = data
    out = []

    def walk(u, w):
        if u.is_var:
            return
        terminal = u.label not in nonterminals
        for i, c in enumerate(u.children, 1):
            if terminal and not c.is_var and c.label == d2:
                if u.label != d1:
                    out.append((w, f"{d2} below {u.label}"))
                elif i != ell:
                    out.append((w, f"{d2} at argument {i} of {d1}, expected {ell}"))
            if terminal and u.label == d1 and i == ell and not c.is_var and c.label not in nonterminals and c.label != d2:
                out.append((w, f"argument {ell} of {d1} is {c.label}"))
            walk(c, w + (i,))

    walk(t, ())
    return out


def property_p_violations(G, data):
    """Productions breaking: root ≠ δ₂, and δ₁ at w iff δ₂ at wℓ (each δ₂ paired)."""
    _, d1, d2, ell, _ = data
    out = []
    for prod in G.productions:
        rhs = prod.rhs
        if not rhs.is_var and rhs.label == d2:
            out.append((prod, f"right-hand side rooted by {d2}"))
            continue
        for u in iter_nodes(rhs):
            if u.is_var:
                continue
            kid = u.children[ell - 1] if len(u.children) >= ell else None
            paired = kid is not None and not kid.is_var and kid.label == d2
            if (u.label == d1) != paired:
                out.append((prod, f"{d1}/{d2} not directly beneath each other"))
                break
            stray = [i for i, c in enumerate(u.children, 1) if not c.is_var and c.label == d2 and (u.label != d1 or i != ell)]
            if stray:
                out.append((prod, f"{d2} not the argument {ell} of a {d1}"))
                break
    return out


def _relabel(t, data):
    sigma, d1, _, ell, _ = data
    if t.is_var:
        return t
    kids = [_relabel(c, data) for c in t.children]
    if t.label == d1:
        inner = kids[ell - 1]
        return Tree(sigma, kids[: ell - 1] + list(inner.children) + kids[ell:])
    return Tree(t.label, kids)


def _same_bounded(before, after, bound, stage):
    if bound and bounded_language(before, bound) != bounded_language(after, bound):
        raise ClosureError(f"bounded language changed (size <= {bound})", stage, after)


def inverse_elementary(G, h, inclusion_bound=8, check_bound=8, cap=DEFAULT_ELIM_CAP, certificate=None):
    """A linear monadic grammar for h⁻¹(L(G)), h elementary ordered.

    L(G) ⊆ h(T_Σ) is only checked up to ``inclusion_bound``; every stage
    before the final relabel is checked to keep the language up to
    ``check_bound``.  Stage outcomes are appended to ``certificate`` when a
    list is given.
    """
    note = certificate.append if certificate is not None else (lambda _: None)
    gg = _require_gnf(G)
    G = gg.grammar
    data = elementary_data(h)
    if data is None:
        raise ClassificationError(f"{h.name} is not elementary ordered")
    sigma, d1, d2, ell, k = data
    omega = set(h.source) - {sigma}
    if {d1, d2} & omega:
        raise ClassificationError(f"{h.name} maps {d1} or {d2} to itself as well")
    note(f"gnf: {len(gg.forms)} productions in forms G1-G3")
    for t in bounded_language(G, inclusion_bound):
        if elementary_preimage(t, data, omega) is None:
            raise InclusionError(f"{show(t)} is not in the image of {h.name}", "inclusion", G)
    note(f"inclusion: L(G) ⊆ h(T_Σ) checked up to size {inclusion_bound}")
    tilde = compute_tildeN(G, d2)
    note(f"tildeN: {{{', '.join(sorted(tilde))}}}")

    # G1: every δ₂-rooted production gets a fresh C_ρ for its chain argument.
    taken = set(G.nonterminals) | set(G.terminals) | set(h.source)
    nts = dict(G.nonterminals)
    prods = []
    for n, (prod, _) in enumerate(gg.forms, 1):
        rhs = prod.rhs
        if rhs.label != d2:
            prods.append(prod)
            continue
        kids = list(rhs.children)
        simple = [not c.is_var and c.label in nts and nts[c.label] == 0 for c in kids]
        i = simple.index(False) if False in simple else 0
        c_rho = _fresh(f"C{n}", taken)
        nts[c_rho] = prod.rank
        kids[i] = Tree(c_rho, [Tree(1)] if prod.rank else [])
        prods.append(Production(prod.lhs, prod.rank, Tree(d2, kids)))
        prods.append(Production(c_rho, prod.rank, rhs.children[i]))
    g1 = Cftg(nts, G.terminals, G.axiom, prods)
    _same_bounded(G, g1, check_bound, "G1")
    note(f"G1: {len(g1.productions)} productions")

    current = g1
    rounds = 0
    limit = 8 * len(g1.productions) + 8
    while True:
        todo = [p for p in current.productions if p.lhs in tilde]
        if not todo:
            break
        rounds += 1
        if rounds > limit:
            raise ClosureError(f"elimination did not settle after {limit} rounds", "elim", current)
        rho = todo[0]
        nxt = eliminate_production(current, rho, cap)
        _same_bounded(current, nxt, check_bound, "elim")
        current = nxt
    g2 = current
    note(f"G2: {rounds} eliminations, {len(g2.productions)} productions")
    g3 = remove_useless(g2)
    _same_bounded(g2, g3, check_bound, "G3")
    bad = property_p_violations(g3, data)
    if bad:
        prod, why = bad[0]
        raise PropertyPError(f"'{prod}': {why}", "property-P", g3)
    note(f"G3: {len(g3.productions)} productions with property (P)")

    new = [Production(p.lhs, p.rank, _relabel(p.rhs, data)) for p in g3.productions]
    out = Cftg(g3.nonterminals, h.source, g3.axiom, new)
    note(f"relabel: {d1}/{d2} pairs replaced by {sigma}")
    return out


def _is_identity(h):
    return set(h.source) == set(h.target) and all(
        h.images[s] == Tree(s, [Tree(i) for i in range(1, r + 1)]) for s, r in h.source.items()
    )


def inverse_linear_pipeline(G, h, inclusion_bound=8, check_bound=8, cap=DEFAULT_ELIM_CAP, certificate=None):
    """h⁻¹(L(G)) along h = ψ_k ∘ ⋯ ∘ ψ₁ ∘ φ; GNF is re-validated before every step."""
    note = certificate.append if certificate is not None else (lambda _: None)
    cls = classify_hom(h)
    if not cls.linear:
        raise ClassificationError(f"{h.name} is not linear")
    phi, psis = decompose_hom(h)
    note(f"decompose: φ plus {len(psis)} elementary step(s)")
    current = G
    for idx in range(len(psis), 0, -1):
        psi = psis[idx - 1]
        stage = f"ψ{idx}"
        checked = validate_gnf(current)
        if not checked.ok:
            raise GnfError(f"input of {stage} is not in Greibach normal form: {checked}", stage, current)
        current = remove_useless(current)
        try:
            current = inverse_elementary(current, psi, inclusion_bound, check_bound, cap, certificate)
        except ClosureError as exc:
            wrapped = type(exc)(f"{stage}: {exc}")
            wrapped.stage = f"{stage}/{exc.stage}" if exc.stage else stage
            wrapped.grammar = exc.grammar
            raise wrapped from None
        note(f"{stage}: done, {len(current.productions)} productions")
    if _is_identity(phi):
        note("φ: identity, skipped")
        return current
    checked = validate_gnf(current)
    if not checked.ok:
        raise GnfError(f"input of φ is not in Greibach normal form: {checked}", "φ", current)
    current = inverse_alphabetic(checked, phi)
    note(f"φ: done, {len(current.productions)} productions")
    return current
