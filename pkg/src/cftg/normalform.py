"""Normal forms for grammars over a spinal alphabet {σ/3, #/0} ∪ Γ.

The pipeline is

    uniformize -> split_spine_chain -> limit_spine -> eliminate_chains
               -> remove_projections -> remove_torsions

and each step returns a ``StagedGrammar`` whose productions can be checked
syntactically against the forms allowed at that stage (``check_stage``).
Throughout, p is the common rank: chain nonterminals have rank p, spine
nonterminals rank p+1 (2p right after the split), and x_{p+1} is the spine
variable.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from .grammar import (
    Cftg,
    GrammarError,
    Production,
    bounded_language,
    make_total,
    nonterminal_tree,
    restrict_reachable,
)
from .terms import RankedAlphabet, Tree, TreeTuple, compose, lin, substitute

log = logging.getLogger(__name__)

UNIFORM = "uniform"
SPLIT = "split"
LIMITED = "limited"
CHAINFREE = "chainfree"
NOPROJ = "noproj"
TORSIONFREE = "torsionfree"
STAGES = (UNIFORM, SPLIT, LIMITED, CHAINFREE, NOPROJ, TORSIONFREE)

# Names accepted on the command line.
CLI_STAGES = {
    "uniform": UNIFORM,
    "split": SPLIT,
    "limit": LIMITED,
    "chainfree": CHAINFREE,
    "noproj": NOPROJ,
    "torsionfree": TORSIONFREE,
}


class NormalFormError(GrammarError):
    pass


class ScopeError(NormalFormError):
    """The terminal alphabet is not spinal."""


class StageError(NormalFormError):
    pass


class PreconditionError(NormalFormError):
    pass


@dataclass(frozen=True)
class SpinalAlphabet:
    sigma: str
    hash: str
    gamma: tuple

    @classmethod
    def of(cls, alphabet):
        alphabet = RankedAlphabet(alphabet)
        ternary = alphabet.of_rank(3)
        nullary = alphabet.of_rank(0)
        other = [s for s, r in alphabet.items() if r not in (0, 1, 3)]
        if len(ternary) != 1 or len(nullary) != 1 or other:
            raise ScopeError(
                f"alphabet {alphabet.declaration()} is not spinal: need exactly one ternary, "
                "one nullary and otherwise unary symbols"
            )
        return cls(ternary[0], nullary[0], tuple(alphabet.of_rank(1)))

    def alphabet(self):
        return RankedAlphabet({self.sigma: 3, self.hash: 0, **{g: 1 for g in self.gamma}})


@dataclass(frozen=True)
class StagedGrammar:
    grammar: Cftg
    stage: str
    p: int
    spinal: SpinalAlphabet
    meta: tuple = field(default=())

    def __post_init__(self):
        if self.stage not in STAGES:
            raise StageError(f"unknown stage {self.stage!r}")

    @property
    def metadata(self):
        return dict(self.meta)

    def certificate(self):
        out = {"stage": self.stage, "p": str(self.p)}
        out.update(self.metadata)
        return out

    def violations(self):
        return check_stage(self.grammar, self.stage, self.p, self.spinal)

    def check(self):
        return not self.violations()


def _require(sg, stage):
    if not isinstance(sg, StagedGrammar):
        raise StageError(f"expected a staged grammar at stage {stage}")
    if sg.stage != stage:
        raise StageError(f"expected stage {stage}, got {sg.stage}")


class _Names:
    def __init__(self, taken):
        self.taken = set(taken)

    def fresh(self, base):
        name = base
        n = 1
        while name in self.taken:
            n += 1
            name = f"{base}{n}"
        self.taken.add(name)
        return name


# Syntactic recognizers.

def _is_call(t, names, args):
    """t = B(args...) for some B in ``names``."""
    return not t.is_var and t.label in names and list(t.children) == list(args)


def _xs(lo, hi):
    return [Tree(i) for i in range(lo, hi + 1)]


def _is_chain(t, gamma, bound):
    """A Γ-word ending in a single variable x_i with i <= bound; returns i or None."""
    while not t.is_var:
        if t.label not in gamma or len(t.children) != 1:
            return None
        t = t.children[0]
    return t.label if t.label <= bound else None


def _form(prod, stage, p, spinal, chain, spine):
    """The form tag of ``prod`` at ``stage``, or None."""
    rhs = prod.rhs
    gamma = set(spinal.gamma)
    lhs = prod.lhs
    is_var = rhs.is_var
    sigma = not is_var and rhs.label == spinal.sigma
    leaf_args = sigma and all(c.is_var for c in rhs.children)

    if stage == UNIFORM:
        if is_var and rhs.label <= p:
            return "N2"
        if not is_var and rhs.label in gamma and rhs.children[0].is_var:
            return "N3"
        if leaf_args:
            return "N4"
        if not is_var and rhs.label in chain and all(_is_call(c, chain, _xs(1, p)) for c in rhs.children):
            return "N1"
        return None

    if stage == SPLIT:
        if lhs in spine:
            if is_var and p < rhs.label <= 2 * p:
                return "A2"
            if leaf_args and rhs.children[0].label <= p and rhs.children[1].label <= p and p < rhs.children[2].label <= 2 * p:
                return "A3"
            if not is_var and rhs.label in spine:
                cs, ds = rhs.children[:p], rhs.children[p:]
                if all(_is_call(c, chain, _xs(1, p)) for c in cs) and all(_is_call(d, spine, _xs(1, 2 * p)) for d in ds):
                    return "A1"
            return None
        if is_var and rhs.label <= p:
            return "A5"
        if not is_var and rhs.label in gamma and rhs.children[0].is_var:
            return "A6"
        if not is_var and rhs.label in chain and all(_is_call(c, chain, _xs(1, p)) for c in rhs.children):
            return "A4"
        return None

    if stage == LIMITED:
        if lhs in spine:
            if is_var and rhs.label == p + 1:
                return "B3"
            if leaf_args and rhs.children[0].label <= p and rhs.children[1].label <= p and rhs.children[2].label == p + 1:
                return "B4"
            if not is_var and rhs.label in spine:
                head, last = rhs.children[:p], rhs.children[p]
                if last == Tree(p + 1) and all(_is_call(c, chain, _xs(1, p)) for c in head):
                    return "B1"
                if list(head) == _xs(1, p) and _is_call(last, spine, _xs(1, p + 1)):
                    return "B2"
            return None
        if is_var and rhs.label <= p:
            return "B6"
        if not is_var and rhs.label in gamma and rhs.children[0].is_var:
            return "B7"
        if not is_var and rhs.label in chain and all(_is_call(c, chain, _xs(1, p)) for c in rhs.children):
            return "B5"
        return None

    if stage in (CHAINFREE, NOPROJ):
        if is_var and rhs.label == p + 1:
            return "C3" if stage == CHAINFREE else None
        if leaf_args and rhs.children[0].label <= p and rhs.children[1].label <= p and rhs.children[2].label == p + 1:
            return "C4"
        if not is_var and rhs.label in spine:
            head, last = rhs.children[:p], rhs.children[p]
            if last == Tree(p + 1) and all(_is_chain(c, gamma, p) for c in head):
                return "C1"
            if list(head) == _xs(1, p) and _is_call(last, spine, _xs(1, p + 1)):
                return "C2"
        return None

    if stage == TORSIONFREE:
        if leaf_args and rhs.children[0].label <= p and rhs.children[1].label <= p and rhs.children[2].label == p + 1:
            return "D3"
        if not is_var and rhs.label in spine:
            head, last = rhs.children[:p], rhs.children[p]
            if last == Tree(p + 1) and all(_is_chain(c, gamma, p) == i for i, c in enumerate(head, 1)):
                return "D1"
            if all(c.is_var and c.label <= p for c in head) and not last.is_var and last.label in spine:
                inner = last.children
                if all(c.is_var and c.label <= p for c in inner[:p]) and inner[p] == Tree(p + 1):
                    return "D2"
        return None
    raise StageError(f"unknown stage {stage!r}")


def _kinds(G, stage, p):
    """(chain nonterminals, spine nonterminals) by rank."""
    ranks = G.nonterminals
    if stage == UNIFORM:
        return set(ranks), set()
    spine_rank = 2 * p if stage == SPLIT else p + 1
    chain = {a for a, r in ranks.items() if r == p} if stage in (SPLIT, LIMITED) else set()
    spine = {a for a, r in ranks.items() if r == spine_rank}
    return chain, spine


def check_stage(G, stage, p, spinal=None):
    """Human-readable violations of the stage's production forms; empty when it conforms."""
    spinal = spinal or SpinalAlphabet.of(G.terminals)
    problems = []
    if SpinalAlphabet.of(G.terminals) != spinal:
        problems.append("terminal alphabet differs from the spinal alphabet")
    chain, spine = _kinds(G, stage, p)
    for a, r in G.nonterminals.items():
        if a not in chain and a not in spine:
            problems.append(f"nonterminal {a} has rank {r}, not allowed at stage {stage}")
    axiom_rank = {UNIFORM: p, SPLIT: 2 * p}.get(stage, p + 1)
    ax = G.axiom
    start = chain if stage == UNIFORM else spine
    if ax.is_var or ax.label not in start or list(ax.children) != [Tree(spinal.hash)] * axiom_rank:
        problems.append(f"axiom {ax} is not S(#,…,#) with {axiom_rank} arguments")
    for prod in G.productions:
        if _form(prod, stage, p, spinal, chain, spine) is None:
            problems.append(f"production '{prod}' has no allowed form at stage {stage}")
    return problems


def production_forms(sg):
    chain, spine = _kinds(sg.grammar, sg.stage, sg.p)
    return [(prod, _form(prod, sg.stage, sg.p, sg.spinal, chain, spine)) for prod in sg.grammar.productions]


# uniformize

def uniformize(G):
    """Bring G into forms (N1)-(N4) with every nonterminal of the same rank p.

    p is one more than the largest rank among the nonterminals and the
    terminals used in productions; the extra last slot carries # through every
    derivation, so # itself becomes the projection x_p.
    """
    spinal = SpinalAlphabet.of(G.terminals)
    used = set()
    for t in [G.axiom] + [prod.rhs for prod in G.productions]:
        for u in _walk(t):
            if not u.is_var and u.label in G.terminals:
                used.add(G.terminals[u.label])
    p = max([G.nonterminals.max_rank(), max(used, default=0)]) + 1
    names = _Names(set(G.nonterminals) | set(G.terminals))
    productions = []
    helpers = {}
    memo = {}

    def helper(key, base, rhs):
        if key not in helpers:
            name = names.fresh(base)
            helpers[key] = name
            productions.append(Production(name, p, rhs))
        return helpers[key]

    def proj(i):
        return helper(("proj", i), f"Pi{i}", Tree(i))

    def leaf_var(c):
        return Tree(p) if not c.is_var and c.label == spinal.hash else c

    def is_leaf(c):
        return c.is_var or c.label == spinal.hash

    def call(name):
        return Tree(name, _xs(1, p))

    def nt(c):
        if c.is_var:
            return proj(c.label)
        if c.label == spinal.hash:
            return proj(p)
        if c.label in G.nonterminals and list(c.children) == _xs(1, len(c.children)):
            return c.label
        if c not in memo:
            name = names.fresh("F")
            memo[c] = name
            productions.append(Production(name, p, rhs(c)))
        return memo[c]

    def pad(args):
        return args + [call(proj(p))] * (p - len(args))

    def rhs(eta):
        if is_leaf(eta):
            return leaf_var(eta)
        label, kids = eta.label, list(eta.children)
        if label in G.nonterminals:
            return Tree(label, pad([call(nt(c)) for c in kids]))
        if all(is_leaf(c) for c in kids):
            return Tree(label, [leaf_var(c) for c in kids])
        op = helper(("op", label), f"Op_{label}", Tree(label, _xs(1, len(kids))))
        return Tree(op, pad([call(nt(c)) for c in kids]))

    for prod in G.productions:
        productions.append(Production(prod.lhs, p, rhs(prod.rhs)))
    if not G.axiom.is_var and G.axiom.label in G.nonterminals and not G.axiom.children:
        start = G.axiom.label
    else:
        start = names.fresh("S0")
        productions.insert(0, Production(start, p, rhs(G.axiom)))
    order = [start] + [a for a in G.nonterminals if a != start]
    order += [prod.lhs for prod in productions if prod.lhs not in order]
    nts = {a: p for a in dict.fromkeys(order)}
    out = Cftg(nts, G.terminals, Tree(start, [Tree(spinal.hash)] * p), productions)
    return StagedGrammar(out, UNIFORM, p, spinal)


def _walk(t):
    stack = [t]
    while stack:
        u = stack.pop()
        yield u
        stack.extend(u.children)


# split_spine_chain (the Φ_s / Φ_c construction)

def split_spine_chain(sg):
    _require(sg, UNIFORM)
    G, p, spinal = sg.grammar, sg.p, sg.spinal
    names = _Names(set(G.terminals))
    s_name = {a: names.fresh(f"{a}_s") for a in G.nonterminals}
    c_name = {a: names.fresh(f"{a}_c") for a in G.nonterminals}

    def phi_c(t):
        if t.is_var:
            return t
        return Tree(c_name[t.label], [phi_c(c) for c in t.children])

    def phi_s(t):
        if t.is_var:
            return Tree(p + t.label)
        kids = [phi_c(c) for c in t.children] + [phi_s(c) for c in t.children]
        return Tree(s_name[t.label], kids)

    chain, _ = _kinds(G, UNIFORM, p)
    productions = []
    for prod in G.productions:
        form = _form(prod, UNIFORM, p, spinal, chain, set())
        if form in ("N1", "N2"):
            productions.append(Production(c_name[prod.lhs], p, phi_c(prod.rhs)))
            productions.append(Production(s_name[prod.lhs], 2 * p, phi_s(prod.rhs)))
        elif form == "N3":
            productions.append(Production(c_name[prod.lhs], p, prod.rhs))
        elif form == "N4":
            i, j, q = (c.label for c in prod.rhs.children)
            productions.append(Production(s_name[prod.lhs], 2 * p, Tree(spinal.sigma, [Tree(i), Tree(j), Tree(p + q)])))
        else:
            raise StageError(f"production '{prod}' is not in (N1)-(N4) form")
    nts = {}
    for a in G.nonterminals:
        nts[s_name[a]] = 2 * p
        nts[c_name[a]] = p
    axiom = Tree(s_name[G.axiom.label], [Tree(spinal.hash)] * (2 * p))
    return StagedGrammar(Cftg(nts, G.terminals, axiom, productions), SPLIT, p, spinal, sg.meta)


# limit_spine (the ⟨A, q⟩ annotation)

def limit_spine(sg):
    """At most two spine nonterminals per right-hand side.

    The unit productions S' -> ⟨S, q⟩ of the construction have no allowed
    form, so S' receives copies of the productions of every ⟨S, q⟩ instead.
    """
    _require(sg, SPLIT)
    G, p, spinal = sg.grammar, sg.p, sg.spinal
    chain, spine = _kinds(G, SPLIT, p)
    names = _Names(set(G.nonterminals) | set(G.terminals))
    ann = {}

    def at(a, q):
        if (a, q) not in ann:
            ann[(a, q)] = names.fresh(f"{a}@{q}")
        return ann[(a, q)]

    for a in G.nonterminals:
        if a in spine:
            for q in range(1, p + 1):
                at(a, q)
    aux = {}
    productions = []
    chain_prods = []
    for prod in G.productions:
        form = _form(prod, SPLIT, p, spinal, chain, spine)
        rhs = prod.rhs
        if form == "A1":
            cs = [c.label for c in rhs.children[:p]]
            ds = [d.label for d in rhs.children[p:]]
            for q in range(1, p + 1):
                for qt in range(1, p + 1):
                    b = at(rhs.label, qt)
                    key = (b, tuple(cs))
                    if key not in aux:
                        aux[key] = names.fresh(f"{b}~" + "+".join(cs))
                    d = Tree(at(ds[qt - 1], q), _xs(1, p + 1))
                    productions.append(Production(at(prod.lhs, q), p + 1, Tree(aux[key], _xs(1, p) + [d])))
        elif form == "A2":
            q = rhs.label - p
            productions.append(Production(at(prod.lhs, q), p + 1, Tree(p + 1)))
        elif form == "A3":
            i, j, k = (c.label for c in rhs.children)
            productions.append(Production(at(prod.lhs, k - p), p + 1, Tree(spinal.sigma, [Tree(i), Tree(j), Tree(p + 1)])))
        elif form in ("A4", "A5", "A6"):
            chain_prods.append(prod)
        else:
            raise StageError(f"production '{prod}' is not in (A1)-(A6) form")
    for (b, cs), name in aux.items():
        rhs = Tree(b, [Tree(c, _xs(1, p)) for c in cs] + [Tree(p + 1)])
        productions.append(Production(name, p + 1, rhs))
    start = names.fresh(f"{G.axiom.label}'")
    starts = {at(G.axiom.label, q) for q in range(1, p + 1)}
    copies = [Production(start, p + 1, prod.rhs) for prod in productions if prod.lhs in starts]
    nts = {start: p + 1}
    nts.update({name: p + 1 for name in ann.values()})
    nts.update({name: p + 1 for name in aux.values()})
    nts.update({a: p for a in chain})
    axiom = Tree(start, [Tree(spinal.hash)] * (p + 1))
    out = Cftg(nts, G.terminals, axiom, copies + productions + chain_prods)
    return StagedGrammar(restrict_reachable(out), LIMITED, p, spinal, sg.meta)


# eliminate_chains

def make_total_staged(sg):
    """Make a limited grammar total without leaving the (B1)-(B7) forms."""
    _require(sg, LIMITED)
    p = sg.p

    def dummy(name, rank):
        return Tree(p + 1) if rank == p + 1 else Tree(1)

    return StagedGrammar(make_total(sg.grammar, dummy), LIMITED, p, sg.spinal, sg.meta)


def chain_witnesses(sg):
    """A shortest-derivation tree u_E for every chain nonterminal E that derives anything.

    Chain trees are Γ-words over one variable.  Ties on derivation length go
    to the tree found first, scanning productions in order.
    """
    G, p = sg.grammar, sg.p
    chain, spine = _kinds(G, sg.stage, p)
    best = {e: {} for e in chain}  # E -> q -> (length, order, tree)
    counter = itertools.count()
    changed = True

    def offer(e, q, length, tree):
        old = best[e].get(q)
        if old is None or length < old[0]:
            best[e][q] = (length, next(counter), tree)
            return True
        return False

    while changed:
        changed = False
        for prod in G.productions:
            if prod.lhs not in chain:
                continue
            rhs = prod.rhs
            if rhs.is_var:
                changed |= offer(prod.lhs, rhs.label, 1, rhs)
            elif rhs.label in sg.spinal.gamma:
                changed |= offer(prod.lhs, rhs.children[0].label, 1, rhs)
            else:
                for r, (n1, _, t1) in list(best[rhs.label].items()):
                    arg = rhs.children[r - 1].label
                    for q, (n2, _, t2) in list(best[arg].items()):
                        args = [Tree(i) for i in range(1, p + 1)]
                        args[r - 1] = t2
                        changed |= offer(prod.lhs, q, 1 + n1 + n2, substitute(t1, args))
    out = {}
    for e in chain:
        if best[e]:
            out[e] = min(best[e].values(), key=lambda v: (v[0], v[1]))[2]
    return out


@dataclass(frozen=True)
class DeterminismReport:
    ok: bool
    bound: int
    offenders: tuple

    def __str__(self):
        if self.ok:
            return f"singleton-within-size-{self.bound}"
        return f"violated-within-size-{self.bound}:" + ",".join(self.offenders)


def check_chain_determinism_bounded(sg, max_size=8):
    """Every chain nonterminal used by a (B1) production derives at most one tree of size <= max_size."""
    G, p = sg.grammar, sg.p
    chain, spine = _kinds(G, sg.stage, p)
    used = []
    for prod in G.productions:
        if prod.lhs in spine and not prod.rhs.is_var and prod.rhs.label in spine:
            for c in prod.rhs.children[:p]:
                if not c.is_var and c.label in chain and c.label not in used:
                    used.append(c.label)
    offenders = tuple(e for e in used if len(bounded_language(G, max_size, start=nonterminal_tree(e, p))) > 1)
    return DeterminismReport(not offenders, max_size, offenders)


def eliminate_chains(sg, determinism_bound=8):
    """Replace chain nonterminals by fixed witness trees.

    Only language-preserving when every chain nonterminal used at a (B1)
    production derives a single tree; that is checked up to
    ``determinism_bound`` and recorded as ``chain_determinism`` metadata.
    """
    _require(sg, LIMITED)
    G, p, spinal = sg.grammar, sg.p, sg.spinal
    chain, spine = _kinds(G, LIMITED, p)
    witness = chain_witnesses(sg)
    report = check_chain_determinism_bounded(sg, determinism_bound)
    productions = []
    for prod in G.productions:
        if prod.lhs in chain:
            continue
        form = _form(prod, LIMITED, p, spinal, chain, spine)
        if form == "B1":
            us = []
            for c in prod.rhs.children[:p]:
                if c.label not in witness:
                    raise PreconditionError(f"chain nonterminal {c.label} derives nothing; make the grammar total first")
                us.append(witness[c.label])
            productions.append(Production(prod.lhs, p + 1, Tree(prod.rhs.label, us + [Tree(p + 1)])))
        elif form in ("B2", "B3", "B4"):
            productions.append(prod)
        else:
            raise StageError(f"production '{prod}' is not in (B1)-(B7) form")
    nts = {a: p + 1 for a in G.nonterminals if a in spine}
    meta = dict(sg.meta)
    meta["chain_determinism"] = str(report)
    out = Cftg(nts, G.terminals, G.axiom, productions)
    return StagedGrammar(out, CHAINFREE, p, spinal, tuple(meta.items()))


# remove_projections

def projecting_nonterminals(sg):
    """Q = {A : A(x_1, …, x_{p+1}) ⇒* x_{p+1}}, by fixpoint."""
    G, p = sg.grammar, sg.p
    spine = set(G.nonterminals)
    q = set()
    changed = True
    while changed:
        changed = False
        for prod in G.productions:
            if prod.lhs in q:
                continue
            rhs = prod.rhs
            hit = False
            if rhs.is_var:
                hit = rhs.label == p + 1
            elif rhs.label in spine:
                last = rhs.children[p]
                if last == Tree(p + 1):
                    hit = rhs.label in q
                else:
                    hit = rhs.label in q and last.label in q
            if hit:
                q.add(prod.lhs)
                changed = True
    return q


def remove_projections(sg):
    _require(sg, CHAINFREE)
    G, p, spinal = sg.grammar, sg.p, sg.spinal
    chain, spine = _kinds(G, CHAINFREE, p)
    q = projecting_nonterminals(sg)
    productions = []

    def add(prod):
        if prod not in productions and not (prod.rhs.label == prod.lhs and list(prod.rhs.children) == _xs(1, p + 1)):
            productions.append(prod)

    for prod in G.productions:
        form = _form(prod, CHAINFREE, p, spinal, chain, spine)
        if form == "C3":
            continue
        add(prod)
        if form == "C2":
            b, c = prod.rhs.label, prod.rhs.children[p].label
            if c in q:
                add(Production(prod.lhs, p + 1, nonterminal_tree(b, p + 1)))
            if b in q:
                add(Production(prod.lhs, p + 1, nonterminal_tree(c, p + 1)))
    meta = dict(sg.meta)
    out = Cftg(G.nonterminals, G.terminals, G.axiom, productions)
    return StagedGrammar(out, NOPROJ, p, spinal, tuple(meta.items()))


# remove_torsions

def spine_torsions(p):
    """All θ ∈ sΘ(p, p): ⟨x_{θ(1)}, …, x_{θ(p)}, x_{p+1}⟩."""
    for images in itertools.product(range(1, p + 1), repeat=p):
        yield TreeTuple(p + 1, [Tree(i) for i in images] + [Tree(p + 1)])


def _theta_key(theta):
    return "".join(f"{c.label}." for c in theta.components[:-1]).rstrip(".")


def remove_torsions(sg):
    """Annotate nonterminals with the torsion their next step will apply.

    Only annotations that can derive a terminal tree are generated: the
    identity from (C2)/(C4) productions, and from there whatever (C1)
    productions pull back through lin(θ·u).
    """
    _require(sg, NOPROJ)
    G, p, spinal = sg.grammar, sg.p, sg.spinal
    chain, spine = _kinds(G, NOPROJ, p)
    ident = TreeTuple(p + 1, _xs(1, p + 1))
    forms = {prod: _form(prod, NOPROJ, p, spinal, chain, spine) for prod in G.productions}
    if any(f is None for f in forms.values()):
        bad = next(prod for prod, f in forms.items() if f is None)
        raise StageError(f"production '{bad}' is not in (C1), (C2), (C4) form")

    # Productive annotated nonterminals (A, θ), grown to a fixpoint.
    productive = {}  # (A, θ) -> order of discovery
    def mark(pair):
        if pair not in productive:
            productive[pair] = len(productive)
            return True
        return False

    pulled = {}  # C1 production, θ -> (s, θ')
    changed = True
    while changed:
        changed = False
        annotated = {}
        for (a, th) in productive:
            annotated.setdefault(a, []).append(th)
        for prod, form in forms.items():
            if form == "C4":
                changed |= mark((prod.lhs, ident))
            elif form == "C2":
                b, c = prod.rhs.label, prod.rhs.children[p].label
                if annotated.get(b) and annotated.get(c):
                    changed |= mark((prod.lhs, ident))
            elif form == "C1":
                u = TreeTuple(p + 1, prod.rhs.children)
                for th in annotated.get(prod.rhs.label, []):
                    if (prod, th) not in pulled:
                        s, th2 = lin(compose(th, u))
                        pulled[(prod, th)] = (s, th2)
                    changed |= mark((prod.lhs, pulled[(prod, th)][1]))

    names = _Names(set(G.terminals))
    label = {}
    for pair in sorted(productive, key=productive.get):
        a, th = pair
        label[pair] = names.fresh(f"{a}^{_theta_key(th)}")
    by_nt = {}
    for (a, th) in sorted(productive, key=productive.get):
        by_nt.setdefault(a, []).append(th)

    productions = []
    for prod, form in forms.items():
        rhs = prod.rhs
        if form == "C1":
            for th in by_nt.get(rhs.label, []):
                s, th2 = pulled[(prod, th)]
                productions.append(Production(label[(prod.lhs, th2)], p + 1, Tree(label[(rhs.label, th)], s.components)))
        elif form == "C2":
            b, c = rhs.label, rhs.children[p].label
            if (prod.lhs, ident) not in label:
                continue
            for t1 in by_nt.get(b, []):
                for t2 in by_nt.get(c, []):
                    inner = Tree(label[(c, t2)], t2.components)
                    outer = Tree(label[(b, t1)], list(t1.components[:p]) + [inner])
                    productions.append(Production(label[(prod.lhs, ident)], p + 1, outer))
        else:
            productions.append(Production(label[(prod.lhs, ident)], p + 1, rhs))
    start = names.fresh(f"{G.axiom.label}'")
    for th in by_nt.get(G.axiom.label, []):
        productions.insert(0, Production(start, p + 1, nonterminal_tree(label[(G.axiom.label, th)], p + 1)))
    nts = {start: p + 1}
    nts.update({name: p + 1 for name in label.values()})
    out = Cftg(nts, G.terminals, Tree(start, [Tree(spinal.hash)] * (p + 1)), productions)
    return StagedGrammar(restrict_reachable(out), TORSIONFREE, p, spinal, sg.meta)


def normalize(G, until=TORSIONFREE, total=True):
    """Run the pipeline up to ``until``; returns every intermediate StagedGrammar."""
    steps = [uniformize(G)]
    chain = [split_spine_chain, limit_spine, eliminate_chains, remove_projections, remove_torsions]
    for stage, fn in zip(STAGES[1:], chain):
        if steps[-1].stage == until:
            break
        current = steps[-1]
        if fn is eliminate_chains and total:
            current = make_total_staged(current)
        steps.append(fn(current))
    return steps


def stage_from_grammar(G, stage, p=None, meta=None):
    """Wrap a parsed grammar as a StagedGrammar, checking its forms."""
    spinal = SpinalAlphabet.of(G.terminals)
    if p is None:
        p = _guess_p(G, stage)
    sg = StagedGrammar(G, stage, p, spinal, tuple((meta or {}).items()))
    problems = sg.violations()
    if problems:
        raise StageError(f"grammar is not at stage {stage}: {problems[0]}")
    return sg


def _guess_p(G, stage):
    top = G.nonterminals.max_rank()
    if stage == UNIFORM:
        return top
    if stage == SPLIT:
        return top // 2
    return top - 1
