"""Derivation trees for grammars in (D1)-(D3) form, and pumping inside them.

A node carries nonterminals A and B, a torsion-free spine tuple s with
A ⇒* B·s (witnessed by an explicit list of (D1) productions), the torsion θ
under which the node is used, and, at leaves, the chain indices i and j of
the production B -> σ(x_i, x_j, x_{p+1}).  Inner nodes use a (D2) production
B -> A₁·θ₁ ⊸ A₂·θ₂ whose (Aₖ, θₖ) are the children's.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .grammar import GrammarError
from .normalform import TORSIONFREE, StagedGrammar, StageError, production_forms
from .terms import (
    Tree,
    TreeTuple,
    compose,
    format_position,
    iter_nodes,
    parse_tree,
    power,
    show,
    spine_compose,
    substitute,
)

log = logging.getLogger(__name__)

FOUND = "found"
NOT_DERIVABLE = "not-derivable"
IMPOSSIBLE = "impossible"
BEYOND_LIMITS = "beyond-limits"


class DerivationTreeError(GrammarError):
    def __init__(self, message, position=None):
        where = f"at {format_position(position)}: " if position is not None else ""
        super().__init__(where + message)
        self.position = position


class PumpError(GrammarError):
    pass


class InvariantFailure(AssertionError):
    """A property guaranteed by construction did not hold."""


@dataclass(frozen=True)
class DerivationNode:
    A: str
    B: str
    s: TreeTuple
    theta: TreeTuple
    i: int = 0
    j: int = 0
    witness: tuple = ()


@dataclass(frozen=True)
class DerivationTree:
    node: DerivationNode
    children: tuple = ()

    def __post_init__(self):
        if len(self.children) not in (0, 2):
            raise DerivationTreeError(f"a node needs 0 or 2 children, got {len(self.children)}")

    @property
    def is_leaf(self):
        return not self.children

    def at(self, w):
        t = self
        for k in w:
            if not 1 <= k <= len(t.children):
                raise DerivationTreeError("no such position", tuple(w))
            t = t.children[k - 1]
        return t

    def positions(self):
        out = [()]
        for k, c in enumerate(self.children, 1):
            out += [(k,) + w for w in c.positions()]
        return out

    def leaves(self):
        """Leaf positions, left to right."""
        return [w for w in self.positions() if self.at(w).is_leaf]

    def replace_at(self, w, new):
        if not w:
            return new
        kids = list(self.children)
        kids[w[0] - 1] = kids[w[0] - 1].replace_at(w[1:], new)
        return DerivationTree(self.node, tuple(kids))


@dataclass(frozen=True)
class PumpingParams:
    H: int
    h_max: int


def component_word(c):
    """The Γ-word of a chain component w·x_i, and i."""
    word = []
    while not c.is_var:
        if len(c.children) != 1:
            raise DerivationTreeError(f"{show(c)} is not a chain component")
        word.append(c.label)
        c = c.children[0]
    return word, c.label


def _sg(G):
    if not isinstance(G, StagedGrammar) or G.stage != TORSIONFREE:
        raise StageError("derivation trees need a grammar at stage torsionfree")
    return G


def pumping_params(sg):
    """H = |N|·h_max, where h_max is the longest Γ-word in a (D1) tuple component."""
    sg = _sg(sg)
    h_max = 0
    for prod, form in production_forms(sg):
        if form == "D1":
            for c in prod.rhs.children[: sg.p]:
                h_max = max(h_max, len(component_word(c)[0]))
    return PumpingParams(len(sg.grammar.nonterminals) * h_max, h_max)


def _ident(p):
    return TreeTuple(p + 1, [Tree(i) for i in range(1, p + 2)])


def _d1_tuple(prod, p):
    return TreeTuple(p + 1, prod.rhs.children)


def replay_witness(A, witness, p):
    """Follow (D1) productions from A; returns (B, s) with A ⇒* B·s."""
    current, acc = A, _ident(p)
    for k, prod in enumerate(witness):
        if prod.lhs != current:
            raise DerivationTreeError(f"witness step {k + 1} rewrites {prod.lhs}, expected {current}")
        acc = compose(_d1_tuple(prod, p), acc)
        current = prod.rhs.label
    return current, acc


def _spine_theta(rhs_args, p):
    return TreeTuple(p + 1, list(rhs_args[:p]) + [Tree(p + 1)])


def dtree_violations(sg, kappa, root_theta=None):
    """Positions and reasons where κ breaks conditions (i)-(iii); empty when valid."""
    sg = _sg(sg)
    G, p = sg.grammar, sg.p
    forms = dict(production_forms(sg))
    prods = set(G.productions)
    problems = []
    expected_root = root_theta if root_theta is not None else _ident(p)

    def visit(t, w, theta):
        n = t.node
        if n.theta != theta:
            problems.append((w, f"θ is {n.theta}, the parent production gives {theta}"))
        if n.s.k != p + 1 or n.s.n != p + 1 or not n.s.is_torsion_free():
            problems.append((w, f"s = {n.s} is not a torsion-free spine tuple over {p + 1}"))
        for prod in n.witness:
            if prod not in prods or forms.get(prod) != "D1":
                problems.append((w, f"witness production '{prod}' is not a (D1) production of G"))
                return
        try:
            b, s = replay_witness(n.A, n.witness, p)
        except DerivationTreeError as exc:
            problems.append((w, str(exc)))
            return
        if b != n.B:
            problems.append((w, f"witness ends in {b}, node says {n.B}"))
        elif s != n.s:
            problems.append((w, f"witness yields {s}, node says {n.s}"))
        if t.is_leaf:
            rhs = Tree(sg.spinal.sigma, [Tree(n.i), Tree(n.j), Tree(p + 1)])
            if not any(prod.lhs == n.B and prod.rhs == rhs for prod in G.productions):
                problems.append((w, f"no production {n.B} -> {show(rhs)}"))
            return
        c1, c2 = t.children
        found = None
        for prod in G.productions_for(n.B):
            if forms.get(prod) != "D2":
                continue
            rhs = prod.rhs
            inner = rhs.children[p]
            if rhs.label == c1.node.A and inner.label == c2.node.A:
                t1, t2 = _spine_theta(rhs.children, p), _spine_theta(inner.children, p)
                if t1 == c1.node.theta and t2 == c2.node.theta:
                    found = (t1, t2)
                    break
        if found is None:
            problems.append((w, f"no (D2) production {n.B} -> {c1.node.A}·{c1.node.theta} ⊸ {c2.node.A}·{c2.node.theta}"))
            visit(c1, w + (1,), c1.node.theta)
            visit(c2, w + (2,), c2.node.theta)
            return
        visit(c1, w + (1,), found[0])
        visit(c2, w + (2,), found[1])

    visit(kappa, (), expected_root)
    return problems


def validate_dtree(sg, kappa, strict=False, root_theta=None):
    problems = dtree_violations(sg, kappa, root_theta)
    if problems and strict:
        w, msg = problems[0]
        raise DerivationTreeError(msg, w)
    return not problems


def derive_dtree(kappa, sigma="σ"):
    """The tree over Σ ∪ X_{p+1} derived by κ; no validation."""
    n = kappa.node
    p = n.s.k - 1
    if kappa.is_leaf:
        x = Tree(sigma, [Tree(n.i), Tree(n.j), Tree(p + 1)])
    else:
        t1 = derive_dtree(kappa.children[0], sigma)
        t2 = derive_dtree(kappa.children[1], sigma)
        x = spine_compose(TreeTuple(p + 1, [t1]), TreeTuple(p + 1, [t2])).components[0]
    return compose(compose(TreeTuple(p + 1, [x]), n.s), n.theta).components[0]


def derive(sg, kappa):
    """``derive_dtree`` with the grammar's own σ, after validating κ against it."""
    validate_dtree(sg, kappa, strict=True)
    return derive_dtree(kappa, sg.spinal.sigma)


def chi(sg):
    return TreeTuple(0, [Tree(sg.spinal.hash)] * (sg.p + 1))


def close(sg, t_hat):
    """t̂·χ."""
    return substitute(t_hat, chi(sg).components)


# Search.

def dform_languages(sg, max_size):
    """For each nonterminal, its trees over X_{p+1} of size <= max_size with a first-found justification."""
    sg = _sg(sg)
    G, p = sg.grammar, sg.p
    forms = production_forms(sg)
    lang = {a: {} for a in G.nonterminals}
    changed = True
    while changed:
        changed = False
        for prod, form in forms:
            target = lang[prod.lhs]
            rhs = prod.rhs
            if form == "D3":
                if rhs not in target and rhs.size() <= max_size:
                    target[rhs] = ("D3", prod)
                    changed = True
            elif form == "D1":
                for q in list(lang[rhs.label]):
                    new = substitute(q, rhs.children)
                    if new not in target and new.size() <= max_size:
                        target[new] = ("D1", prod, q)
                        changed = True
            elif form == "D2":
                inner = rhs.children[p]
                for q2 in list(lang[inner.label]):
                    if q2.size() >= max_size:
                        continue
                    low = substitute(q2, inner.children)
                    for q1 in list(lang[rhs.label]):
                        if q1.size() + q2.size() - 1 > max_size:
                            continue
                        new = substitute(q1, list(rhs.children[:p]) + [low])
                        if new not in target and new.size() <= max_size:
                            target[new] = ("D2", prod, q1, q2)
                            changed = True
    return lang


def _rebuild(sg, lang, A, theta, P):
    p = sg.p
    witness = []
    acc = _ident(p)
    current, q = A, P
    while True:
        just = lang[current][q]
        if just[0] != "D1":
            break
        prod, q_prev = just[1], just[2]
        witness.append(prod)
        acc = compose(_d1_tuple(prod, p), acc)
        current, q = prod.rhs.label, q_prev
    if just[0] == "D3":
        i, j = just[1].rhs.children[0].label, just[1].rhs.children[1].label
        return DerivationTree(DerivationNode(A, current, acc, theta, i, j, tuple(witness)))
    prod, q1, q2 = just[1], just[2], just[3]
    rhs = prod.rhs
    inner = rhs.children[p]
    th1, th2 = _spine_theta(rhs.children, p), _spine_theta(inner.children, p)
    kids = (_rebuild(sg, lang, rhs.label, th1, q1), _rebuild(sg, lang, inner.label, th2, q2))
    return DerivationTree(DerivationNode(A, current, acc, theta, 0, 0, tuple(witness)), kids)


@dataclass(frozen=True)
class DtreeSearch:
    status: str
    tree: DerivationTree = None
    t_hat: Tree = None
    reason: str = ""


def _spinal_shape(sg, t):
    """Reason ``t`` cannot be in any language over the spinal alphabet, or ''."""
    sp = sg.spinal
    for u in iter_nodes(t):
        if u.is_var or u.label not in sg.grammar.terminals:
            return f"symbol {u.label} is not a terminal of the grammar"
    node = t
    while node.label == sp.sigma:
        for c in node.children[:2]:
            while c.label in sp.gamma:
                c = c.children[0]
            if c.label != sp.hash:
                return "a chain does not end in #"
        node = node.children[2]
    if node.label != sp.hash:
        return "the spine does not end in #"
    return ""


def _spine_nodes(t, sigma):
    """Subtrees along the spine: ``out[k]`` lies below k σ-nodes."""
    out = [t]
    while out[-1].label == sigma:
        out.append(out[-1].children[2])
    return out


def _chain_len(c):
    n = 0
    while c.children:
        n += 1
        c = c.children[0]
    return n


def find_dtree(sg, t, max_sigma=None):
    """A derivation tree κ with derive(κ)·χ = t, or the reason there is none.

    The search runs top-down over goals (C, args, lo, hi): nonterminal C,
    applied to the closed chain arguments ``args`` and to the spine below
    depth ``hi``, must produce the part of t's spine from depth ``lo``.
    Arguments longer than every chain of t can never surface and are
    replaced by None.  Derivability is the least fixpoint over the goals
    reachable from the axiom, so the answer is exact.
    """
    sg = _sg(sg)
    why = _spinal_shape(sg, t)
    if why:
        return DtreeSearch(IMPOSSIBLE, reason=why)
    G, p, sigma = sg.grammar, sg.p, sg.spinal.sigma
    spine = _spine_nodes(t, sigma)
    n_sigma = len(spine) - 1
    if n_sigma == 0:
        return DtreeSearch(IMPOSSIBLE, reason="derivation trees derive at least one σ")
    if max_sigma is not None and n_sigma > max_sigma:
        return DtreeSearch(BEYOND_LIMITS, reason=f"|t|_σ = {n_sigma} exceeds {max_sigma}")
    cap = max(_chain_len(c) for node in spine[:-1] for c in node.children[:2])
    forms = production_forms(sg)
    by_lhs = {}
    for prod, form in forms:
        by_lhs.setdefault(prod.lhs, []).append((prod, form))

    def expand(goal):
        c, args, lo, hi = goal
        out = []
        for prod, form in by_lhs.get(c, []):
            rhs = prod.rhs
            if form == "D3":
                i, j = rhs.children[0].label, rhs.children[1].label
                node = spine[lo]
                if hi == lo + 1 and args[i - 1] is not None and node.children[0] == args[i - 1] and node.children[1] == args[j - 1]:
                    out.append(("D3", prod))
            elif form == "D1":
                new = tuple(_grow_component(rhs.children[k], args, k, cap) for k in range(p))
                out.append(("D1", prod, (rhs.label, new, lo, hi)))
            elif form == "D2":
                inner = rhs.children[p]
                a1 = tuple(args[c.label - 1] for c in rhs.children[:p])
                a2 = tuple(args[c.label - 1] for c in inner.children[:p])
                for mid in range(lo + 1, hi):
                    out.append(("D2", prod, (rhs.label, a1, lo, mid), (inner.label, a2, mid, hi)))
        return out

    root = (G.axiom.label, (Tree(sg.spinal.hash),) * p, 0, n_sigma)
    alternatives = {}
    todo = [root]
    while todo:
        goal = todo.pop()
        if goal in alternatives:
            continue
        alts = expand(goal)
        alternatives[goal] = alts
        for alt in alts:
            for sub in alt[2:]:
                if sub not in alternatives:
                    todo.append(sub)
    proof = {}
    changed = True
    while changed:
        changed = False
        for goal, alts in alternatives.items():
            if goal in proof:
                continue
            for alt in alts:
                if all(sub in proof for sub in alt[2:]):
                    proof[goal] = alt
                    changed = True
                    break
    if root not in proof:
        return DtreeSearch(NOT_DERIVABLE, reason="no derivation tree derives t")
    kappa = _from_proof(proof, root, _ident(p), p)
    t_hat = derive_dtree(kappa, sigma)
    if close(sg, t_hat) != t:
        raise InvariantFailure("reconstructed derivation tree does not derive t")
    return DtreeSearch(FOUND, kappa, t_hat)


def _grow_component(comp, args, k, cap):
    """Argument k after applying the (D1) component w·x_{k+1}."""
    arg = args[k]
    if arg is None:
        return None
    word, _ = component_word(comp)
    if _chain_len(arg) + len(word) > cap:
        return None
    for name in reversed(word):
        arg = Tree(name, (arg,))
    return arg


def _from_proof(proof, goal, theta, p):
    start = goal[0]
    witness = []
    acc = _ident(p)
    while True:
        alt = proof[goal]
        if alt[0] != "D1":
            break
        prod = alt[1]
        witness.append(prod)
        acc = compose(_d1_tuple(prod, p), acc)
        goal = alt[2]
    a = goal[0]
    if alt[0] == "D3":
        rhs = alt[1].rhs
        return DerivationTree(DerivationNode(start, a, acc, theta, rhs.children[0].label, rhs.children[1].label, tuple(witness)))
    prod = alt[1]
    inner = prod.rhs.children[p]
    th1, th2 = _spine_theta(prod.rhs.children, p), _spine_theta(inner.children, p)
    kids = (_from_proof(proof, alt[2], th1, p), _from_proof(proof, alt[3], th2, p))
    return DerivationTree(DerivationNode(start, a, acc, theta, 0, 0, tuple(witness)), kids)


# Pumping.

@dataclass(frozen=True)
class PumpTriple:
    position: tuple
    component: int
    v: TreeTuple
    y: TreeTuple
    z: TreeTuple
    ell: int
    k: int
    prefix: tuple
    loop: tuple
    suffix: tuple

    def witness(self, j):
        return self.prefix + self.loop * j + self.suffix


def _chain_product(prods, p):
    acc = _ident(p)
    for prod in prods:
        acc = compose(_d1_tuple(prod, p), acc)
    return acc


def find_pump(kappa, delta, i, params):
    """Split s_δ = v·y·z at the first repetition C_ℓ = C_k with growth in component i.

    Indices follow the chain C_1 = A_δ, ..., C_n = B_δ of the stored witness;
    the returned triple is checked to replay A_δ ⇒* B_δ·v·yʲ·z for j in 0..3.
    """
    delta = tuple(delta)
    node = kappa.at(delta).node
    p = node.s.k - 1
    if not 1 <= i <= p:
        raise PumpError(f"component index {i} outside 1..{p}")
    word, var = component_word(node.s[i])
    if len(word) <= params.H:
        raise PumpError(f"component {i} of s has length {len(word)}, not more than H = {params.H}")
    chain = [node.A] + [prod.rhs.label for prod in node.witness]
    n = len(chain)
    es = [_ident(p)] + [_d1_tuple(prod, p) for prod in node.witness]  # es[m-1] = e^(m)

    def growth(lo, hi):
        acc = _ident(p)
        for m in range(lo, hi + 1):
            acc = compose(es[m - 1], acc)
        return len(component_word(acc[i])[0])

    choice = None
    for k in range(2, n + 1):
        for ell in range(1, k):
            if chain[ell - 1] == chain[k - 1] and growth(ell + 1, k) > 0:
                choice = (ell, k)
                break
        if choice:
            break
    if choice is None:
        raise InvariantFailure(f"no repeated nonterminal with growth although |w| = {len(word)} > H")
    ell, k = choice
    prefix = node.witness[: ell - 1]
    loop = node.witness[ell - 1 : k - 1]
    suffix = node.witness[k - 1 :]
    z = _chain_product(prefix, p)
    y = _chain_product(loop, p)
    v = _chain_product(suffix, p)
    triple = PumpTriple(delta, i, v, y, z, ell, k, tuple(prefix), tuple(loop), tuple(suffix))
    if compose(compose(v, y), z) != node.s:
        raise InvariantFailure("s_δ ≠ v·y·z")
    if len(component_word(y[i])[0]) == 0:
        raise InvariantFailure("|π_i·y| = 0")
    tail = len(component_word(compose(y, z)[i])[0])
    if tail > params.H:
        raise InvariantFailure(f"|π_i·y·z| = {tail} exceeds H = {params.H}")
    for j in range(4):
        b, s = replay_witness(node.A, triple.witness(j), p)
        if b != node.B or s != compose(compose(v, power(y, j)), z):
            raise InvariantFailure(f"replaying the pumped witness fails for j = {j}")
    return triple


def pump(kappa, triple, j):
    """κ with s_δ replaced by v·yʲ·z and the witness rebuilt accordingly."""
    node = kappa.at(triple.position).node
    p = node.s.k - 1
    if compose(compose(triple.v, triple.y), triple.z) != node.s:
        raise PumpError("the triple does not factor s at this position")
    if j < 0:
        raise PumpError("pumping exponent must be natural")
    witness = triple.witness(j)
    b, s = replay_witness(node.A, witness, p)
    if b != node.B:
        raise PumpError("pumped witness does not end in B_δ")
    new = replace(node, s=s, witness=witness)
    return kappa.replace_at(triple.position, DerivationTree(new, kappa.at(triple.position).children))


def chain_path(kappa, chain_index, which="a"):
    """(position, component, word) for each node from the contributing leaf up to the root."""
    leaves = kappa.leaves()
    if not 1 <= chain_index <= len(leaves):
        raise IndexError(f"chain index {chain_index} outside 1..{len(leaves)}")
    delta = leaves[chain_index - 1]
    leaf = kappa.at(delta).node
    # a-chains are second arguments of σ, b-chains first ones
    c = leaf.j if which == "a" else leaf.i
    out = []
    for ell in range(len(delta) + 1):
        w = delta[: len(delta) - ell]
        node = kappa.at(w).node
        word, var = component_word(node.s[c])
        out.append((w, c, "".join(word)))
        c = node.theta[var].label
    return tuple(out)


def chain_attribution(kappa, chain_index, which="a"):
    """The leaf δ contributing the chain_index-th chain, and its words w_0, ..., w_d.

    w_ℓ is the component of s at the ℓ-th node on the path from δ up to the
    root; the chain reads w_0 ⋯ w_d top-down.
    """
    path = chain_path(kappa, chain_index, which)
    return path[0][0], tuple(word for _, _, word in path)


# Text format.

def _sig(t):
    return f"σ(x{t.node.i},x{t.node.j})" if t.is_leaf else "⊸"


def format_dtree(kappa, G=None):
    """One node per line, indented by depth."""
    index = {prod: n for n, prod in enumerate(G.productions, 1)} if G is not None else {}
    lines = []
    for w in kappa.positions():
        n = kappa.at(w).node
        wit = ", ".join(str(index.get(prod, prod)) for prod in n.witness)
        lines.append(
            "  " * len(w)
            + f"{format_position(w)}: {n.A} ⇒* {n.B} | s = {n.s} | θ = {n.theta} | ij = ({n.i},{n.j}) | witness = [{wit}]"
        )
    return "\n".join(lines) + "\n"


def parse_dtree(text, G):
    """Inverse of ``format_dtree`` for witnesses given by production index."""
    rows = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        head, _, rest = raw.strip().partition(": ")
        fields = [f.strip() for f in rest.split(" | ")]
        a, _, b = fields[0].partition(" ⇒* ")
        s = _parse_tuple(fields[1].split("=", 1)[1].strip())
        th = _parse_tuple(fields[2].split("=", 1)[1].strip())
        ij = fields[3].split("=", 1)[1].strip().strip("()").split(",")
        wit = fields[4].split("=", 1)[1].strip().strip("[]")
        witness = tuple(G.productions[int(x) - 1] for x in wit.split(",") if x.strip())
        w = () if head == "ε" else tuple(int(x) for x in head.replace("·", ".").split("."))
        rows.append((w, DerivationNode(a.strip(), b.strip(), s, th, int(ij[0]), int(ij[1]), witness)))
    nodes = dict(rows)

    def build(w):
        kids = tuple(build(w + (k,)) for k in (1, 2) if w + (k,) in nodes)
        return DerivationTree(nodes[w], kids)

    return build(())


def _parse_tuple(text):
    inner = text.strip()
    if not (inner.startswith("⟨") and inner.endswith("⟩")):
        raise DerivationTreeError(f"expected ⟨…⟩, got {text}")
    inner = inner[1:-1]
    parts, depth, cur = [], 0, ""
    for ch in inner:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    if cur.strip():
        parts.append(cur)
    comps = [parse_tree(x.strip()) for x in parts]
    return TreeTuple(len(comps), comps)
