"""Context-free tree grammars and their derivation engines.

Derivations rewrite one nonterminal occurrence at a time.  In OI mode only
outermost occurrences (no nonterminal strictly above them) may be rewritten.
Enumeration and membership are bounded searches that report when a limit cut
the search short.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

from .terms import (
    RankedAlphabet,
    TermError,
    Tree,
    TreeTuple,
    check_ranked,
    compose,
    iter_nodes,
    lin,
    parse_position,
    sort_key,
    substitute,
    variables,
)

log = logging.getLogger(__name__)

UNRESTRICTED = "unrestricted"
OI = "OI"


class GrammarError(TermError):
    pass


class ProductionError(GrammarError):
    pass


class ModeError(GrammarError):
    pass


class SoundnessError(GrammarError):
    """The requested transformation is not sound for this grammar."""


class ClaimError(GrammarError):
    pass


@dataclass(frozen=True)
class Production:
    lhs: str
    rank: int
    rhs: Tree

    def __str__(self):
        args = ",".join(f"x{i}" for i in range(1, self.rank + 1))
        head = f"{self.lhs}({args})" if self.rank else self.lhs
        return f"{head} -> {self.rhs}"

    def is_linear(self):
        vs = variables(self.rhs)
        return len(vs) == len(set(vs))

    def is_nondeleting(self):
        return set(variables(self.rhs)) >= set(range(1, self.rank + 1))


class Cftg:
    def __init__(self, nonterminals, terminals, axiom, productions):
        self.nonterminals = RankedAlphabet(nonterminals)
        self.terminals = RankedAlphabet(terminals)
        self.axiom = axiom
        self.productions = tuple(productions)
        clash = set(self.nonterminals) & set(self.terminals)
        if clash:
            raise GrammarError(f"symbols both terminal and nonterminal: {', '.join(sorted(clash))}")
        self.alphabet = self.nonterminals.union(self.terminals)
        check_ranked(axiom, self.alphabet, max_var=0)
        for p in self.productions:
            if p.lhs not in self.nonterminals:
                raise ProductionError(f"left-hand side {p.lhs} of '{p}' is not a nonterminal")
            if self.nonterminals[p.lhs] != p.rank:
                raise ProductionError(f"'{p}' has {p.rank} parameters but {p.lhs} has rank {self.nonterminals[p.lhs]}")
            check_ranked(p.rhs, self.alphabet, max_var=p.rank)
        self._by_lhs = {}
        for p in self.productions:
            self._by_lhs.setdefault(p.lhs, []).append(p)

    def __eq__(self, other):
        if not isinstance(other, Cftg):
            return NotImplemented
        return (
            self.nonterminals == other.nonterminals
            and self.terminals == other.terminals
            and self.axiom == other.axiom
            and self.productions == other.productions
        )

    def __hash__(self):
        return hash((self.nonterminals, self.terminals, self.axiom, self.productions))

    def __repr__(self):
        return f"Cftg(|N|={len(self.nonterminals)}, |P|={len(self.productions)}, axiom={self.axiom})"

    def productions_for(self, lhs):
        return self._by_lhs.get(lhs, [])

    def replace(self, nonterminals=None, terminals=None, axiom=None, productions=None):
        return Cftg(
            self.nonterminals if nonterminals is None else nonterminals,
            self.terminals if terminals is None else terminals,
            self.axiom if axiom is None else axiom,
            self.productions if productions is None else productions,
        )

    def is_linear(self):
        return all(p.is_linear() for p in self.productions)

    def is_nondeleting(self):
        return all(p.is_nondeleting() for p in self.productions)

    def is_simple(self):
        return self.is_linear() and self.is_nondeleting()

    def is_monadic(self):
        return self.nonterminals.max_rank() <= 1

    def is_regular(self):
        return self.nonterminals.max_rank() == 0

    def classify(self):
        return {
            "linear": self.is_linear(),
            "nondeleting": self.is_nondeleting(),
            "simple": self.is_simple(),
            "monadic": self.is_monadic(),
            "regular": self.is_regular(),
        }

    def is_terminal(self, t):
        nts = self.nonterminals
        return not any(u.label in nts for u in iter_nodes(t))


def nonterminal_tree(name, rank):
    return Tree(name, [Tree(i) for i in range(1, rank + 1)])


def derive_step(G, eta, at, prod, mode=OI):
    """Rewrite the nonterminal at position ``at`` of ``eta`` with ``prod``."""
    if mode not in (OI, UNRESTRICTED):
        raise ModeError(f"unknown derivation mode {mode!r}")
    w = parse_position(at)
    path = [eta]
    node = eta
    for i in w:
        if not 1 <= i <= len(node.children):
            raise ProductionError(f"position {w} not in sentential form")
        if mode == OI and node.label in G.nonterminals:
            raise ModeError(f"position {w} is below nonterminal {node.label}; not an OI step")
        node = node.children[i - 1]
        path.append(node)
    if node.label != prod.lhs:
        raise ProductionError(f"position {w} carries {node.label}, not {prod.lhs}")
    new = substitute(prod.rhs, node.children)
    for depth in range(len(w) - 1, -1, -1):
        parent = path[depth]
        kids = list(parent.children)
        kids[w[depth] - 1] = new
        new = Tree(parent.label, kids)
    return new


def rewrites(G, eta, mode=OI):
    """Yield every ``(position, production, successor)`` one step away from ``eta``."""
    nts = G.nonterminals

    def walk(u, w):
        if u.label in nts:
            for prod in G.productions_for(u.label):
                yield w, prod, substitute(prod.rhs, u.children)
            if mode == OI:
                return
        for i, c in enumerate(u.children):
            for pos, prod, new in walk(c, w + (i + 1,)):
                kids = list(u.children)
                kids[i] = new
                yield pos, prod, Tree(u.label, kids)

    yield from walk(eta, ())


def successors(G, eta, mode=OI):
    for _, _, new in rewrites(G, eta, mode):
        yield new


def terminal_weight(G, t):
    """Number of nodes not labelled by a nonterminal; never decreases in nondeleting grammars."""
    nts = G.nonterminals
    return sum(1 for u in iter_nodes(t) if u.label not in nts)


@dataclass
class Enumeration:
    trees: frozenset
    truncated: bool
    steps_used: int = 0
    reason: str = ""

    def sorted(self):
        return sorted(self.trees, key=sort_key)


def enumerate_bounded(G, start=None, max_steps=8, max_size=None, max_trees=None, mode=OI):
    """Terminal trees derivable from ``start`` (default: the axiom) within the limits.

    ``max_size`` filters the result; for nondeleting grammars it also prunes
    sentential forms that already carry too many terminal nodes.
    """
    if max_steps < 0 or (max_size is not None and max_size < 1) or (max_trees is not None and max_trees < 1):
        raise ValueError("limits must be positive")
    start = G.axiom if start is None else start
    prune = max_size is not None and G.is_nondeleting()
    found = set()
    frontier = {start}
    truncated = False
    reason = ""
    steps = 0
    if G.is_terminal(start):
        if max_size is None or start.size() <= max_size:
            found.add(start)
        frontier = set()
    while frontier and steps < max_steps:
        steps += 1
        nxt = set()
        for eta in frontier:
            for new in successors(G, eta, mode):
                if prune and terminal_weight(G, new) > max_size:
                    continue
                if G.is_terminal(new):
                    if max_size is None or new.size() <= max_size:
                        found.add(new)
                else:
                    nxt.add(new)
        frontier = nxt
        if max_trees is not None and len(found) >= max_trees:
            truncated = True
            reason = "max_trees"
            found = set(sorted(found, key=sort_key)[:max_trees])
            break
    if frontier and not truncated:
        truncated = True
        reason = "max_steps"
    return Enumeration(frozenset(found), truncated, steps, reason)


def language(G, max_size, max_steps=64, start=None, mode=OI):
    """Bounded language ``{t in L(G, start) : |t| <= max_size}``.

    Requires a nondeleting grammar so that size pruning makes the search
    finite; raises when ``max_steps`` was not enough to exhaust it.
    """
    if not G.is_nondeleting():
        raise SoundnessError("size-bounded languages need a nondeleting grammar")
    res = enumerate_bounded(G, start=start, max_steps=max_steps, max_size=max_size, mode=mode)
    if res.truncated:
        raise GrammarError(f"bounded language not exhausted within {max_steps} steps")
    return res.trees


def forms_bounded(G, start=None, max_steps=4, mode=OI):
    """Every sentential form reachable in at most ``max_steps`` steps, as a set."""
    start = G.axiom if start is None else start
    seen = {start}
    frontier = {start}
    for _ in range(max_steps):
        frontier = {new for eta in frontier for new in successors(G, eta, mode)} - seen
        seen |= frontier
    return seen


YES = "yes"
NO_WITHIN_LIMITS = "no-within-limits"


def member_bounded(G, t, max_steps=32, max_forms=200000, mode=OI):
    """``yes`` if a derivation of ``t`` is found within the limits, else ``no-within-limits``."""
    prune = G.is_nondeleting()
    budget = Counter(u.label for u in iter_nodes(t))
    size = t.size()
    nts = G.nonterminals

    def fits(eta):
        have = Counter(u.label for u in iter_nodes(eta) if u.label not in nts)
        return all(budget[k] >= v for k, v in have.items()) and sum(have.values()) <= size

    frontier = {G.axiom}
    seen = {G.axiom}
    if G.axiom == t:
        return YES
    for _ in range(max_steps):
        nxt = set()
        for eta in frontier:
            for new in successors(G, eta, mode):
                if new in seen:
                    continue
                if new == t:
                    return YES
                if prune and not fits(new):
                    continue
                if G.is_terminal(new):
                    continue
                seen.add(new)
                nxt.add(new)
        if not nxt or len(seen) > max_forms:
            break
        frontier = nxt
    if not prune and G.is_terminal(t) and t in bounded_language(G, t.size()):
        # deleting grammars can need arbitrarily long detours; the fixpoint is exact
        return YES
    return NO_WITHIN_LIMITS


def productive_and_reachable(G):
    nts = G.nonterminals
    productive = set()
    changed = True
    while changed:
        changed = False
        for p in G.productions:
            if p.lhs in productive:
                continue
            if all(u.label not in nts or u.label in productive for u in iter_nodes(p.rhs)):
                productive.add(p.lhs)
                changed = True
    reachable = {u.label for u in iter_nodes(G.axiom) if u.label in nts}
    todo = list(reachable)
    while todo:
        a = todo.pop()
        for p in G.productions_for(a):
            for u in iter_nodes(p.rhs):
                if u.label in nts and u.label not in reachable:
                    reachable.add(u.label)
                    todo.append(u.label)
    return productive, reachable


def is_total(G):
    productive, _ = productive_and_reachable(G)
    return productive == set(G.nonterminals)


def remove_useless(G):
    """Drop productions using non-productive nonterminals, then unreachable ones."""
    if not G.is_nondeleting():
        raise SoundnessError("remove_useless is only sound for nondeleting grammars")
    nts = G.nonterminals
    productive, _ = productive_and_reachable(G)

    def uses_only_productive(t):
        return all(u.label not in nts or u.label in productive for u in iter_nodes(t))

    kept = [p for p in G.productions if p.lhs in productive and uses_only_productive(p.rhs)]
    if not uses_only_productive(G.axiom):
        kept = []
    G1 = G.replace(productions=kept)
    _, reachable = productive_and_reachable(G1)
    kept = [p for p in kept if p.lhs in reachable]
    names = {a: r for a, r in nts.items() if a in reachable or a in {u.label for u in iter_nodes(G.axiom)}}
    return Cftg(names, G.terminals, G.axiom, kept)


# Tuples of sentential forms, used by the technical-lemma verifier.

def tuple_successors(G, u, mode=OI):
    comps = u.components
    for i, c in enumerate(comps):
        for new in successors(G, c, mode):
            yield TreeTuple(u.k, comps[:i] + (new,) + comps[i + 1 :])


def reach_exact(G, u, n, mode=OI):
    """Tuples reachable from ``u`` in exactly ``n`` steps."""
    level = {u}
    for _ in range(n):
        level = {v for w in level for v in tuple_successors(G, w, mode)}
    return level


def is_terminal_tuple(G, u):
    return all(G.is_terminal(c) for c in u.components)


def match_linear(pattern, t, out):
    """Match a linear pattern against ``t``, filling ``out[i]`` for each x_i."""
    if pattern.is_var:
        out[pattern.label] = t
        return True
    if pattern.label != t.label or len(pattern.children) != len(t.children):
        return False
    return all(match_linear(p, c, out) for p, c in zip(pattern.children, t.children))


def verify_oi_decomposition(G, eta, kappa, t, n):
    """Check the split of an OI derivation η·κ ⇒ⁿ t into η ⇒ᵏ ũ·θ and θ·κ ⇒ᵐ v.

    Returns the witness (k, ũ, θ, v) when found, or None.  Raises ClaimError
    if η·κ ⇒ⁿ t itself does not hold.
    """
    if t not in reach_exact(G, compose(eta, kappa), n):
        raise ClaimError(f"η·κ does not derive {t} in exactly {n} OI steps")
    for k in range(n + 1):
        for tau in reach_exact(G, eta, k):
            if not is_terminal_tuple(G, tau):
                continue
            u_tilde, theta = lin(tau)
            if len(u_tilde) != len(t):
                continue
            binding = {}
            if not all(match_linear(p, c, binding) for p, c in zip(u_tilde.components, t.components)):
                continue
            v = TreeTuple(t.k, [binding[i] for i in range(1, u_tilde.k + 1)])
            if compose(u_tilde, v) != t:
                continue
            if v in reach_exact(G, compose(theta, kappa), n - k):
                return k, u_tilde, theta, v
    return None


def random_oi_derivation(G, start, rng, max_steps):
    """Follow random OI steps from a tuple until it is terminal or the step budget ends."""
    current = start
    steps = 0
    while steps < max_steps and not is_terminal_tuple(G, current):
        options = list(tuple_successors(G, current))
        if not options:
            break
        current = rng.choice(options)
        steps += 1
    return current, steps


# Exact bounded languages by least fixpoint.

def _by_size(trees):
    groups = {}
    for t in trees:
        groups.setdefault(t.size(), []).append(t)
    return groups


def _combine(label, child_sets, limit):
    partial = {1: [()]}
    rest = len(child_sets)
    for options in child_sets:
        rest -= 1
        groups = _by_size(options)
        nxt = {}
        for n, kid_lists in partial.items():
            for size, trees in groups.items():
                if n + size + rest > limit:
                    continue
                bucket = nxt.setdefault(n + size, [])
                bucket.extend(kids + (c,) for kids in kid_lists for c in trees)
        if not nxt:
            return set()
        partial = nxt
    return {Tree(label, kids) for kid_lists in partial.values() for kids in kid_lists}


def _oi_substitute(pattern, arg_sets, limit):
    """Every way of replacing each occurrence of x_i independently by a member of arg_sets[i-1]."""
    if pattern.is_var:
        return {t for t in arg_sets[pattern.label - 1] if t.size() <= limit}
    if not arg_sets or not pattern.children or not variables(pattern):
        return {pattern} if pattern.size() <= limit else set()
    kids = []
    for c in pattern.children:
        options = _oi_substitute(c, arg_sets, limit - 1)
        if not options:
            return set()
        kids.append(options)
    return _combine(pattern.label, kids, limit)


def _evaluate(G, t, lang, limit):
    if limit < 1:
        return set()
    if t.is_var or not t.children and t.label not in G.nonterminals:
        return {t}
    kids = [_evaluate(G, c, lang, limit) for c in t.children]
    if t.label not in G.nonterminals:
        if any(not k for k in kids):
            return set()
        return _combine(t.label, kids, limit)
    out = set()
    for pattern in lang[t.label]:
        out |= _oi_substitute(pattern, kids, limit)
    return out


def nonterminal_languages(G, max_size):
    """Map each nonterminal A to the trees over X_rank(A) of size <= max_size it derives."""
    lang = {a: set() for a in G.nonterminals}
    uses = {id(p): {u.label for u in iter_nodes(p.rhs) if u.label in G.nonterminals} for p in G.productions}
    dirty = set(G.nonterminals)
    first = True
    while dirty:
        grown = set()
        for a in G.nonterminals:
            for p in G.productions_for(a):
                # a production needs re-evaluation only when a language it reads has grown
                if not first and not uses[id(p)] & dirty:
                    continue
                new = _evaluate(G, p.rhs, lang, max_size) - lang[a]
                if new:
                    lang[a] |= new
                    grown.add(a)
        dirty = grown
        first = False
    return {a: frozenset(ts) for a, ts in lang.items()}


def bounded_language(G, max_size, start=None):
    """Exactly the terminal trees of size <= max_size derivable from ``start``.

    Unlike ``enumerate_bounded`` this needs no step limit and is exact for
    deleting and copying grammars: substituting trees for variables never
    shrinks a tree, so every intermediate result can be cut at ``max_size``.
    """
    start = G.axiom if start is None else start
    lang = nonterminal_languages(G, max_size)
    return frozenset(_evaluate(G, start, lang, max_size))


def restrict_reachable(G):
    """Drop nonterminals (and their productions) not reachable from the axiom."""
    _, reachable = productive_and_reachable(G)
    names = {a: r for a, r in G.nonterminals.items() if a in reachable}
    return Cftg(names, G.terminals, G.axiom, [p for p in G.productions if p.lhs in reachable])


def _default_dummy(G):
    nullary = G.terminals.of_rank(0)
    if not nullary:
        raise GrammarError("make_total needs a nullary terminal or an explicit dummy")
    leaf = Tree(nullary[0])
    return lambda name, rank: leaf


def make_total(G, dummy=None):
    """An equivalent grammar in which every reachable nonterminal derives something.

    Each nonterminal A is paired with a set α of forbidden parameters; the pair
    derives the trees of L(G, A) avoiding x_i for i in α.  An argument that
    derives nothing puts its position into α at the call site, so such
    arguments are only ever deleted.  Pairs deriving nothing receive the
    production ``dummy(name, rank)``; they occur only inside deleted arguments.
    The pair (A, ∅) keeps the name A.
    """
    dummy = dummy or _default_dummy(G)
    nts = G.nonterminals
    productive = set()
    taken = set(nts) | set(G.terminals)
    names = {}

    def name_of(pair):
        a, alpha = pair
        if not alpha:
            return a
        if pair not in names:
            base = f"{a}~{'.'.join(str(i) for i in sorted(alpha))}"
            name = base
            n = 1
            while name in taken:
                n += 1
                name = f"{base}'{n}"
            taken.add(name)
            names[pair] = name
        return names[pair]

    def annotate(t, alpha, found):
        if t.is_var:
            return t, t.label in alpha
        kids = [annotate(c, alpha, found) for c in t.children]
        if t.label not in nts:
            return Tree(t.label, [k for k, _ in kids]), any(e for _, e in kids)
        beta = frozenset(i for i, (_, e) in enumerate(kids, 1) if e)
        pair = (t.label, beta)
        found.add(pair)
        return Tree(pair, [k for k, _ in kids]), pair not in productive

    discovered = set()
    annotate(G.axiom, frozenset(), discovered)
    changed = True
    while changed:
        changed = False
        for pair in sorted(discovered, key=repr):
            found = set()
            for p in G.productions_for(pair[0]):
                _, empty = annotate(p.rhs, pair[1], found)
                if not empty and pair not in productive:
                    productive.add(pair)
                    changed = True
            if found - discovered:
                discovered |= found
                changed = True

    def rename(t):
        if t.is_var:
            return t
        label = name_of(t.label) if isinstance(t.label, tuple) else t.label
        return Tree(label, [rename(c) for c in t.children])

    axiom, empty = annotate(G.axiom, frozenset(), set())
    if empty:
        raise GrammarError("the language is empty, so no equivalent total grammar exists")
    todo = []
    seen = set()

    def visit(t):
        for u in iter_nodes(t):
            if isinstance(u.label, tuple) and u.label not in seen:
                seen.add(u.label)
                todo.append(u.label)

    visit(axiom)
    productions = []
    ranks = {}
    while todo:
        pair = todo.pop(0)
        a, alpha = pair
        rank = nts[a]
        ranks[name_of(pair)] = rank
        if pair not in productive:
            productions.append(Production(name_of(pair), rank, dummy(name_of(pair), rank)))
            continue
        for p in G.productions_for(a):
            rhs, empty = annotate(p.rhs, alpha, set())
            if empty:
                continue
            visit(rhs)
            productions.append(Production(name_of(pair), rank, rename(rhs)))
    productions.sort(key=lambda p: list(ranks).index(p.lhs))
    return Cftg(ranks, G.terminals, rename(axiom), productions)
