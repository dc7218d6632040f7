"""The example grammar, its homomorphic preimage and the Dyck-word toolkit.

Trees of the preimage language have a spine of σ nodes; each σ carries a
b-chain (first argument, over {b, d}) and an a-chain (second argument,
over {a, c}).  Reading the chains gives a word over the bracket alphabet
Γ = {a, b, c, d} in which b closes a and d closes c.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .grammar import YES, Cftg, GrammarError, Production, bounded_language, derive_step, member_bounded, UNRESTRICTED
from .hom import TreeHomomorphism, apply_hom
from .terms import (
    TermError,
    Tree,
    TreeTuple,
    count_symbol,
    parse_tree,
    show,
    sort_key,
    spine_compose,
    substitute,
    tree_to_word,
    word_to_tree,
)

SIGMA = "σ"
DELTA1 = "δ1"
DELTA2 = "δ2"
HASH = "#"
GAMMA = {"a": 1, "b": 1, "c": 1, "d": 1}
SIGMA_ALPHABET = {SIGMA: 3, HASH: 0, **GAMMA}
DELTA_ALPHABET = {DELTA1: 2, DELTA2: 2, HASH: 0, **GAMMA}


class DyckError(TermError):
    pass


class DyckAlphabetError(DyckError):
    pass


class ShapeError(DyckError):
    pass


class CompletionError(DyckError):
    pass


@dataclass(frozen=True)
class PairedAlphabet:
    """Bracket pairs (opening, closing); the closing letter is a right inverse."""

    pairs: tuple = (("a", "b"), ("c", "d"))

    def __post_init__(self):
        opens = [o for o, _ in self.pairs]
        closes = [c for _, c in self.pairs]
        if len(set(opens + closes)) != 2 * len(self.pairs):
            raise DyckAlphabetError("opening and closing letters must be distinct")

    @property
    def closer(self):
        return dict(self.pairs)

    @property
    def opener(self):
        return {c: o for o, c in self.pairs}

    @property
    def letters(self):
        return {x for pair in self.pairs for x in pair}


GAMMA_PAIRS = PairedAlphabet()


def dyck_reduce(word, alphabet=GAMMA_PAIRS):
    """Cancel adjacent opening/closing pairs until none is left."""
    opener = alphabet.opener
    letters = alphabet.letters
    stack = []
    for ch in word:
        if ch not in letters:
            raise DyckAlphabetError(f"letter {ch!r} is not in the bracket alphabet")
        if stack and opener.get(ch) == stack[-1]:
            stack.pop()
        else:
            stack.append(ch)
    return "".join(stack)


def is_dyck(word, alphabet=GAMMA_PAIRS):
    return dyck_reduce(word, alphabet) == ""


def complement(word, alphabet=GAMMA_PAIRS):
    """The closing word c with word·c ≡ ε for a word of openings."""
    closer = alphabet.closer
    return "".join(closer[ch] for ch in reversed(word))


def opening_of(word, alphabet=GAMMA_PAIRS):
    """The opening word o with o·word ≡ ε for a word of closings."""
    opener = alphabet.opener
    return "".join(opener[ch] for ch in reversed(word))


# Fixtures.

def _ident(name, rank):
    return Tree(name, [Tree(i) for i in range(1, rank + 1)])


ETA_EX = parse_tree("δ1(#,A(c(#),d(#),δ2(#,#)))")
RULE1 = Production("A", 3, parse_tree("A(a(x1),b(x2),x3)"))
RULE2 = Production("A", 3, parse_tree("A(c(c(x1)),d(#),A(c(#),d(d(x2)),x3))"))
RULE3 = Production("A", 3, parse_tree("δ2(c(x1),δ1(d(x2),x3))"))


def build_fixtures():
    G = Cftg({"A": 3}, DELTA_ALPHABET, ETA_EX, [RULE1, RULE2, RULE3])
    images = {s: _ident(s, r) for s, r in SIGMA_ALPHABET.items()}
    images[SIGMA] = parse_tree("δ1(x1,δ2(x2,x3))")
    h = TreeHomomorphism(SIGMA_ALPHABET, DELTA_ALPHABET, images, name="h_ex")
    return G, h


G_EX, H_EX = build_fixtures()


# The worked derivation: (production, occurrence of A in pre-order) per step.
EXAMPLE_SCRIPT = ((1, 1), (1, 1), (2, 1), (1, 1), (1, 2), (1, 2), (3, 1), (3, 1))


def scripted_derivation(script=EXAMPLE_SCRIPT):
    """Sentential forms of G_ex along ``script``, axiom first (unrestricted steps)."""
    rules = {1: RULE1, 2: RULE2, 3: RULE3}
    forms = [ETA_EX]
    for k, occurrence in script:
        eta = forms[-1]
        spots = [w for w, lab in _preorder(eta) if lab == "A"]
        forms.append(derive_step(G_EX, eta, spots[occurrence - 1], rules[k], mode=UNRESTRICTED))
    return forms


# Words and chains.

def chain_word(t):
    """Top-down word of a monadic chain ending in #."""
    word, leaf = tree_to_word(t)
    if leaf.label != HASH:
        raise ShapeError(f"chain does not end in #: {t}")
    if any(ch not in GAMMA for ch in word):
        raise ShapeError(f"chain {t} leaves the bracket alphabet")
    return "".join(word)


def spine_nodes(t):
    """Return ([(v, u), ...], ζ) for a σ-spine tree; raises ShapeError otherwise."""
    out = []
    node = t
    while not node.is_var and node.label == SIGMA:
        v, u, rest = node.children
        out.append((chain_word(v), chain_word(u)))
        node = rest
    if not out:
        raise ShapeError(f"tree does not start with {SIGMA}")
    if not (node.is_var or node.label == HASH):
        raise ShapeError(f"spine ends in {node.label}")
    return out, node


def build_spine(pairs, end=HASH):
    """σ(v1#, u1#, ...) chained along the spine; ``end`` is # or a variable index."""
    node = Tree(end) if isinstance(end, int) else Tree(HASH)
    for v, u in reversed(pairs):
        node = Tree(SIGMA, [word_to_tree(v), word_to_tree(u), node])
    return node


def iota(t):
    """v1 u1^R v2 u2^R ... vn un^R for a σ-spine tree."""
    nodes, _ = spine_nodes(t)
    return "".join(v + u[::-1] for v, u in nodes)


def iota_prime(eta):
    """The chain word of a Δ-tree or sentential form of the example grammar.

    δ1(v#, η) contributes v, δ2(u#, η) contributes u^R and A(v#, u#, η)
    contributes v^R u; the last case is what the third production turns into.
    """
    out = []
    node = eta
    while not (node.label == HASH and not node.children):
        if node.label == DELTA1:
            out.append(chain_word(node.children[0]))
            node = node.children[1]
        elif node.label == DELTA2:
            out.append(chain_word(node.children[0])[::-1])
            node = node.children[1]
        elif node.label == "A":
            out.append(chain_word(node.children[0])[::-1] + chain_word(node.children[1]))
            node = node.children[2]
        else:
            raise ShapeError(f"unexpected {node.label} on the spine")
    return "".join(out)


def _blocks_ok(word, open_, inner):
    """word ∈ (open inner* open)+"""
    if not word:
        return False
    i = 0
    while i < len(word):
        if word[i] != open_:
            return False
        j = i + 1
        while j < len(word) and word[j] == inner:
            j += 1
        if j >= len(word) or word[j] != open_:
            return False
        i = j + 1
    return True


def a_chain_ok(word):
    return _blocks_ok(word, "c", "a")


def b_chain_ok(word):
    return _blocks_ok(word, "d", "b")


def shape_ok(t):
    """σ(#, u1#, x) ⊸ σ(v1#, u2#, x) ⊸ ... ⊸ σ(v_{n-1}#, #, #) with legal chain blocks."""
    try:
        nodes, end = spine_nodes(t)
    except ShapeError:
        return False
    if end.is_var or len(nodes) < 2:
        return False
    if nodes[0][0] != "" or nodes[-1][1] != "":
        return False
    return all(a_chain_ok(u) for _, u in nodes[:-1]) and all(b_chain_ok(v) for v, _ in nodes[1:])


def counts_ok(t):
    c, d, s = count_symbol(t, "c"), count_symbol(t, "d"), count_symbol(t, SIGMA)
    return c == d == 4 * s - 6


def sentential_counts_ok(eta):
    c, d = count_symbol(eta, "c"), count_symbol(eta, "d")
    rhs = 2 * count_symbol(eta, DELTA1) + 2 * count_symbol(eta, DELTA2) + 3 * count_symbol(eta, "A") - 6
    return c == d == rhs


def gex_steps_needed(t):
    """Length of any derivation of h_ex(t): one step per a, per extra A, per δ2 pair."""
    s = count_symbol(t, SIGMA)
    return count_symbol(t, "a") + 2 * s - 3


@dataclass
class MembershipReport:
    shape_ok: bool
    counts_ok: bool
    dyck_ok: bool
    gex_member_bounded: bool | None
    sentential_counts_ok: bool | None = None

    def all_true(self):
        return all(v is not False for v in (self.shape_ok, self.counts_ok, self.dyck_ok, self.gex_member_bounded))


def membership_props(t, check_member=True, max_forms=200000):
    if not t.is_var and t.label in (DELTA1, DELTA2, "A"):
        try:
            ok = is_dyck(iota_prime(t))
        except ShapeError:
            ok = False
        return MembershipReport(False, False, ok, None, sentential_counts_ok(t))
    shape = shape_ok(t)
    try:
        dyck = is_dyck(iota(t))
    except ShapeError:
        dyck = False
    member = None
    if check_member:
        member = False
        if set(label for label in _labels(t)) <= set(SIGMA_ALPHABET):
            steps = max(gex_steps_needed(t), 0)
            member = member_bounded(G_EX, apply_hom(H_EX, t), max_steps=steps + 1, max_forms=max_forms) == YES
    return MembershipReport(shape, counts_ok(t), dyck, member)


def _labels(t):
    yield t.label
    for c in t.children:
        yield from _labels(c)


# Chain completion.

def _find_hole(t, path=()):
    if t.is_var:
        return path
    for i, c in enumerate(t.children, 1):
        found = _find_hole(c, path + (i,))
        if found is not None:
            return found
    return None


def complete_chain(s):
    """The unique monadic u with s·u a balanced, legally shaped tree."""
    hole = _find_hole(s)
    if hole is None:
        raise CompletionError("no hole x1 in the tree")
    spine_depth = 0
    while spine_depth < len(hole) and hole[spine_depth] == 3:
        spine_depth += 1
    rest = hole[spine_depth:]
    if not rest:
        candidate = Tree(HASH)
    else:
        which = rest[0]
        if which not in (1, 2) or any(k != 1 for k in rest[1:]):
            raise CompletionError(f"hole at {hole} is not inside a chain")
        prefix_len = len(rest) - 1
        probe = _fill(s, hole, Tree(HASH))
        nodes, _ = spine_nodes(probe)
        left = "".join(v + u[::-1] for v, u in nodes[:spine_depth])
        v, u = nodes[spine_depth]
        right = "".join(v2 + u2[::-1] for v2, u2 in nodes[spine_depth + 1 :])
        if which == 2:
            prefix = u[:prefix_len]
            x = dyck_reduce(left + v)
            y = dyck_reduce(prefix[::-1] + right)
            if any(ch in "bd" for ch in x) or any(ch in "ac" for ch in y):
                raise CompletionError("surrounding chains cannot be balanced")
            need = opening_of(y)
            if not need.startswith(x) or any(ch not in "ac" for ch in need[len(x):]):
                raise CompletionError("surrounding chains force letters outside {a, c}")
            word = need[len(x):][::-1]
        else:
            prefix = v[:prefix_len]
            x = dyck_reduce(left + prefix)
            y = dyck_reduce(u[::-1] + right)
            if any(ch in "bd" for ch in x) or any(ch in "ac" for ch in y):
                raise CompletionError("surrounding chains cannot be balanced")
            need = complement(x)
            if not need.endswith(y) or any(ch not in "bd" for ch in need[: len(need) - len(y)]):
                raise CompletionError("surrounding chains force letters outside {b, d}")
            word = need[: len(need) - len(y)]
        candidate = word_to_tree(word)
    t = _fill(s, hole, candidate)
    if not (shape_ok(t) and counts_ok(t) and is_dyck(iota(t))):
        raise CompletionError("the forced completion violates the block shape or the counts")
    return candidate


def _fill(t, path, s):
    if not path:
        return s
    kids = list(t.children)
    kids[path[0] - 1] = _fill(kids[path[0] - 1], path[1:], s)
    return Tree(t.label, kids)


# The U words, chains and factorizations.

@dataclass(frozen=True)
class DyckParams:
    p: int = 1
    e: int = 1

    def __post_init__(self):
        if self.p < 1 or self.e < 1:
            raise ValueError("p and e must be positive")

    @property
    def q(self):
        return 2 * self.p

    @property
    def m(self):
        return 2 ** (self.q - 1) + 1


def alpha(i, e=1):
    return "c" + "a" * (i * e) + "c"


def beta(i, e=1):
    return "d" + "b" * (i * e) + "d"


def u_tokens(i):
    """U_i as a list of ('a', ℓ) / ('b', ℓ) tokens standing for α_ℓ / β_ℓ."""
    if i < 1:
        raise ValueError("i must be >= 1")
    toks = [("a", 1), ("b", 1)]
    for k in range(2, i + 1):
        toks = [("a", k)] + toks + toks + [("b", k)]
    return toks


def spell(tokens, e=1):
    return "".join(alpha(n, e) if kind == "a" else beta(n, e) for kind, n in tokens)


def gen_U(i, e=1):
    return spell(u_tokens(i), e)


def chain_runs(tokens):
    """Maximal runs of equal token kind, as (kind, start, stop) index triples."""
    runs = []
    start = 0
    for k in range(1, len(tokens) + 1):
        if k == len(tokens) or tokens[k][0] != tokens[start][0]:
            runs.append((tokens[start][0], start, k))
            start = k
    return runs


def chains_Z(i, e=1):
    """Z_i = ⟨u1^R, v1, ..., un^R, vn⟩ as words."""
    toks = u_tokens(i)
    out = []
    for kind, a, b in chain_runs(toks):
        w = spell(toks[a:b], e)
        out.append(w[::-1] if kind == "a" else w)
    return tuple(out)


@dataclass(frozen=True)
class Defect:
    kind: str  # "a" or "b"
    lo: int
    hi: int
    owner: int  # 1-based index into Z_i

    def word(self, e=1):
        f = alpha if self.kind == "a" else beta
        return "".join(f(n, e) for n in range(self.lo, self.hi + 1))


@dataclass
class Factorization:
    i: int
    j: int
    e: int
    P: str
    S: str
    V: tuple  # V[ℓ-1] is True when V_ℓ = U_ℓ
    W: tuple
    D: str
    defects: list = field(default_factory=list)

    def check(self):
        """Return the list of violated invariants (empty when all hold)."""
        bad = []
        if self.P + self.S != gen_U(self.i, self.e):
            bad.append("P·S ≠ U_i")
        if any(v == w for v, w in zip(self.V, self.W)):
            bad.append("V_ℓ = W_ℓ for some ℓ")
        if len(self.defects) != self.i + 1:
            bad.append(f"{len(self.defects)} defects instead of {self.i + 1}")
        chains = chains_Z(self.i, self.e)
        for d in self.defects:
            if not chains[d.owner - 1].endswith(d.word(self.e)):
                bad.append(f"defect {d} is not a suffix of its chain")
        for kind in "ab":
            seen = set()
            for d in self.defects:
                if d.kind != kind:
                    continue
                span = set(range(d.lo, d.hi + 1))
                if span & seen:
                    bad.append(f"{kind}-index in two defects")
                seen |= span
        return bad


def _flags(i, j):
    """Inductive descent: where does the cut after the j-th a-chain fall in α_i U_{i-1} U_{i-1} β_i?"""
    V, W = [], []
    while i > 1:
        half = 2 ** (i - 2)
        if j <= half:
            V.append(False)
            W.append(True)
        else:
            V.append(True)
            W.append(False)
            j -= half
        i -= 1
    V.reverse()
    W.reverse()
    return tuple(V), tuple(W)


def _p_segments(i, V):
    """P_{i,j} as segments ('alpha', ℓ) and ('U', ℓ), root first."""
    segs = [("alpha", i)]
    for ell in range(i - 1, 0, -1):
        if V[ell - 1]:
            segs.append(("U", ell))
        segs.append(("alpha", ell))
    return segs


def _s_segments(i, W):
    segs = []
    for ell in range(1, i):
        segs.append(("beta", ell))
        if W[ell - 1]:
            segs.append(("U", ell))
    segs.append(("beta", i))
    return segs


def _segments_tokens(segs):
    out = []
    for kind, ell in segs:
        if kind == "U":
            out.extend(u_tokens(ell))
        else:
            out.append(("a" if kind == "alpha" else "b", ell))
    return out


def factorize(i, j, e=1):
    if i < 1 or not 1 <= j <= 2 ** (i - 1):
        raise IndexError(f"j={j} outside [1, {2 ** (i - 1)}] for i={i}")
    toks = u_tokens(i)
    runs = chain_runs(toks)
    owner_of = {}
    for idx, (_, a, b) in enumerate(runs, 1):
        for pos in range(a, b):
            owner_of[pos] = idx
    a_runs = [r for r in runs if r[0] == "a"]
    cut = a_runs[j - 1][2]
    P_tokens, S_tokens = toks[:cut], toks[cut:]
    V, W = _flags(i, j)
    p_segs, s_segs = _p_segments(i, V), _s_segments(i, W)
    if _segments_tokens(p_segs) != P_tokens or _segments_tokens(s_segs) != S_tokens:
        raise AssertionError(f"flag descent disagrees with the cut for i={i}, j={j}")

    # D_{i,j} and the defects: maximal $-free runs of α (resp. β) segments.
    d_parts = ["$"]
    defects = []
    pos = 0
    run = []

    def close(kind):
        if run:
            owners = {owner_of[p] for _, p in run}
            if len(owners) != 1:
                raise AssertionError("a defect spans two chains")
            ells = [ell for ell, _ in run]
            defects.append(Defect(kind, min(ells), max(ells), owners.pop()))
            run.clear()

    for kind, ell in p_segs:
        if kind == "U":
            close("a")
            d_parts.append("$")
            pos += len(u_tokens(ell))
        else:
            d_parts.append(alpha(ell, e))
            run.append((ell, pos))
            pos += 1
    close("a")
    d_parts.append("$")
    for kind, ell in s_segs:
        if kind == "U":
            close("b")
            d_parts.append("$")
            pos += len(u_tokens(ell))
        else:
            d_parts.append(beta(ell, e))
            run.append((ell, pos))
            pos += 1
    close("b")
    d_parts.append("$")
    return Factorization(
        i=i, j=j, e=e,
        P=spell(P_tokens, e), S=spell(S_tokens, e),
        V=V, W=W, D="".join(d_parts), defects=defects,
    )


def describe_factorization(f):
    P = " ".join(
        (f"α{ell}" if kind == "alpha" else f"U{ell}") for kind, ell in _p_segments(f.i, f.V)
    )
    S = " ".join((f"β{ell}" if kind == "beta" else f"U{ell}") for kind, ell in _s_segments(f.i, f.W))
    return P, S


# Perturbations and the key lemma.

def _a_runs(word):
    """(start, length) of every maximal run of a's."""
    runs = []
    k = 0
    while k < len(word):
        if word[k] == "a":
            s = k
            while k < len(word) and word[k] == "a":
                k += 1
            runs.append((s, k - s))
        else:
            k += 1
    return runs


class PerturbationError(DyckError):
    """Perturbation vector length does not match the number of a-blocks."""


def apply_perturbation(word, vector):
    runs = _a_runs(word)
    if len(vector) != len(runs):
        raise PerturbationError(f"vector has {len(vector)} entries but the word has {len(runs)} a-blocks")
    out = []
    last = 0
    for (start, length), f in zip(runs, vector):
        out.append(word[last:start])
        out.append("a" * f)
        last = start + length
    out.append(word[last:])
    return "".join(out)


def p_layout(i, j, e=1):
    """P_{i,j} with, for each a-block, the segment it belongs to: ('alpha', ℓ) or ('V', ℓ)."""
    f = factorize(i, j, e)
    owners = []
    pieces = []
    for kind, ell in _p_segments(i, f.V):
        if kind == "U":
            w = gen_U(ell, e)
            owners.extend([("V", ell)] * len(_a_runs(w)))
        else:
            w = alpha(ell, e)
            owners.append(("alpha", ell))
        pieces.append((kind, ell, w))
    return f, pieces, owners


def perturb_check(i, j, vector, e=1):
    """Is the perturbed P_{i,j} congruent to P_{i,j}?"""
    f = factorize(i, j, e)
    return dyck_reduce(apply_perturbation(f.P, vector)) == dyck_reduce(f.P)


@dataclass
class KeyLemmaReport:
    i: int
    exp_bound: int
    e: int
    cases: int = 0
    congruent: int = 0
    counterexamples: list = field(default_factory=list)
    structural_failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.counterexamples and not self.structural_failures


def check_key_lemma(i, exp_bound=3, e=1, j_values=None):
    """Exhaustive check of: P' ≡ P iff every V'_ℓ ≡ ε and every α'_ℓ = α_ℓ."""
    report = KeyLemmaReport(i, exp_bound, e)
    js = j_values or range(1, 2 ** (i - 1) + 1)
    for j in js:
        f, pieces, owners = p_layout(i, j, e)
        target = dyck_reduce(f.P)
        n_blocks = len(owners)
        # Split the vector per segment so each perturbed piece can be spelled separately.
        slices = []
        k = 0
        for kind, ell, w in pieces:
            n = len(_a_runs(w))
            slices.append((kind, ell, w, k, k + n))
            k += n
        for vector in itertools.product(range(exp_bound + 1), repeat=n_blocks):
            report.cases += 1
            parts = []
            rhs = True
            for kind, ell, w, lo, hi in slices:
                piece = apply_perturbation(w, vector[lo:hi])
                parts.append(piece)
                if kind == "U":
                    red = dyck_reduce(piece)
                    if red:
                        rhs = False
                        if not (red[0] == "c" and red[-1] == "d"):
                            report.structural_failures.append((j, vector, ell, piece))
                elif vector[lo] != ell * e:
                    rhs = False
            lhs = dyck_reduce("".join(parts)) == target
            if lhs:
                report.congruent += 1
            if lhs != rhs:
                report.counterexamples.append((j, vector))
    return report


# The witness tree and the derivation of its image.

def witness_tree(params):
    """σ(#, z1#, x) ⊸ σ(z2#, z3#, x) ⊸ ... ⊸ σ(z_{2n}#, #, #) for Z_q = ⟨z1, ..., z_{2n}⟩."""
    Z = chains_Z(params.q, params.e)
    pairs = [("", Z[0])]
    for k in range(1, len(Z) - 1, 2):
        pairs.append((Z[k], Z[k + 1]))
    pairs.append((Z[-1], ""))
    return build_spine(pairs)


def parallel_apply(eta, prod):
    """Rewrite every occurrence of prod.lhs at once."""
    def walk(u):
        if u.is_var:
            return u
        kids = [walk(c) for c in u.children]
        if u.label == prod.lhs:
            return substitute(prod.rhs, kids)
        return Tree(u.label, kids)

    return walk(eta)


@dataclass
class TranscriptStep:
    production: int  # 1, 2 or 3
    positions: int
    form: Tree


def algorithm1(params):
    """Derivation of h_ex(witness) by parallel steps.

    The loop runs j = q, q-1, ..., 1 applying the first production j·e times,
    with the second production between consecutive loops; the third
    production closes every nonterminal at the end.
    """
    rules = {1: RULE1, 2: RULE2, 3: RULE3}
    eta = ETA_EX
    steps = []

    def do(k):
        nonlocal eta
        n = count_symbol(eta, "A")
        eta = parallel_apply(eta, rules[k])
        steps.append(TranscriptStep(k, n, eta))

    for j in range(params.q, 0, -1):
        for _ in range(j * params.e):
            do(1)
        if j > 1:
            do(2)
    do(3)
    return steps


def replay_transcript(steps, G=G_EX):
    """Re-derive each parallel step by single derive_step calls; returns the step count."""
    eta = G.axiom
    total = 0
    rules = {1: RULE1, 2: RULE2, 3: RULE3}
    for step in steps:
        prod = rules[step.production]
        positions = [w for w, lab in _preorder(eta) if lab == prod.lhs]
        for w in reversed(positions):
            eta = derive_step(G, eta, w, prod, mode=UNRESTRICTED)
            total += 1
        if eta != step.form:
            raise AssertionError("transcript step does not replay")
    return eta, total


def _preorder(t, w=()):
    yield w, t.label
    for i, c in enumerate(t.children, 1):
        yield from _preorder(c, w + (i,))


def build_witness(params):
    t = witness_tree(params)
    steps = algorithm1(params)
    return t, steps


def cut_witness(t, j):
    """Split a σ-spine tree after its j-th σ: t = t1 ⊸ t2, plus the chain tuples Z', Z''."""
    nodes, end = spine_nodes(t)
    if not 1 <= j < len(nodes):
        raise IndexError(f"cut index {j} outside [1, {len(nodes) - 1}]")
    t1 = build_spine(nodes[:j], end=1)
    t2 = build_spine(nodes[j:], end=end.label if end.is_var else HASH)
    flat = [nodes[0][1]]
    for v, u in nodes[1:]:
        flat.extend([v, u])
    if flat and flat[-1] == "":
        flat = flat[:-1]
    Z1 = tuple(flat[: 2 * j - 1])
    Z2 = tuple(flat[2 * j - 1 :])
    if spine_compose(TreeTuple(1, [t1]), TreeTuple(0, [t2])).components[0] != t:
        raise AssertionError("cut does not recompose")
    return t1, t2, Z1, Z2


# Pumping targets.

PUMP_FOUND = "found"
PUMP_NOT_FOUND = "not-found"


@dataclass(frozen=True)
class PumpTarget:
    defect: Defect
    sigma_index: int  # spine position of the σ carrying the defect's chain
    words: tuple  # w_0, ..., w_d from the leaf up to the root
    f: int
    ell: int
    position: tuple  # δ_ℓ
    component: int
    piece: int  # |w̃|


@dataclass(frozen=True)
class PumpTargetSearch:
    status: str
    target: PumpTarget = None
    reason: str = ""


def _defect_chain(d):
    """(σ index, chain kind) of the chain in Z numbering that owns defect d."""
    if d.kind == "a":
        return (d.owner + 1) // 2, "a"
    return d.owner // 2 + 1, "b"


def find_pumpable_defect(kappa, cut, params, H):
    """A node δ_ℓ and component whose word inside a long defect is longer than H.

    ``kappa`` derives the witness for ``params`` and splits at the root
    after ``cut`` σ-nodes.  A defect γ qualifies when its chain ends in the
    root component w with |γ| > |w| + m·e; f is the largest level with γ a
    suffix of w_f ⋯ w_d, and the piece at level ℓ is the part of w_ℓ
    inside γ.
    """
    from .derivtree import chain_path

    node_count = len(kappa.leaves())
    if not 1 <= cut < node_count:
        raise IndexError(f"cut {cut} outside [1, {node_count - 1}]")
    if kappa.is_leaf or len(kappa.at((1,)).leaves()) != cut:
        return PumpTargetSearch(PUMP_NOT_FOUND, reason=f"the root production does not split after {cut} σ-nodes")
    fac = factorize(params.q, cut, params.e)
    reasons = []
    for d in fac.defects:
        k, which = _defect_chain(d)
        path = chain_path(kappa, k, which)
        words = tuple(w for _, _, w in path)
        gamma = d.word(params.e)
        if not "".join(words).endswith(gamma):
            raise DyckError(f"chain {k} of κ does not end in the defect {gamma}")
        if len(gamma) <= len(words[-1]) + params.m * params.e:
            reasons.append(f"{d.kind}-defect {d.lo}..{d.hi}: |γ| = {len(gamma)} <= |w| + m·e")
            continue
        f = max(ell for ell in range(len(words)) if len("".join(words[ell:])) >= len(gamma))
        for ell in range(f, len(words) - 1):
            piece = len(gamma) - len("".join(words[ell + 1 :])) if ell == f else len(words[ell])
            if piece > H:
                pos, comp, _ = path[ell]
                return PumpTargetSearch(PUMP_FOUND, PumpTarget(d, k, words, f, ell, pos, comp, piece))
        reasons.append(f"{d.kind}-defect {d.lo}..{d.hi}: no piece longer than H = {H}")
    return PumpTargetSearch(PUMP_NOT_FOUND, reason="; ".join(reasons))


# The refuter.

REFUTED_BY_ENUMERATION = "refuted-by-enumeration"
REFUTED_BY_PUMPING = "refuted-by-pumping"
NO_REFUTATION = "no-refutation-within-bounds"

EXTRA = "extra"  # a member of L(G) outside L
MISSED = "missed"  # a member of L outside L(G)
PUMPED = "pumped"


@dataclass(frozen=True)
class RefuteBounds:
    max_size: int = 12  # members of L(G) checked against L
    complete_size: int = 0  # members of L checked against L(G)
    witness_p: tuple = (1,)
    e: int = None  # None: the honest H of a D-form candidate, else 1
    max_witness_size: int = 400


@dataclass(frozen=True)
class Refutation:
    verdict: str
    kind: str = ""
    reason: str = ""
    tree: Tree = None
    params: DyckParams = None
    dtree: str = ""  # κ of the pumped tree, in the derivation-tree text format
    position: tuple = ()
    component: int = 0

    def witness(self):
        out = {"verdict": self.verdict, "kind": self.kind, "reason": self.reason}
        if self.tree is not None:
            out["tree"] = show(self.tree)
        if self.params is not None:
            out["params"] = {"p": self.params.p, "e": self.params.e}
        if self.dtree:
            out["dtree"] = self.dtree
            out["position"] = list(self.position)
            out["component"] = self.component
        return out


def h_ex_preimage(s):
    """The unique t with h_ex(t) = s, or None."""
    if s.is_var:
        return None
    if s.label == DELTA1:
        x, rest = s.children
        if rest.is_var or rest.label != DELTA2:
            return None
        parts = [h_ex_preimage(c) for c in (x, *rest.children)]
        return None if None in parts else Tree(SIGMA, parts)
    if s.label == DELTA2:
        return None
    kids = [h_ex_preimage(c) for c in s.children]
    return None if None in kids else Tree(s.label, kids)


def bounded_L(max_size):
    """Members of L = h_ex⁻¹(L(G_ex)) of size <= max_size."""
    # |h_ex(t)| = |t| + |t|_σ and every σ has at least two leaf-ended chains
    image_bound = max_size + max(max_size - 1, 0) // 3
    out = set()
    for s in bounded_language(G_EX, image_bound):
        t = h_ex_preimage(s)
        if t is not None and t.size() <= max_size:
            out.add(t)
    return frozenset(out)


def _as_dform(G):
    from .normalform import TORSIONFREE, NormalFormError, StagedGrammar, stage_from_grammar

    if isinstance(G, StagedGrammar):
        return G if G.stage == TORSIONFREE else None
    try:
        return stage_from_grammar(G, TORSIONFREE)
    except (NormalFormError, GrammarError):
        return None


def _in_grammar(G, sg, t):
    if sg is not None:
        from .derivtree import FOUND, find_dtree

        return find_dtree(sg, t).status == FOUND
    return t in bounded_language(G, t.size())


def _pump_attack(sg, kappa, t, params, H):
    from .derivtree import PumpingParams, close, derive, find_pump, format_dtree, pump, validate_dtree

    targets = []
    for cut in range(1, len(kappa.leaves())):
        search = find_pumpable_defect(kappa, cut, params, H)
        if search.status == PUMP_FOUND:
            targets.append((search.target.position, search.target.component, f"defect target at cut {cut}"))
    for w in kappa.positions():
        s = kappa.at(w).node.s
        for i in range(1, s.k):
            if len(tree_to_word(s[i])[0]) > H:
                targets.append((w, i, "long component"))
    pp = PumpingParams(H, 0)
    for w, i, how in targets:
        triple = find_pump(kappa, w, i, pp)
        pumped = pump(kappa, triple, 0)
        validate_dtree(sg, pumped, strict=True)
        t0 = close(sg, derive(sg, pumped))
        try:
            ok = is_dyck(iota(t0))
        except ShapeError:
            ok = False
        if not ok:
            return Refutation(
                REFUTED_BY_PUMPING, PUMPED,
                f"{how}: pumping component {i} at {w or 'ε'} down gives ι(t′) ≢ ε",
                t0, params, format_dtree(pumped, sg.grammar), w, i,
            )
    return None


def refute_candidate(G, bounds=None):
    """Try to show L(G) ≠ L for a candidate grammar G.

    Members of L(G) up to ``max_size`` are checked against L, members of L up
    to ``complete_size`` and the witness trees against L(G).  When G is in
    (D1)-(D3) form, each witness's derivation tree is pumped down at long
    components; a pumped tree is in L(G) by construction.
    """
    from .derivtree import FOUND, find_dtree, pumping_params

    bounds = bounds or RefuteBounds()
    sg = _as_dform(G)
    grammar = sg.grammar if sg is not None else G
    lang = bounded_language(grammar, max(bounds.max_size, bounds.complete_size))
    for t in sorted((t for t in lang if t.size() <= bounds.max_size), key=sort_key):
        report = membership_props(t)
        if not report.all_true():
            return Refutation(REFUTED_BY_ENUMERATION, EXTRA, f"{show(t)} ∈ L(G) fails the membership checks", t)
    if bounds.complete_size:
        for t in sorted(bounded_L(bounds.complete_size), key=sort_key):
            if t not in lang:
                return Refutation(REFUTED_BY_ENUMERATION, MISSED, f"{show(t)} ∈ L is not generated", t)
    H = pumping_params(sg).H if sg is not None else 0
    e = bounds.e or (max(1, H) if sg is not None else 1)
    for p in bounds.witness_p:
        params = DyckParams(p, e)
        t = witness_tree(params)
        if t.size() > bounds.max_witness_size:
            continue
        if sg is None:
            if not _in_grammar(grammar, None, t):
                return Refutation(REFUTED_BY_ENUMERATION, MISSED, f"the witness for p={p}, e={e} is not generated", t, params)
            continue
        search = find_dtree(sg, t)
        if search.status != FOUND:
            return Refutation(REFUTED_BY_ENUMERATION, MISSED, f"the witness for p={p}, e={e} is not generated", t, params)
        found = _pump_attack(sg, search.tree, t, params, H)
        if found is not None:
            return found
    return Refutation(NO_REFUTATION, reason="all checks within the bounds passed")


def replay_refutation(G, r):
    """Re-check a refutation from its witness alone."""
    from .derivtree import close, derive, parse_dtree, validate_dtree

    sg = _as_dform(G)
    grammar = sg.grammar if sg is not None else G
    if r.verdict == NO_REFUTATION:
        return True
    if r.kind == EXTRA:
        return _in_grammar(grammar, sg, r.tree) and not membership_props(r.tree).all_true()
    if r.kind == MISSED:
        if r.params is not None:
            final, _ = replay_transcript(algorithm1(r.params))
            in_l = final == apply_hom(H_EX, r.tree) and witness_tree(r.params) == r.tree
        else:
            in_l = membership_props(r.tree).all_true()
        return in_l and not _in_grammar(grammar, sg, r.tree)
    if r.kind == PUMPED:
        kappa = parse_dtree(r.dtree, sg.grammar)
        validate_dtree(sg, kappa, strict=True)
        t0 = close(sg, derive(sg, kappa))
        try:
            ok = is_dyck(iota(t0))
        except ShapeError:
            ok = False
        return t0 == r.tree and not ok
    raise ValueError(f"unknown refutation kind {r.kind!r}")
