"""Ranked trees, tuples of trees and the magmoid operations on them.

A tree is either a symbol applied to children or a variable ``x_i`` (i >= 1).
Tuples of trees compose by simultaneous substitution; torsions are tuples of
bare variables and spine tuples carry the distinguished last variable.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from collections.abc import Mapping


class TermError(Exception):
    """Base class for errors raised by the term layer."""


class DimensionError(TermError):
    pass


class VariableIndexError(TermError):
    """Variable index outside the admissible range."""


class PositionError(TermError):
    pass


class RankError(TermError):
    pass


class ParseError(TermError):
    def __init__(self, message, text=None, offset=None):
        if text is not None and offset is not None:
            message = f"{message} at column {offset + 1}: {text!r}"
        super().__init__(message)
        self.offset = offset


class RankedAlphabet(Mapping):
    """Immutable map from symbol name to rank."""

    __slots__ = ("_ranks",)

    def __init__(self, entries=()):
        ranks = dict(entries)
        for name, rank in ranks.items():
            if not isinstance(name, str) or not name:
                raise RankError(f"bad symbol name {name!r}")
            if not isinstance(rank, int) or rank < 0:
                raise RankError(f"symbol {name} has invalid rank {rank!r}")
        self._ranks = ranks

    def __getitem__(self, name):
        return self._ranks[name]

    def __iter__(self):
        return iter(self._ranks)

    def __len__(self):
        return len(self._ranks)

    def __hash__(self):
        return hash(frozenset(self._ranks.items()))

    def __eq__(self, other):
        if isinstance(other, RankedAlphabet):
            return self._ranks == other._ranks
        return NotImplemented

    def __repr__(self):
        return f"RankedAlphabet({self.declaration()!r})"

    def of_rank(self, rank):
        return [name for name, r in self._ranks.items() if r == rank]

    def max_rank(self):
        return max(self._ranks.values(), default=0)

    def union(self, other):
        merged = dict(self._ranks)
        for name, rank in dict(other).items():
            if merged.get(name, rank) != rank:
                raise RankError(f"symbol {name} declared with ranks {merged[name]} and {rank}")
            merged[name] = rank
        return RankedAlphabet(merged)

    def declaration(self):
        return " ".join(f"{name}/{rank}" for name, rank in self._ranks.items())

    @classmethod
    def parse(cls, text):
        entries = {}
        for token in text.split():
            name, sep, rank = token.rpartition("/")
            if not sep or not name or not rank.isdigit():
                raise ParseError("malformed rank declaration", token, 0)
            if name in entries:
                raise RankError(f"symbol {name} declared twice")
            entries[name] = int(rank)
        return cls(entries)


class Tree:
    """Immutable ranked tree.  ``label`` is a symbol name or an int variable index."""

    __slots__ = ("label", "children", "_hash", "_size")

    def __init__(self, label, children=()):
        children = tuple(children)
        if isinstance(label, int):
            if label < 1:
                raise VariableIndexError(f"variable index must be >= 1, got {label}")
            if children:
                raise RankError("a variable node has no children")
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_size", None)

    def __setattr__(self, name, value):
        raise AttributeError("Tree is immutable")

    def __reduce__(self):
        return (Tree, (self.label, self.children))

    @property
    def is_var(self):
        return isinstance(self.label, int)

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((self.label, self.children))
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Tree):
            return NotImplemented
        if hash(self) != hash(other):
            return False
        return self.label == other.label and self.children == other.children

    def __lt__(self, other):
        return sort_key(self) < sort_key(other)

    def __repr__(self):
        return f"Tree({str(self)!r})"

    def __str__(self):
        return show(self)

    def size(self):
        """Number of nodes, variables included."""
        s = self._size
        if s is None:
            s = 1 + sum(c.size() for c in self.children)
            object.__setattr__(self, "_size", s)
        return s


def var(i):
    return Tree(i)


def sym(name, *children):
    return Tree(name, children)


def sort_key(t):
    """Total order on trees used for deterministic output."""
    return (t.size(), show(t))


def show(t):
    parts = []

    def walk(u):
        if u.is_var:
            parts.append(f"x{u.label}")
            return
        parts.append(u.label)
        if u.children:
            parts.append("(")
            for n, c in enumerate(u.children):
                if n:
                    parts.append(",")
                walk(c)
            parts.append(")")

    walk(t)
    return "".join(parts)


_VAR_RE = re.compile(r"x([1-9][0-9]*)\Z")
_DELIMS = "(),"


def _tokenize(text):
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _DELIMS:
            yield ch, i
            i += 1
            continue
        j = i
        while j < n and text[j] not in _DELIMS and not text[j].isspace():
            j += 1
        yield text[i:j], i
        i = j


def parse_tree(text, alphabet=None):
    """Parse ``name(arg,...)`` syntax.  Ranks are checked when ``alphabet`` is given."""
    tokens = list(_tokenize(text))
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, len(text))

    def expect(tok):
        nonlocal pos
        got, off = peek()
        if got != tok:
            raise ParseError(f"expected {tok!r}", text, off)
        pos += 1

    def node():
        nonlocal pos
        tok, off = peek()
        if tok is None or tok in _DELIMS:
            raise ParseError("expected a symbol or variable", text, off)
        pos += 1
        m = _VAR_RE.match(tok)
        if m:
            return Tree(int(m.group(1)))
        children = []
        if peek()[0] == "(":
            pos += 1
            children.append(node())
            while peek()[0] == ",":
                pos += 1
                children.append(node())
            expect(")")
        if alphabet is not None:
            if tok not in alphabet:
                raise UnknownSymbol(tok)
            if alphabet[tok] != len(children):
                raise RankError(f"symbol {tok} has rank {alphabet[tok]} but {len(children)} children")
        return Tree(tok, children)

    t = node()
    tok, off = peek()
    if tok is not None:
        raise ParseError("trailing input", text, off)
    return t


class UnknownSymbol(TermError):
    def __init__(self, name):
        super().__init__(f"unknown symbol {name}")
        self.symbol = name


def check_ranked(t, alphabet, max_var=None):
    """Raise unless every symbol of ``t`` is in ``alphabet`` with matching arity."""
    for u in iter_nodes(t):
        if u.is_var:
            if max_var is not None and u.label > max_var:
                raise VariableIndexError(f"variable x{u.label} exceeds bound {max_var}")
            continue
        if u.label not in alphabet:
            raise UnknownSymbol(u.label)
        if alphabet[u.label] != len(u.children):
            raise RankError(f"symbol {u.label} has rank {alphabet[u.label]} but {len(u.children)} children")


def iter_nodes(t):
    stack = [t]
    while stack:
        u = stack.pop()
        yield u
        stack.extend(reversed(u.children))


def positions(t):
    """All Gorn addresses of ``t`` in pre-order; the root is ``()``."""
    out = []

    def walk(u, w):
        out.append(w)
        for i, c in enumerate(u.children, 1):
            walk(c, w + (i,))

    walk(t, ())
    return out


def parse_position(w):
    if isinstance(w, str):
        w = w.strip()
        if w in ("", "ε", "eps"):
            return ()
        return tuple(int(part) for part in re.split(r"[·.]", w))
    return tuple(w)


def subtree(t, w):
    for i in parse_position(w):
        if not 1 <= i <= len(t.children):
            raise PositionError(f"position {format_position(w)} not in tree")
        t = t.children[i - 1]
    return t


def navigate(t, w):
    """Return ``(t(w), t|_w)``."""
    u = subtree(t, w)
    return u.label, u


def replace(t, w, s):
    """Return ``t[s]_w``."""
    w = parse_position(w)
    if not w:
        return s
    i = w[0]
    if not 1 <= i <= len(t.children):
        raise PositionError(f"position {format_position(w)} not in tree")
    kids = list(t.children)
    kids[i - 1] = replace(kids[i - 1], w[1:], s)
    return Tree(t.label, kids)


def format_position(w):
    w = parse_position(w)
    return "·".join(map(str, w)) if w else "ε"


def count_symbol(t, name):
    return sum(1 for u in iter_nodes(t) if u.label == name)


def symbol_counts(t):
    return Counter(u.label for u in iter_nodes(t) if not u.is_var)


def variables(t):
    """Variable indices of ``t`` in left-to-right order, with repetitions."""
    return [u.label for u in iter_nodes(t) if u.is_var]


def max_var(t):
    return max(variables(t), default=0)


def substitute(t, args):
    """Simultaneous substitution ``t[s_1, ..., s_n]``."""
    args = tuple(args)
    n = len(args)

    def walk(u):
        if u.is_var:
            if u.label > n:
                raise VariableIndexError(f"variable x{u.label} has no substitute (only {n} given)")
            return args[u.label - 1]
        if not u.children:
            return u
        return Tree(u.label, [walk(c) for c in u.children])

    return walk(t)


def rename_symbols(t, mapping):
    def walk(u):
        if u.is_var:
            return u
        return Tree(mapping.get(u.label, u.label), [walk(c) for c in u.children])

    return walk(t)


class TreeTuple:
    """Element of T(Σ)ⁿ_k: ``n`` trees over the variables x_1..x_k."""

    __slots__ = ("k", "components")

    def __init__(self, k, components):
        components = tuple(components)
        if k < 0:
            raise DimensionError("negative variable bound")
        for c in components:
            m = max_var(c)
            if m > k:
                raise VariableIndexError(f"component {c} uses x{m} beyond bound {k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "components", components)

    def __setattr__(self, name, value):
        raise AttributeError("TreeTuple is immutable")

    @property
    def n(self):
        return len(self.components)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        """1-based component access, matching π_i."""
        if not 1 <= i <= len(self.components):
            raise DimensionError(f"component {i} out of range 1..{len(self.components)}")
        return self.components[i - 1]

    def __eq__(self, other):
        if not isinstance(other, TreeTuple):
            return NotImplemented
        return self.k == other.k and self.components == other.components

    def __hash__(self):
        return hash((self.k, self.components))

    def __repr__(self):
        return f"TreeTuple({self.k}, {str(self)})"

    def __str__(self):
        return "⟨" + ", ".join(show(c) for c in self.components) + "⟩"

    def __mul__(self, other):
        return compose(self, other)

    def is_torsion(self):
        return all(c.is_var for c in self.components)

    def is_torsion_free(self):
        return [v for c in self.components for v in variables(c)] == list(range(1, self.k + 1))

    def is_linear(self):
        vs = [v for c in self.components for v in variables(c)]
        return len(vs) == len(set(vs))

    def images(self):
        """The map [n] -> [k] of a torsion."""
        if not self.is_torsion():
            raise DimensionError(f"{self} is not a torsion")
        return tuple(c.label for c in self.components)


def tup(k, *components):
    return TreeTuple(k, components)


def torsion(k, images):
    """The torsion ⟨x_{θ(1)}, ..., x_{θ(n)}⟩ over bound k."""
    return TreeTuple(k, [Tree(i) for i in images])


def identity(n):
    return torsion(n, range(1, n + 1))


def projection(i, n):
    """π_i as a 1-tuple over bound n."""
    if not 1 <= i <= n:
        raise DimensionError(f"projection π_{i} needs 1 <= i <= {n}")
    return torsion(n, [i])


def compose(u, v):
    """u · v = ⟨u_1[v_1..v_ℓ], ..., u_n[v_1..v_ℓ]⟩."""
    if u.k != v.n:
        raise DimensionError(f"cannot compose tuple over {u.k} variables with a {v.n}-tuple")
    return TreeTuple(v.k, [substitute(c, v.components) for c in u.components])


def tuple_join(*parts):
    """Tupling [u, v, ...] of tuples sharing a variable bound."""
    if not parts:
        raise DimensionError("tupling needs at least one tuple")
    k = parts[0].k
    if any(p.k != k for p in parts):
        raise DimensionError("tupling needs equal variable bounds")
    return TreeTuple(k, [c for p in parts for c in p.components])


def power(u, j):
    if u.n != u.k:
        raise DimensionError("powers need a square tuple")
    result = identity(u.n)
    for _ in range(j):
        result = compose(u, result)
    return result


def spine_compose(s, t):
    """s ⊸ t = s · [Id_n, t] where s has bound n+1.

    Id_n is read over bound max(n, k) so that t may use x_{n+1} itself, as
    happens when spine trees over p+1 variables are chained.
    """
    if len(t.components) != 1:
        raise DimensionError("spine composition needs a 1-tuple on the right")
    n = s.k - 1
    if n < 0:
        raise DimensionError("left operand of ⊸ needs at least one variable")
    bound = max(n, t.k)
    ident = TreeTuple(bound, [Tree(i) for i in range(1, n + 1)])
    return compose(s, tuple_join(ident, TreeTuple(bound, t.components)))


def spine_chain(*parts):
    """Left-nested ⊸ is associative here; fold from the right."""
    result = parts[-1]
    for s in reversed(parts[:-1]):
        result = spine_compose(s, result)
    return result


def lin(u):
    """Split ``u`` into a torsion-free tuple and a torsion with u = v · θ."""
    counter = 0
    images = []

    def walk(t):
        nonlocal counter
        if t.is_var:
            counter += 1
            images.append(t.label)
            return Tree(counter)
        if not t.children:
            return t
        return Tree(t.label, [walk(c) for c in t.children])

    comps = [walk(c) for c in u.components]
    return TreeTuple(counter, comps), torsion(u.k, images)


def spine_tuple(k, components):
    """Build [components, x_{k+1}] ∈ sTT(Σ)ⁿ_k."""
    comps = list(components)
    return TreeTuple(k + 1, comps + [Tree(k + 1)])


def is_spine_tuple(u):
    if not u.components or u.k < 1:
        return False
    last = u.components[-1]
    if not (last.is_var and last.label == u.k):
        return False
    return all(u.k not in variables(c) for c in u.components[:-1])


def is_spine_torsion(u):
    return is_spine_tuple(u) and u.is_torsion()


def spine_identity(n):
    """Id_{n+1} viewed as the trivial spine tuple."""
    return identity(n + 1)


# Monadic trees as words.

def word_to_tree(word, leaf="#"):
    """``word_to_tree("cac")`` is c(a(c(#))); ``leaf`` may be a Tree."""
    t = leaf if isinstance(leaf, Tree) else Tree(leaf)
    for name in reversed(list(word)):
        t = Tree(name, (t,))
    return t


def tree_to_word(t):
    """Split a monadic tree into its unary prefix (top-down) and the bottom node."""
    out = []
    while len(t.children) == 1:
        out.append(t.label)
        t = t.children[0]
    if t.children:
        raise RankError(f"{t.label} is not unary")
    return out, t


def iter_words(t):
    """Yield the unary symbols read top-down along a monadic tree."""
    word, _ = tree_to_word(t)
    return iter(word)


def compress_word(word):
    """Exponent notation: "caac" -> "c a^2 c"."""
    word = list(word)
    out = []
    i = 0
    while i < len(word):
        j = i
        while j < len(word) and word[j] == word[i]:
            j += 1
        n = j - i
        out.append(word[i] if n == 1 else f"{word[i]}^{n}")
        i = j
    return " ".join(out)


def decompress_word(text):
    out = []
    for token in text.split():
        name, sep, exp = token.partition("^")
        out.extend([name] * (int(exp) if sep else 1))
    return "".join(out)


def enumerate_trees(alphabet, max_size, leaves=()):
    """All trees over ``alphabet`` (plus extra nullary ``leaves``) with at most ``max_size`` nodes.

    Returns a dict mapping size to a list of trees, built bottom-up.
    """
    by_size = {s: [] for s in range(1, max_size + 1)}
    if max_size < 1:
        return by_size
    for leaf in leaves:
        by_size[1].append(leaf)
    for name in alphabet:
        if alphabet[name] == 0:
            by_size[1].append(Tree(name))
    symbols = [(name, alphabet[name]) for name in alphabet if alphabet[name] > 0]
    for size in range(2, max_size + 1):
        for name, rank in symbols:
            for combo in _splits(size - 1, rank):
                for kids in itertools.product(*(by_size[c] for c in combo)):
                    by_size[size].append(Tree(name, kids))
    return by_size


def all_trees(alphabet, max_size, leaves=()):
    by_size = enumerate_trees(alphabet, max_size, leaves)
    return [t for s in sorted(by_size) for t in by_size[s]]


def _splits(total, parts):
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _splits(total - first, parts - 1):
            yield (first,) + rest

