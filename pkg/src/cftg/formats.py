"""Line-based text formats for grammars and homomorphisms."""

from __future__ import annotations

import re

from .grammar import Cftg, Production
from .hom import AlphabetError, TreeHomomorphism
from .terms import ParseError, RankedAlphabet, TermError, UnknownSymbol, VariableIndexError, parse_tree


class FormatError(TermError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class CompletenessError(FormatError):
    pass


_HEAD_RE = re.compile(r"\s*([^\s(]+)\s*(?:\(([^)]*)\))?\s*->\s*(.*)\Z")


def _lines(text):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") and not line.startswith("#/"):
            continue
        yield no, line


def _split_keyword(line):
    key, _, rest = line.partition(" ")
    return key, rest.strip()


def _tree(text, alphabet, no, offset):
    try:
        return parse_tree(text, alphabet)
    except UnknownSymbol as exc:
        raise AlphabetError(f"line {no}: unknown symbol {exc.symbol}") from None
    except ParseError as exc:
        col = offset + (exc.offset or 0) + 1
        raise FormatError(str(exc), no, col) from None


def _alphabet(text, no):
    try:
        return RankedAlphabet.parse(text)
    except ParseError as exc:
        raise FormatError(str(exc), no) from None


def parse_grammar(text):
    """Parse the grammar format; also returns ``stage:``/``p:`` metadata if present."""
    G, _ = parse_grammar_with_meta(text)
    return G


def parse_grammar_with_meta(text):
    terminals = nonterminals = axiom_text = None
    rules = []
    meta = {}
    for no, line in _lines(text):
        if re.match(r"[a-z_]+:", line):
            key, _, value = line.partition(":")
            meta[key.strip()] = value.strip()
            continue
        key, rest = _split_keyword(line)
        if key == "terminals":
            terminals = _alphabet(rest, no)
        elif key == "nonterminals":
            nonterminals = _alphabet(rest, no)
        elif key == "axiom":
            axiom_text = (no, rest)
        elif key == "rule":
            rules.append((no, rest))
        else:
            raise FormatError(f"unknown directive {key!r}", no, 1)
    if terminals is None or nonterminals is None or axiom_text is None:
        raise FormatError("grammar needs terminals, nonterminals and axiom lines")
    alphabet = terminals.union(nonterminals)
    no, src = axiom_text
    axiom = _tree(src, alphabet, no, len("axiom "))
    productions = []
    for no, src in rules:
        m = _HEAD_RE.match(src)
        if not m:
            raise FormatError("expected 'NT(x1,..,xk) -> tree'", no, len("rule ") + 1)
        lhs, params, rhs_text = m.group(1), m.group(2), m.group(3)
        if lhs not in nonterminals:
            raise AlphabetError(f"line {no}: {lhs} is not a declared nonterminal")
        names = [p.strip() for p in params.split(",")] if params and params.strip() else []
        if names != [f"x{i}" for i in range(1, len(names) + 1)]:
            raise FormatError(f"parameters of {lhs} must be x1..xk in order", no)
        if len(names) != nonterminals[lhs]:
            raise FormatError(f"{lhs} has rank {nonterminals[lhs]} but {len(names)} parameters", no)
        rhs = _tree(rhs_text, alphabet, no, src.index("->") + 2 + len("rule "))
        bad = [i for i in _vars(rhs) if i > len(names)]
        if bad:
            raise VariableIndexError(f"line {no}: x{bad[0]} exceeds the rank of {lhs}")
        productions.append(Production(lhs, len(names), rhs))
    return Cftg(nonterminals, terminals, axiom, productions), meta


def _vars(t):
    if t.is_var:
        yield t.label
    for c in t.children:
        yield from _vars(c)


def serialize_grammar(G, meta=None):
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"{key}: {value}")
    lines.append(f"terminals {G.terminals.declaration()}")
    lines.append(f"nonterminals {G.nonterminals.declaration()}")
    lines.append(f"axiom {G.axiom}")
    for p in G.productions:
        lines.append(f"rule {p}")
    return "\n".join(lines) + "\n"


def parse_hom(text):
    name = source = target = None
    maps = {}
    for no, line in _lines(text):
        key, rest = _split_keyword(line)
        if key == "hom":
            name = rest
        elif key == "source":
            source = _alphabet(rest, no)
        elif key == "target":
            target = _alphabet(rest, no)
        elif key == "map":
            s, arrow, img = rest.partition("->")
            if not arrow:
                raise FormatError("expected 'map σ -> tree'", no)
            maps[s.strip()] = (no, img.strip())
        else:
            raise FormatError(f"unknown directive {key!r}", no, 1)
    if source is None or target is None:
        raise FormatError("homomorphism needs source and target lines")
    missing = [s for s in source if s not in maps]
    if missing:
        raise CompletenessError(f"no map line for source symbol(s) {', '.join(missing)}")
    images = {}
    for s, (no, img) in maps.items():
        if s not in source:
            raise AlphabetError(f"line {no}: {s} is not a source symbol")
        tree = _tree(img, target, no, 0)
        bad = [i for i in _vars(tree) if i > source[s]]
        if bad:
            raise VariableIndexError(f"line {no}: x{bad[0]} exceeds the rank of {s}")
        images[s] = tree
    return TreeHomomorphism(source, target, {s: images[s] for s in source}, name or "h")


def serialize_hom(h):
    lines = [f"hom {h.name}", f"source {h.source.declaration()}", f"target {h.target.declaration()}"]
    for s in h.source:
        lines.append(f"map {s} -> {h.images[s]}")
    return "\n".join(lines) + "\n"


def read_grammar(path):
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read())


def read_hom(path):
    with open(path, encoding="utf-8") as fh:
        return parse_hom(fh.read())


def sample_text(name):
    """Text of a bundled sample file, e.g. ``sample_text("twins.cftg")``."""
    from importlib.resources import files

    return (files("cftg") / "samples" / name).read_text(encoding="utf-8")


def sample_grammar(name):
    return parse_grammar(sample_text(name))


def sample_hom(name):
    return parse_hom(sample_text(name))
