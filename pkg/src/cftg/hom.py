"""Tree homomorphisms: application, classification, decomposition, preimages."""

from __future__ import annotations

from dataclasses import dataclass

from .terms import (
    RankedAlphabet,
    TermError,
    Tree,
    TreeTuple,
    all_trees,
    check_ranked,
    lin,
    substitute,
    variables,
)


class AlphabetError(TermError):
    pass


class ClassificationError(TermError):
    pass


class TreeHomomorphism:
    """A map from source symbols of rank k to target trees over X_k."""

    def __init__(self, source, target, images, name="h"):
        self.source = source if isinstance(source, RankedAlphabet) else RankedAlphabet(source)
        self.target = target if isinstance(target, RankedAlphabet) else RankedAlphabet(target)
        self.images = dict(images)
        self.name = name
        missing = [s for s in self.source if s not in self.images]
        if missing:
            raise AlphabetError(f"no image for source symbol(s) {', '.join(missing)}")
        extra = [s for s in self.images if s not in self.source]
        if extra:
            raise AlphabetError(f"image given for unknown symbol(s) {', '.join(extra)}")
        for s, img in self.images.items():
            check_ranked(img, self.target, max_var=self.source[s])

    def __eq__(self, other):
        if not isinstance(other, TreeHomomorphism):
            return NotImplemented
        return (self.source, self.target, self.images) == (other.source, other.target, other.images)

    def __repr__(self):
        maps = ", ".join(f"{s} -> {t}" for s, t in self.images.items())
        return f"TreeHomomorphism({self.name}: {maps})"

    def __call__(self, t):
        return apply_hom(self, t)

    def image_tuple(self, symbol):
        return TreeTuple(self.source[symbol], [self.images[symbol]])

    def split(self, symbol):
        """(t̃_σ, θ_σ) with h(σ) = t̃_σ · θ_σ."""
        return lin(self.image_tuple(symbol))


def identity_hom(alphabet, name="id"):
    alphabet = RankedAlphabet(alphabet)
    images = {s: Tree(s, [Tree(i) for i in range(1, r + 1)]) for s, r in alphabet.items()}
    return TreeHomomorphism(alphabet, alphabet, images, name)


def apply_hom(h, t):
    cache = {}

    def walk(u):
        if u.is_var:
            return u
        hit = cache.get(u)
        if hit is not None:
            return hit
        img = h.images.get(u.label)
        if img is None:
            raise AlphabetError(f"symbol {u.label} has no image under {h.name}")
        out = substitute(img, [walk(c) for c in u.children])
        cache[u] = out
        return out

    return walk(t)


def compose_homs(outer, inner, name=None):
    """The homomorphism t ↦ outer(inner(t))."""
    images = {s: apply_hom(outer, img) for s, img in inner.images.items()}
    return TreeHomomorphism(inner.source, outer.target, images, name or f"{outer.name}∘{inner.name}")


@dataclass(frozen=True)
class HomClass:
    linear: bool
    nondeleting: bool
    simple: bool
    alphabetic: bool
    elementary_ordered: bool

    def flags(self):
        return {k: getattr(self, k) for k in ("linear", "nondeleting", "simple", "alphabetic", "elementary_ordered")}


def _is_identity_image(symbol, rank, img):
    return img == Tree(symbol, [Tree(i) for i in range(1, rank + 1)])


def elementary_shape(img, n):
    """If ``img`` is δ1(x1..x_{ℓ-1}, δ2(x_ℓ..x_{ℓ+k-1}), x_{ℓ+k}..x_n) return (δ1, δ2, ℓ, k)."""
    if img.is_var:
        return None
    inner = [i for i, c in enumerate(img.children, 1) if not c.is_var]
    if len(inner) != 1:
        return None
    ell = inner[0]
    d2 = img.children[ell - 1]
    if any(not c.is_var for c in d2.children):
        return None
    if variables(img) != list(range(1, n + 1)):
        return None
    return img.label, d2.label, ell, len(d2.children)


def elementary_data(h):
    """Return (σ, δ1, δ2, ℓ, k) when h is elementary ordered, otherwise None."""
    expanding = []
    for s, r in h.source.items():
        img = h.images[s]
        if _is_identity_image(s, r, img):
            continue
        shape = elementary_shape(img, r)
        if shape is None:
            return None
        expanding.append((s,) + shape)
    if len(expanding) != 1:
        return None
    return expanding[0]


def classify_hom(h):
    linear = nondeleting = alphabetic = True
    for s, r in h.source.items():
        t_tilde, theta = h.split(s)
        images = theta.images()
        if len(set(images)) != len(images):
            linear = False
        if set(images) != set(range(1, r + 1)):
            nondeleting = False
        root = t_tilde.components[0]
        if not root.is_var and any(not c.is_var for c in root.children):
            alphabetic = False
    return HomClass(
        linear=linear,
        nondeleting=nondeleting,
        simple=linear and nondeleting,
        alphabetic=alphabetic,
        elementary_ordered=elementary_data(h) is not None,
    )


def _fresh(base, taken):
    name = base
    n = 1
    while name in taken:
        n += 1
        name = f"{base}'{n}" if n > 2 else f"{base}'"
    taken.add(name)
    return name


def _first_contractible(t):
    """Post-order first symbol node below the root, with its parent position."""
    def walk(u, w):
        for i, c in enumerate(u.children, 1):
            found = walk(c, w + (i,))
            if found is not None:
                return found
        if w and not u.is_var:
            return w
        return None

    return walk(t, ())


def _contract(t, w, new_symbol):
    """Merge the node at ``w`` into its parent, labelling the merged node ``new_symbol``."""
    parent_w, ell = w[:-1], w[-1]

    def at(u, path):
        if not path:
            kids = list(u.children)
            child = kids[ell - 1]
            merged = kids[: ell - 1] + list(child.children) + kids[ell:]
            return Tree(new_symbol, merged), (u.label, len(u.children), child.label, len(child.children), ell)
        i = path[0]
        kids = list(u.children)
        kids[i - 1], info = at(kids[i - 1], path[1:])
        return Tree(u.label, kids), info

    return at(t, parent_w)


def decompose_hom(h):
    """Return (φ, [ψ_1, ..., ψ_k]) with h = ψ_k ∘ ... ∘ ψ_1 ∘ φ."""
    cls = classify_hom(h)
    if not cls.linear:
        raise ClassificationError(f"{h.name} is not linear")
    taken = set(h.source) | set(h.target)
    phi_images = {}
    expansions = []  # per source symbol, a list of (τ, rank, δ1, rank1, δ2, rank2, ℓ) in expansion order
    for s, r in h.source.items():
        t_tilde, theta = h.split(s)
        current = t_tilde.components[0]
        steps = []
        step = 0
        while True:
            w = _first_contractible(current)
            if w is None:
                break
            step += 1
            tmp = f"\0{s}\0{step}"
            current, info = _contract(current, w, tmp)
            steps.append((tmp, info))
        if not steps:
            phi_images[s] = substitute(current, theta.components)
            continue
        # Name the intermediate symbols; the last one reuses σ when that is free.
        names = {}
        last = steps[-1][0]
        for tmp, _ in steps:
            idx = tmp.split("\0")[2]
            if tmp == last and s not in h.target:
                names[tmp] = s
            else:
                names[tmp] = _fresh(f"{s}_step{idx}", taken)
        plan = []
        for tmp, (d1, r1, d2, r2, ell) in reversed(steps):
            plan.append((names[tmp], r1 - 1 + r2, names.get(d1, d1), r1, names.get(d2, d2), r2, ell))
        expansions.append(plan)
        final = Tree(names[last], current.children)
        phi_images[s] = substitute(final, theta.components)

    # intermediate alphabets carry only symbols that actually occur
    used = {u.label for img in phi_images.values() for u in _nodes(img) if not u.is_var}
    stage = {sym: r for sym, r in h.target.items() if sym in used}
    for plan in expansions:
        tau, n = plan[0][0], plan[0][1]
        stage[tau] = n
    phi_target = RankedAlphabet(stage)
    phi = TreeHomomorphism(h.source, phi_target, phi_images, name=f"{h.name}.φ")

    psis = []
    current_alpha = dict(stage)
    for plan in expansions:
        for tau, n, d1, r1, d2, r2, ell in plan:
            nxt = dict(current_alpha)
            del nxt[tau]
            nxt[d1] = r1
            nxt[d2] = r2
            images = {}
            for sym_name, rank in current_alpha.items():
                if sym_name == tau:
                    xs = [Tree(i) for i in range(1, n + 1)]
                    inner = Tree(d2, xs[ell - 1 : ell - 1 + r2])
                    images[sym_name] = Tree(d1, xs[: ell - 1] + [inner] + xs[ell - 1 + r2 :])
                else:
                    images[sym_name] = Tree(sym_name, [Tree(i) for i in range(1, rank + 1)])
            psis.append(TreeHomomorphism(current_alpha, nxt, images, name=f"{h.name}.ψ{len(psis) + 1}"))
            current_alpha = nxt
    if psis and set(current_alpha) - set(h.target):
        raise AssertionError("decomposition left intermediate symbols behind")
    return phi, psis


def _nodes(t):
    yield t
    for c in t.children:
        yield from _nodes(c)


def apply_chain(phi, psis, t):
    t = apply_hom(phi, t)
    for psi in psis:
        t = apply_hom(psi, t)
    return t


def preimage_bounded(h, targets, size_bound):
    """All source trees of size <= size_bound whose image lies in ``targets``."""
    targets = set(targets)
    return {t for t in all_trees(h.source, size_bound) if apply_hom(h, t) in targets}
