"""The ``cftg`` command line tool."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import checks, closure, derivtree, dycklab, formats, grammar, hom, normalform, terms

log = logging.getLogger("cftg")

# Exit codes, most specific error class first.
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CODES = (
    (OSError, 3),
    (formats.FormatError, 4),
    (terms.ParseError, 4),
    (normalform.ScopeError, 5),
    (normalform.NormalFormError, 6),
    (hom.ClassificationError, 7),
    (closure.ClosureError, 8),
    (derivtree.DerivationTreeError, 9),
    (derivtree.PumpError, 9),
    (dycklab.DyckError, 10),
    (grammar.GrammarError, 11),
    (hom.AlphabetError, 12),
    (terms.TermError, 12),
    (ValueError, 13),
    (IndexError, 13),
)


def exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return None


class Report:
    """Text lines plus a flat key/value block for ``--json``."""

    def __init__(self):
        self.lines = []
        self.data = {}
        self.status = EXIT_OK

    def say(self, line=""):
        self.lines.append(line)

    def put(self, **items):
        self.data.update(items)


def _source(path):
    """File contents, falling back to a bundled sample of that name."""
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    try:
        return formats.sample_text(os.path.basename(path))
    except (FileNotFoundError, OSError):
        raise FileNotFoundError(f"no such file or bundled sample: {path}") from None


def _grammar(path):
    return formats.parse_grammar_with_meta(_source(path))


def _hom(path):
    return formats.parse_hom(_source(path))


def _tree_arg(text):
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read().strip()
    return terms.parse_tree(text)


def _emit_grammar(args, rep, G, meta=None):
    text = formats.serialize_grammar(G, meta)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        rep.say(f"wrote {args.out}")
    else:
        rep.say(text.rstrip("\n"))


def _word_lines(label, word):
    return [f"{label}: {terms.compress_word(word) or 'ε'}", f"{label} (exact): {word or 'ε'}"]


# Verbs.

def cmd_enumerate(args, rep):
    G, _ = _grammar(args.grammar)
    mode = grammar.UNRESTRICTED if args.mode == "unrestricted" else grammar.OI
    res = grammar.enumerate_bounded(G, max_steps=args.max_steps, max_size=args.max_size, mode=mode)
    for t in res.sorted():
        rep.say(terms.show(t))
    rep.say(f"# {len(res.trees)} trees" + (f", truncated ({res.reason})" if res.truncated else ""))
    rep.put(count=len(res.trees), truncated=res.truncated, steps=res.steps_used, mode=mode)


def cmd_member(args, rep):
    G, _ = _grammar(args.grammar)
    t = _tree_arg(args.tree)
    verdict = grammar.member_bounded(G, t, max_steps=args.max_steps)
    rep.say(verdict)
    rep.put(tree=terms.show(t), verdict=verdict)


def cmd_classify(args, rep):
    h = _hom(args.hom)
    flags = hom.classify_hom(h).flags()
    for k, v in flags.items():
        rep.say(f"{k}: {'yes' if v else 'no'}")
    rep.put(**flags)


def cmd_transform(args, rep):
    G, meta = _grammar(args.grammar)
    target = normalform.CLI_STAGES[args.stage]
    normalform.SpinalAlphabet.of(G.terminals)
    if meta.get("stage") in normalform.STAGES:
        sg = normalform.stage_from_grammar(G, meta["stage"], int(meta["p"]) if "p" in meta else None, meta)
        order = normalform.STAGES
        if order.index(target) < order.index(sg.stage):
            raise normalform.StageError(f"grammar is already at stage {sg.stage}, past {target}")
        steps = _continue(sg, target)
    else:
        steps = normalform.normalize(G, until=target)
    sg = steps[-1]
    problems = sg.violations()
    if problems:
        raise normalform.StageError(problems[0])
    _emit_grammar(args, rep, sg.grammar, sg.certificate())
    rep.put(stage=sg.stage, p=sg.p, productions=len(sg.grammar.productions))


def _continue(sg, target):
    fns = {
        normalform.SPLIT: normalform.split_spine_chain,
        normalform.LIMITED: normalform.limit_spine,
        normalform.CHAINFREE: lambda s: normalform.eliminate_chains(normalform.make_total_staged(s)),
        normalform.NOPROJ: normalform.remove_projections,
        normalform.TORSIONFREE: normalform.remove_torsions,
    }
    steps = [sg]
    order = normalform.STAGES
    for stage in order[order.index(sg.stage) + 1 : order.index(target) + 1]:
        steps.append(fns[stage](steps[-1]))
    return steps


def cmd_decompose(args, rep):
    h = _hom(args.hom)
    phi, psis = hom.decompose_hom(h)
    rep.say(formats.serialize_hom(phi).rstrip("\n"))
    for k, psi in enumerate(psis, 1):
        rep.say("")
        rep.say(formats.serialize_hom(psi).rstrip("\n"))
    rep.put(elementary_steps=len(psis))


def _certificate(rep, lines):
    rep.say("")
    rep.say("# certificate")
    for line in lines:
        rep.say(f"#   {line}")
    rep.put(certificate="; ".join(lines))


def cmd_closure(args, rep):
    G, _ = _grammar(args.grammar)
    if args.action == "gnf-check":
        res = closure.validate_gnf(G)
        if res.ok:
            rep.say("Greibach normal form: yes")
            _certificate(rep, res.certificate())
        else:
            rep.say(f"Greibach normal form: no: '{res.production}': {res.reason}")
            rep.status = EXIT_CHECK_FAILED
        rep.put(gnf=res.ok)
        return
    h = _hom(args.hom)
    cert = []
    if args.action == "inv-alpha":
        checked = closure.validate_gnf(G)
        if not checked.ok:
            raise closure.GnfError(f"'{checked.production}': {checked.reason}", "gnf", G)
        out = closure.inverse_alphabetic(checked, h)
        cert.append(f"gnf: {len(checked.forms)} productions in forms G1-G3")
        cert.append(f"alphabetic: {h.name}")
    elif args.action == "inv-elem":
        out = closure.inverse_elementary(G, h, inclusion_bound=args.inclusion_bound, certificate=cert)
    else:
        out = closure.inverse_linear_pipeline(G, h, inclusion_bound=args.inclusion_bound, certificate=cert)
    _emit_grammar(args, rep, out)
    _certificate(rep, cert)
    rep.put(productions=len(out.productions), nonterminals=len(out.nonterminals))


def cmd_lab(args, rep):
    action = args.action
    if action == "gen-u":
        word = dycklab.gen_U(args.i, args.e)
        for line in _word_lines(f"U_{args.i}", word):
            rep.say(line)
        rep.say(f"Dyck: {'yes' if dycklab.is_dyck(word) else 'no'}")
        rep.put(word=word, length=len(word), dyck=dycklab.is_dyck(word))
    elif action in ("factorize", "defects"):
        f = dycklab.factorize(args.i, args.j, args.e)
        if action == "factorize":
            P, S = dycklab.describe_factorization(f)
            rep.say(f"P = {P}")
            rep.say(f"S = {S}")
            for line in _word_lines("P", f.P) + _word_lines("S", f.S):
                rep.say(line)
            rep.say(f"V flags: {''.join('U' if v else 'ε' for v in f.V) or '-'}")
            rep.say(f"W flags: {''.join('U' if w else 'ε' for w in f.W) or '-'}")
            rep.say(f"D = {terms.compress_word(f.D)}")
        for d in f.defects:
            rep.say(f"defect {d.kind}[{d.lo}..{d.hi}] in chain z{d.owner}: {terms.compress_word(d.word(args.e))}")
        bad = f.check()
        for b in bad:
            rep.say(f"violated: {b}")
        if bad:
            rep.status = EXIT_CHECK_FAILED
        rep.put(P=f.P, S=f.S, D=f.D, defects=len(f.defects), violations=len(bad))
    elif action == "perturb":
        vector = tuple(int(x) for x in args.vector.split(",") if x.strip())
        f = dycklab.factorize(args.i, args.j, args.e)
        word = dycklab.apply_perturbation(f.P, vector)
        congruent = dycklab.perturb_check(args.i, args.j, vector, args.e)
        for line in _word_lines("P'", word):
            rep.say(line)
        rep.say(f"P' ≡ P: {'yes' if congruent else 'no'}")
        rep.put(perturbed=word, congruent=congruent)
    elif action == "keylemma":
        report = dycklab.check_key_lemma(args.i, args.exp_bound, args.e)
        n = len(report.counterexamples) + len(report.structural_failures)
        rep.say(f"{report.cases} cases, {report.congruent} congruent")
        rep.say(f"{n} counterexamples")
        for j, vector in report.counterexamples[:10]:
            rep.say(f"  j={j} vector={','.join(map(str, vector))}")
        if n:
            rep.status = EXIT_CHECK_FAILED
        rep.put(cases=report.cases, congruent=report.congruent, counterexamples=n)
    elif action == "witness":
        params = dycklab.DyckParams(args.p, args.e)
        t, steps = dycklab.build_witness(params)
        final, n = dycklab.replay_transcript(steps)
        rep.say(f"t = {terms.show(t)}")
        rep.say(f"|t|_σ = {terms.count_symbol(t, dycklab.SIGMA)} (m = {params.m})")
        for line in _word_lines("ι(t)", dycklab.iota(t)):
            rep.say(line)
        if args.transcript:
            for k, step in enumerate(steps, 1):
                rep.say(f"step {k}: production {step.production} at {step.positions} position(s)")
        derives = final == hom.apply_hom(dycklab.H_EX, t)
        rep.say(f"transcript: {len(steps)} parallel steps, {n} single steps, ends in h_ex(t): {'yes' if derives else 'no'}")
        if not derives:
            rep.status = EXIT_CHECK_FAILED
        rep.put(tree=terms.show(t), sigma=terms.count_symbol(t, dycklab.SIGMA), m=params.m, steps=n)
    elif action == "refute":
        G, meta = _grammar(args.grammar)
        max_size, complete = (int(x) for x in args.bounds.split(","))
        cand = G
        if meta.get("stage") == normalform.TORSIONFREE:
            cand = normalform.stage_from_grammar(G, normalform.TORSIONFREE, int(meta["p"]) if "p" in meta else None)
        bounds = dycklab.RefuteBounds(max_size=max_size, complete_size=complete, e=args.e)
        r = dycklab.refute_candidate(cand, bounds)
        flat = {}
        for k, v in r.witness().items():
            if isinstance(v, dict):
                flat.update({f"{k}_{kk}": vv for kk, vv in v.items()})
            elif isinstance(v, list):
                flat[k] = terms.format_position(tuple(v))
            else:
                flat[k] = v
        for k, v in flat.items():
            if k != "dtree":
                rep.say(f"{k}: {v}")
        if "dtree" in flat:
            rep.say("dtree:")
            rep.say(flat["dtree"].rstrip("\n"))
        rep.put(**flat)


def cmd_check(args, rep):
    results = checks.run_checks(args.only, seed=args.seed)
    for r in results:
        rep.say(r.line())
        rep.data[f"criterion_{r.number}"] = r.ok
    if not all(r.ok for r in results):
        rep.status = EXIT_CHECK_FAILED


def _globals(defaults):
    """The global flags; sub-parsers repeat them so they may follow the verb."""
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="seed for randomized checks")
    p.add_argument("--max-size", type=int, default=d(None), help="tree size bound")
    p.add_argument("--max-steps", type=int, default=d(8), help="derivation step bound")
    p.add_argument("--out", default=d(None), help="write the produced grammar here")
    p.add_argument("--json", action="store_true", default=d(False), help="print a flat JSON block")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser():
    common = _globals(False)
    parser = argparse.ArgumentParser(prog="cftg", parents=[_globals(True)], description="Context-free tree grammar toolkit.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("enumerate", parents=[common], help="terminal trees within a step bound")
    p.add_argument("grammar")
    p.add_argument("--mode", choices=("oi", "unrestricted"), default="oi")
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("member", parents=[common], help="bounded membership")
    p.add_argument("grammar")
    p.add_argument("tree", help="tree text or a file holding it")
    p.set_defaults(fn=cmd_member)

    p = sub.add_parser("classify", parents=[common], help="classify a homomorphism")
    p.add_argument("hom")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("transform", parents=[common], help="normal-form stages for spinal grammars")
    p.add_argument("grammar")
    p.add_argument("--stage", choices=sorted(normalform.CLI_STAGES), required=True)
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("decompose-hom", parents=[common], help="h = ψ_k ∘ … ∘ ψ_1 ∘ φ")
    p.add_argument("hom")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("closure", help="inverse homomorphism constructions")
    csub = p.add_subparsers(dest="action", required=True)
    q = csub.add_parser("gnf-check", parents=[common])
    q.add_argument("grammar")
    for name in ("inv-alpha", "inv-elem", "inv-linear"):
        q = csub.add_parser(name, parents=[common])
        q.add_argument("grammar")
        q.add_argument("hom")
        if name != "inv-alpha":
            q.add_argument("--inclusion-bound", type=int, default=8)
    p.set_defaults(fn=cmd_closure)

    p = sub.add_parser("lab", help="Dyck-word and witness laboratory")
    lsub = p.add_subparsers(dest="action", required=True)
    q = lsub.add_parser("gen-u", parents=[common])
    q.add_argument("-i", type=int, required=True)
    q.add_argument("-e", type=int, default=1)
    for name in ("factorize", "defects", "perturb"):
        q = lsub.add_parser(name, parents=[common])
        q.add_argument("-i", type=int, required=True)
        q.add_argument("-j", type=int, required=True)
        q.add_argument("-e", type=int, default=1)
        if name == "perturb":
            q.add_argument("--vector", required=True, help="comma-separated a-exponents")
    q = lsub.add_parser("keylemma", parents=[common])
    q.add_argument("-i", type=int, required=True)
    q.add_argument("--exp-bound", type=int, default=3)
    q.add_argument("-e", type=int, default=1)
    q = lsub.add_parser("witness", parents=[common])
    q.add_argument("-p", type=int, required=True)
    q.add_argument("-e", type=int, default=1)
    q.add_argument("--transcript", action="store_true")
    q = lsub.add_parser("refute", parents=[common])
    q.add_argument("grammar")
    q.add_argument("--bounds", default="12,0", help="MAX_SIZE,COMPLETE_SIZE")
    q.add_argument("-e", type=int, default=None)
    p.set_defaults(fn=cmd_lab)

    p = sub.add_parser("check", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", type=int, nargs="+", choices=range(1, 11), metavar="N")
    p.set_defaults(fn=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    rep = Report()
    try:
        args.fn(args, rep)
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    if args.json:
        print(json.dumps(rep.data, ensure_ascii=False, sort_keys=True))
    else:
        for line in rep.lines:
            print(line)
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
