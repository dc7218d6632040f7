import json

import pytest

from cftg.checks import EXAMPLE_FINAL
from cftg.cli import main
from cftg.formats import parse_grammar, sample_grammar, sample_text
from cftg.grammar import bounded_language
from cftg.terms import show


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_enumerate_lists_worked_example(capsys):
    code, out, _ = run(capsys, "enumerate", "g_ex.cftg", "--max-steps", "8")
    assert code == 0
    assert show(EXAMPLE_FINAL) in out.splitlines()
    code, out, _ = run(capsys, "enumerate", "g_ex.cftg", "--max-steps", "7")
    assert show(EXAMPLE_FINAL) not in out.splitlines()


def test_keylemma_reports_no_counterexamples(capsys):
    code, out, _ = run(capsys, "lab", "keylemma", "-i", "2", "--exp-bound", "3", "-e", "1")
    assert code == 0
    assert "0 counterexamples" in out


def test_transform_scope_error(capsys):
    code, _, err = run(capsys, "transform", "g_ex.cftg", "--stage", "torsionfree")
    assert code == 5
    assert "ScopeError" in err


def test_transform_writes_output(capsys, tmp_path):
    target = tmp_path / "tf.cftg"
    code, out, _ = run(capsys, "transform", "twins.cftg", "--stage", "torsionfree", "--out", str(target))
    assert code == 0 and f"wrote {target}" in out
    G = parse_grammar(target.read_text(encoding="utf-8"))
    assert bounded_language(G, 10) == bounded_language(sample_grammar("twins.cftg"), 10)


def test_gnf_check(capsys, tmp_path):
    code, _, _ = run(capsys, "closure", "gnf-check", "gnf_pair.cftg")
    assert code == 0
    bad = tmp_path / "bad.cftg"
    bad.write_text("terminals α/0\nnonterminals S/0 B/0\naxiom S\nrule S -> B\nrule B -> α\n", encoding="utf-8")
    code, _, _ = run(capsys, "closure", "gnf-check", str(bad))
    assert code == 1


def test_closure_inverse_elementary(capsys):
    code, out, _ = run(capsys, "closure", "inv-elem", "gnf_pair.cftg", "pair.hom")
    assert code == 0
    assert "σ" in out


def test_json_block_is_flat(capsys):
    code, out, _ = run(capsys, "enumerate", "g_ex.cftg", "--max-steps", "8", "--json")
    assert code == 0
    data = json.loads(out)
    assert data["count"] >= 10
    assert all(not isinstance(v, (dict, list)) for v in data.values())


def test_classify_h_ex(capsys):
    code, out, _ = run(capsys, "classify", "h_ex.hom", "--json")
    assert code == 0
    assert json.loads(out)["simple"] is True


def test_output_is_deterministic(capsys):
    first = run(capsys, "lab", "witness", "-p", "1")
    second = run(capsys, "lab", "witness", "-p", "1")
    assert first == second and first[0] == 0


def test_missing_file(capsys):
    code, _, err = run(capsys, "enumerate", "no/such/file.cftg")
    assert code == 3
    assert "no/such/file.cftg" in err


def test_syntax_error_code(capsys, tmp_path):
    bad = tmp_path / "bad.cftg"
    bad.write_text("terminals a/x\nnonterminals S/0\naxiom S\n", encoding="utf-8")
    code, _, _ = run(capsys, "enumerate", str(bad))
    assert code == 4


def test_member(capsys, tmp_path):
    tree = tmp_path / "t.txt"
    tree.write_text(show(EXAMPLE_FINAL), encoding="utf-8")
    code, out, _ = run(capsys, "member", "g_ex.cftg", str(tree))
    assert code == 0 and out.strip() == "yes"


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["transform", "g_ex.cftg"])
    assert err.value.code == 2


def test_sample_fallback_matches_file(capsys, tmp_path):
    path = tmp_path / "g_ex.cftg"
    path.write_text(sample_text("g_ex.cftg"), encoding="utf-8")
    assert run(capsys, "enumerate", str(path), "--max-steps", "4") == run(capsys, "enumerate", "g_ex.cftg", "--max-steps", "4")
