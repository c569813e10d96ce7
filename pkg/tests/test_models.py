import json
from pathlib import Path

import pytest

from ceg_ara import builtin_model
from ceg_ara.models import BUILTINS, ModelError, load_model, read_model, save_model, to_document

MODELS = Path(__file__).resolve().parents[1] / "models"


@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_round_trip_is_byte_identical(name):
    text = save_model(builtin_model(name))
    again = save_model(load_model(text))
    assert again == text
    assert load_model(text) == builtin_model(name)


@pytest.mark.parametrize("path", sorted(MODELS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_files_round_trip(path):
    text = path.read_text(encoding="utf-8")
    assert save_model(load_model(text)) == text
    assert save_model(builtin_model(path.stem)) == text


def test_canonical_text_shape():
    text = save_model(builtin_model("incursion_idle"))
    assert text.endswith("}\n")
    assert text.splitlines()[1].startswith('  "')
    doc = json.loads(text)
    assert list(doc) == sorted(doc)


def test_plus_structure():
    b = builtin_model("incursion_plus")
    g = b.staged_tree
    assert len(g.stage_ids) == 7
    doc = to_document(b)
    shared = [s for s in doc["stages"] if s["id"] == "J&H"]
    assert len(shared) == 1 and set(shared[0]["members"]) == {"J", "H"}
    assert len(to_document(builtin_model("incursion_idle"))["florets"]) == 5


def test_bundle_equality():
    assert builtin_model("incursion_plus") == builtin_model("incursion_plus")
    assert builtin_model("incursion_plus") != builtin_model("incursion_minus")


def test_parse_error_has_position():
    with pytest.raises(ModelError, match=r"parse error at line 2, column \d+"):
        load_model('{\n  "tree": ,\n}')


def edited(name, fn):
    doc = to_document(builtin_model(name))
    fn(doc)
    return json.dumps(doc)


def test_bad_floret_names_stage():
    text = edited("incursion_idle", lambda d: d["florets"].__setitem__("B2", [0.4, 0.8]))
    with pytest.raises(ModelError) as info:
        load_model(text)
    assert any("B2" in v and "1.2" in v for v in info.value.violations)


@pytest.mark.parametrize("edit,msg", [
    (lambda d: d["interventions"][1]["forced"].__setitem__("B9", "detected"), "unresolved reference"),
    (lambda d: d["interventions"][1]["forced"].__setitem__("B1", "vanished"), "unresolved reference"),
    (lambda d: d["uncertainty"]["profile_prior"][0].__setitem__("profile", "ghost"), "unresolved reference"),
    (lambda d: d["profiles"][0]["belief_overrides"].__setitem__("Q", [1.0]), "unresolved reference"),
    (lambda d: d.pop("tree"), "missing key 'tree'"),
    (lambda d: d["tree"]["edges"].append(["Z", "Z2"]), "every edge"),
    (lambda d: d["interventions"].append(dict(d["interventions"][0])), "duplicate intervention"),
    (lambda d: d["profiles"][0]["utility"].__setitem__("kind", "greed"), "profile"),
])
def test_reference_and_shape_errors(edit, msg):
    with pytest.raises(ModelError, match=msg):
        load_model(edited("incursion_plus", edit))


def test_structural_violations_reported():
    def break_stage(d):
        d["stages"][0]["members"].append("B1")
    with pytest.raises(ModelError, match="invalid staged tree"):
        load_model(edited("incursion_idle", break_stage))


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin_model("incursion_nowhere")


def test_unreadable_file(tmp_path):
    with pytest.raises(ModelError, match="cannot read"):
        read_model(str(tmp_path / "missing.json"))
