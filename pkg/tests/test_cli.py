import json

import pytest

from corpus import DATA, corpus
from pecmdp.cli import main, parse_at
from pecmdp.parser import render_domain

COIN = str(DATA / "coin_lamp.pec")
BROKEN = str(DATA / "broken.pec")


def test_parse_at():
    state, label = parse_at("Lamp=on, Door=shut@2")
    assert dict(state) == {"Lamp": "on", "Door": "shut"} and label == "2"


def test_project_prints_value(capsys):
    assert main(["project", COIN, "--query", "Lamp=on@2"]) == 0
    out, err = capsys.readouterr()
    assert out.strip() == "0.72"
    assert "exact value" in err


def test_project_engines_agree(tmp_path, capsys):
    for i, d in enumerate(corpus()[:25]):
        path = tmp_path / f"d{i}.pec"
        path.write_text(render_domain(d))
        f = d.fluents[-1]
        query = f"{f.name}={f.values[-1]}@{d.instants[-1]}"
        outputs = []
        for engine in ("matrix", "oracle"):
            assert main(["project", str(path), "--query", query, "--engine", engine]) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]


def test_project_conditional_json(capsys):
    assert main(["project", COIN, "--query", "Lamp=on@3", "--given", "Lamp=on@2", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["probability"] == pytest.approx(1.0, abs=1e-12)


def test_validate(capsys):
    assert main(["validate", COIN]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    assert main(["validate", BROKEN]) == 1
    assert "cprop-overlap" in capsys.readouterr().err


def test_errors_and_usage(tmp_path, capsys):
    bad = tmp_path / "bad.pec"
    bad.write_text("fluent Lamp takes-values {off, off}\n")
    assert main(["validate", str(bad)]) == 1
    assert "bad.pec:1:" in capsys.readouterr().err
    assert main(["project", COIN, "--query", "Lamp=on"]) == 2
    assert main(["project", COIN, "--query", "Lamp=dim@2"]) == 2
    assert main(["project", COIN, "--query", "Lamp=on@9"]) == 1
    assert main(["project", COIN]) == 2
    assert main(["validate", str(tmp_path / "missing.pec")]) == 1


def test_compile_json(tmp_path):
    out = tmp_path / "mdp.json"
    assert main(["compile", COIN, "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == "pec-mdp/1" and doc["n_states"] == 2 and doc["situations"] == [[], ["Flip"]]
    assert doc["instant_map"] == {"0": 0, "1": 1, "2": 2, "3": 3}


def test_plan_decompile_simulate(tmp_path, capsys):
    reward = tmp_path / "reward.json"
    reward.write_text(json.dumps({"goal": "Lamp=on", "action_costs": {"Flip": 0.1}}))
    policy = tmp_path / "policy.json"
    assert main(["plan", COIN, "--reward", str(reward), "-o", str(policy)]) == 0
    doc = json.loads(policy.read_text())
    assert doc["format"] == "pec-policy/1" and doc["expected_return"] == pytest.approx(0.9 * 3 - 0.1, abs=1e-12)

    out = tmp_path / "decompiled.pec"
    assert main(["decompile", COIN, "--policy", str(policy), "--prune", "--minimize", "--check", "-o", str(out)]) == 0
    assert "Flip performed-at 1 with-prob 1.0\n" in out.read_text()

    capsys.readouterr()
    assert main(["simulate", COIN, "--episodes", "1000", "--seed", "42", "--policy", str(policy),
                 "--reward", str(reward), "--query", "Lamp=on@2", "--format", "json"]) == 0
    sim = json.loads(capsys.readouterr().out)
    assert sim["episodes"] == 1000 and sim["seed"] == 42 and 0.8 < sim["query"]["estimate"] < 1.0


def test_plan_discounted(tmp_path, capsys):
    reward = tmp_path / "reward.json"
    reward.write_text(json.dumps({"goal": {"Lamp": "on"}, "discount": 0.9}))
    assert main(["plan", COIN, "--reward", str(reward), "--horizon-mode", "discounted"]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "stationary"
    reward.write_text(json.dumps({"goal": {"Lamp": "on"}}))
    assert main(["plan", COIN, "--reward", str(reward), "--horizon-mode", "discounted"]) == 2
