import os
from fractions import Fraction
from pathlib import Path

import pytest

import fusion

DATA = Path(os.environ.get("FUSION_TEST_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))


def test_search_params_matches_table():
    plan = fusion.search_params(512, lambda_=40, beta_pub=100)
    assert (plan["B"], plan["T"]) == (5, 100)
    rows = fusion.parameter_table(40, 100, 3, 8)
    assert [(r["B"], r["R"], r["T"]) for r in rows] == [
        (8, 2**3, 100), (7, 2**5, 100), (6, 2**7, 100),
        (5, 2**9, 100), (4, 2**13, 100), (3, 2**19, 100),
    ]


def test_exact_probabilities():
    assert fusion.prob_success(2, 2, 2, 1, exact=True) == Fraction(2, 15)
    assert fusion.enumerate_win_prob(2, 2, 2, 1) == Fraction(2, 15)
    assert fusion.claim1_bound(1, 1, 1, exact=True) == Fraction(1, 2)
    assert fusion.amortized_cost(512, 5, 100) == Fraction(2660, 512)


def test_game_estimate():
    est = fusion.estimate_win_prob(2, 2, 2, 1, trials=20000, seed=3)
    assert abs(est["estimate"] - 2 / 15) < 4 * est["std_error"] + 1e-9
    with pytest.raises(ValueError):
        fusion.estimate_win_prob(2, 2, 2, 1, strategy="bogus")


def test_defense():
    out = fusion.reverse_sigmoid_defense([0.7, 0.3], 0.3, 2.0)
    assert abs(sum(out) - 1.0) < 1e-9
    assert fusion.reverse_sigmoid_defense([0.7, 0.3], 0.0, 2.0) == [0.7, 0.3]


def test_model_and_run():
    model = fusion.Model.load(str(DATA / "model.json"))
    assert model.input_dim == 4 and model.num_classes == 3
    assert 0 <= model.predict([0.0, 0.5, -0.5, 1.0]) < 3

    args = (DATA / "model.json", DATA / "queries.csv", DATA / "publics.csv")
    honest = fusion.run(*args, seed=4)
    assert honest["verdict"] == "Accept"
    assert len(honest["labels"]) == honest["plan"]["R"]
    assert fusion.run(*args, seed=4, backend="two-party")["labels"] == honest["labels"]

    cheat = fusion.run(*args, seed=4, adversary="corrupt:1")
    assert cheat["verdict"] == "Abort"
    assert cheat["labels"] is None


def test_errors_map_to_python():
    with pytest.raises(Exception):
        fusion.Model.load(str(DATA / "missing.json"))
    with pytest.raises(ValueError):
        fusion.claim1_bound(0, 1, 1)
