import pytest
from hypothesis import given, strategies as st

from bchandover.scenario import (Model, ParseError, Scenario, ValidationError, dump_scenario, load_scenario,
                                 parse_scenario)


def test_defaults():
    s = Scenario()
    assert (s.cells, s.controllers, s.switches, s.users, s.speed) == (30, 30, 90, 600, 5.0)
    assert (s.M, s.N, s.duration, s.requests, s.transactions) == (32, 16, 600.0, 2000, 1200)
    assert s.aps_per_cell == 3 and s.model is Model.PROPOSED


def test_parse_sections_and_comments():
    s = parse_scenario("# hi\nseed = 3\nmodel = PowBased\n[mobility]\nusers = 12  # few\n[key_timing]\n"
                       "tcp_candidates = 1,2.5\n")
    assert s.seed == 3 and s.model is Model.POW_BASED and s.users == 12
    assert s.tcp_candidates == (1.0, 2.5)


@pytest.mark.parametrize("text,line", [
    ("seed = 1\nbogus = 2\n", 2),
    ("[mobility]\nseed = 1\n", 2),
    ("\n\n[nowhere]\n", 3),
    ("seed\n", 1),
    ("seed = 1\nseed = 2\n", 2),
    ("[topology\n", 1),
    ("seed = 1.5\n", 1),
    ("model = Quantum\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_scenario(text)
    assert exc.value.line == line and str(exc.value).startswith(f"line {line}:")


@pytest.mark.parametrize("text,field", [
    ("duration = 0\n", "duration"),
    ("[topology]\ncontrollers = 29\n", "controllers"),
    ("[topology]\nswitches = 91\n", "switches"),
    ("[attacks]\ndup_threshold = 1\n", "dup_threshold"),
    ("crypto = rot13\n", "crypto"),
    ("[mobility]\nusers = 2\n[attacks]\nmalicious_mus = 3\n", "malicious_mus"),
])
def test_validation_names_field(text, field):
    with pytest.raises(ValidationError) as exc:
        parse_scenario(text)
    assert exc.value.field == field


@given(seed=st.integers(0, 10**6), users=st.integers(1, 5000), speed=st.floats(0.1, 100.0),
       model=st.sampled_from(list(Model)), tcp=st.lists(st.floats(1.0, 1e5), min_size=1, max_size=4))
def test_dump_round_trip(seed, users, speed, model, tcp):
    s = Scenario().with_overrides(seed=seed, users=users, speed=speed, model=model, tcp_candidates=tcp)
    assert parse_scenario(dump_scenario(s)) == s


def test_load_from_file(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("seed = 9\n")
    assert load_scenario(p).seed == 9


def test_overrides_coerce_strings():
    s = Scenario().with_overrides(users="40", model="NetworkBased")
    assert s.users == 40 and s.model is Model.NETWORK_BASED
    with pytest.raises(ValidationError):
        Scenario().with_overrides(users=0)
