import json
import random
import string

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fabula.canonical import canonical_json
from fabula.errors import CassetteMiss, ProviderError, ProviderExhausted, RemoteError
from fabula.lm import (
    EchoHashProvider,
    GenDefaults,
    PromptRequest,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    ScriptedProvider,
    match_choice,
    parse_float,
    provider_from_config,
    request_key,
    sample_choice,
    sample_float,
    sample_text,
)

from test_canonical import oracle_fnv1a64


# -- reference float scanner (grammar: sign? (digits[.digits?] | .digits) exp?)


def oracle_first_float(text: str):
    """Character-by-character scan for the first maximal numeral."""
    i = 0
    n = len(text)
    while i < n:
        j = i
        k = j
        if k < n and text[k] in "+-":
            k += 1
        int_digits = 0
        while k < n and text[k].isdigit() and text[k] in string.digits:
            k += 1
            int_digits += 1
        frac_digits = 0
        if k < n and text[k] == ".":
            k += 1
            while k < n and text[k] in string.digits:
                k += 1
                frac_digits += 1
        if int_digits == 0 and frac_digits == 0:
            i += 1
            continue
        if int_digits == 0 and text[j] in "+-":
            # sign directly followed by "." needs fractional digits
            if text[j + 1] == "." and frac_digits == 0:
                i += 1
                continue
        end = k
        if k < n and text[k] in "eE":
            m = k + 1
            if m < n and text[m] in "+-":
                m += 1
            exp_digits = 0
            while m < n and text[m] in string.digits:
                m += 1
                exp_digits += 1
            if exp_digits:
                end = m
        return float(text[j:end])
    return None


def test_parse_float_spec_example():
    assert parse_float("-3e2 then 7") == -300.0
    assert oracle_first_float("-3e2 then 7") == -300.0


def test_parse_float_cases():
    assert parse_float("about 4.5 units") == 4.5
    assert parse_float(".5") == 0.5
    assert parse_float("+2") == 2.0
    assert parse_float("1e") == 1.0
    assert parse_float("no numbers here") is None
    assert parse_float("") is None


@given(st.text(alphabet="0123456789.eE+- xyz", max_size=24))
def test_parse_float_matches_reference_scanner(text):
    assert parse_float(text) == oracle_first_float(text)


# -- choice matching --------------------------------------------------------


def test_match_choice_exact_casefold():
    options = ("North", "South", "East")
    assert match_choice("north", options) == 0
    assert match_choice("  SOUTH  ", options) == 1
    assert match_choice("no such", options) is None


def test_match_choice_numerals_are_one_based():
    options = ("a", "b", "c")
    assert match_choice("1", options) == 0
    assert match_choice("3", options) == 2
    assert match_choice("0", options) is None
    assert match_choice("4", options) is None


def test_match_choice_rejects_substrings():
    assert match_choice("nor", ("north", "south")) is None
    assert match_choice("north by northwest", ("north", "south")) is None


# -- providers ---------------------------------------------------------------


def test_scripted_provider_pops_in_order_then_exhausts():
    provider = ScriptedProvider(["one", "two"])
    req = provider.make_request("p", seed=1)
    assert provider.complete(req).text == "one"
    assert provider.complete(req).text == "two"
    assert provider.remaining == 0
    with pytest.raises(ProviderExhausted):
        provider.complete(req)


def test_scripted_provider_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(["a", "b"]), encoding="utf-8")
    provider = ScriptedProvider.from_file(path)
    assert provider.remaining == 2
    lines = tmp_path / "script.txt"
    lines.write_text("x\ny\nz\n", encoding="utf-8")
    provider = ScriptedProvider.from_file(lines)
    assert provider.remaining == 3


def test_echo_hash_formula_against_oracle():
    provider = EchoHashProvider()
    rng = random.Random(4242)
    for _ in range(1000):
        text = "".join(rng.choice(string.printable) for _ in range(rng.randrange(1, 40)))
        seed = rng.randrange(2**63)
        req = provider.make_request(text, seed=seed)
        expected = "RESP-" + format(oracle_fnv1a64(text.encode("utf-8")) ^ seed, "016x")
        got = provider.complete(req)
        assert got.text == expected
        assert provider.complete(req).text == expected


def test_request_key_is_canonical_request_hash():
    req = PromptRequest("hello", max_tokens=10, temperature=0.5, stop=("a",), seed=3)
    expected = format(oracle_fnv1a64(canonical_json(
        {"text": "hello", "max_tokens": 10, "temperature": 0.5,
         "stop": ["a"], "seed": 3}).encode("utf-8")), "016x")
    assert request_key(req) == expected


# -- cassettes ----------------------------------------------------------------


def test_record_then_replay_round_trip(tmp_path):
    cassette = tmp_path / "c.jsonl"
    recorder = RecordingProvider(ScriptedProvider(["alpha", "beta"]), cassette)
    req1 = recorder.make_request("first prompt", seed=1)
    req2 = recorder.make_request("second prompt", seed=2)
    assert recorder.complete(req1).text == "alpha"
    assert recorder.complete(req2).text == "beta"
    recorder.close()

    replay = ReplayProvider(cassette)
    assert replay.complete(req2).text == "beta"
    assert replay.complete(req1).text == "alpha"


def test_replay_repeated_identical_requests_fifo(tmp_path):
    cassette = tmp_path / "c.jsonl"
    recorder = RecordingProvider(ScriptedProvider(["first", "second"]), cassette)
    req = recorder.make_request("same prompt", seed=9)
    recorder.complete(req)
    recorder.complete(req)
    recorder.close()

    replay = ReplayProvider(cassette)
    assert replay.complete(req).text == "first"
    assert replay.complete(req).text == "second"
    with pytest.raises(CassetteMiss):
        replay.complete(req)


def test_replay_misses_unknown_request(tmp_path):
    cassette = tmp_path / "c.jsonl"
    recorder = RecordingProvider(ScriptedProvider(["x"]), cassette)
    recorder.complete(recorder.make_request("known", seed=1))
    recorder.close()
    replay = ReplayProvider(cassette)
    with pytest.raises(CassetteMiss):
        replay.complete(replay.make_request("unknown", seed=1))


def test_cassette_preserves_provider_and_attempts(tmp_path, stub_lm_server):
    url, handler = stub_lm_server
    handler.failures.extend([503, 503])
    cassette = tmp_path / "c.jsonl"
    remote = RemoteProvider(url, "test-model", sleeper=lambda s: None)
    recorder = RecordingProvider(remote, cassette)
    req = recorder.make_request("retry me", seed=5)
    completion = recorder.complete(req)
    assert completion.attempts == 3
    recorder.close()

    entry = json.loads(cassette.read_text().splitlines()[0])
    assert entry["provider"] == "remote"
    assert entry["attempts"] == 3

    replay = ReplayProvider(cassette)
    replayed = replay.complete(req)
    assert replayed.text == completion.text
    assert replayed.provider == "remote"
    assert replayed.attempts == 3


# -- remote client -------------------------------------------------------------


def test_remote_retries_transient_errors(stub_lm_server):
    url, handler = stub_lm_server
    handler.failures.extend([503, 429])
    sleeps = []
    provider = RemoteProvider(url, "test-model", sleeper=sleeps.append)
    completion = provider.complete(provider.make_request("hello", seed=1))
    assert completion.attempts == 3
    assert completion.provider == "remote"
    assert sleeps == [0.5, 1.0]
    assert len(handler.calls) == 3


def test_remote_gives_up_after_max_attempts(stub_lm_server):
    url, handler = stub_lm_server
    handler.failures.extend([500] * 5)
    provider = RemoteProvider(url, "test-model", sleeper=lambda s: None)
    with pytest.raises(RemoteError) as excinfo:
        provider.complete(provider.make_request("hello", seed=1))
    assert excinfo.value.attempts == 5
    assert excinfo.value.status == 500


def test_remote_client_error_fails_immediately(stub_lm_server):
    url, handler = stub_lm_server
    handler.failures.append(401)
    provider = RemoteProvider(url, "test-model", sleeper=lambda s: None)
    with pytest.raises(RemoteError) as excinfo:
        provider.complete(provider.make_request("hello", seed=1))
    assert excinfo.value.status == 401
    assert excinfo.value.attempts == 1
    assert len(handler.calls) == 1


def test_remote_sends_expected_body(stub_lm_server):
    url, handler = stub_lm_server
    provider = RemoteProvider(url, "test-model", api_key="k",
                              defaults=GenDefaults(max_tokens=12, temperature=0.25))
    provider.complete(provider.make_request("ping", seed=6))
    body = handler.calls[0]
    assert body == {"model": "test-model",
                    "messages": [{"role": "user", "content": "ping"}],
                    "max_tokens": 12, "temperature": 0.25, "stop": [], "seed": 6}


def test_remote_requires_configuration():
    with pytest.raises(ProviderError):
        RemoteProvider("", "model")
    with pytest.raises(ProviderError):
        RemoteProvider("http://example.invalid", "")


# -- typed sampling -------------------------------------------------------------


def seeds_from(start=0):
    counter = iter(range(start, start + 1000))
    return lambda: next(counter)


def test_sample_choice_retry_budget_spec_example():
    provider = ScriptedProvider(["maybe", "maybe", "maybe", "maybe"])
    calls = []
    result = sample_choice(provider, "go where?", ("north", "south"),
                           seeds=seeds_from(), retries=3, on_call=lambda *a: calls.append(a))
    assert result.fallback and result.option == "north" and result.index == 0
    assert result.attempts == 4
    assert provider.remaining == 0


def test_sample_choice_succeeds_mid_retry():
    provider = ScriptedProvider(["nonsense", "south"])
    result = sample_choice(provider, "go where?", ("north", "south"),
                           seeds=seeds_from(), retries=3)
    assert not result.fallback
    assert result.option == "south"
    assert result.attempts == 2
    assert provider.remaining == 0


def test_sample_float_retry_budget_spec_example():
    provider = ScriptedProvider(["none", "none", "none", "none"])
    result = sample_float(provider, "how many?", seeds=seeds_from(), retries=3)
    assert result.fallback and result.value == 0.0
    assert result.attempts == 4


def test_sample_prompts_carry_instructions():
    provider = ScriptedProvider(["north"])
    prompts = []
    sample_choice(provider, "go where?", ("north", "south"), seeds=seeds_from(),
                  on_call=lambda req, completion: prompts.append(req.text))
    assert "go where?" in prompts[0]
    assert "1. north" in prompts[0]
    assert "2. south" in prompts[0]

    provider = ScriptedProvider(["4"])
    prompts = []
    sample_float(provider, "how many?", seeds=seeds_from(),
                 on_call=lambda req, completion: prompts.append(req.text))
    assert "how many?" in prompts[0]
    assert "single number" in prompts[0]


def test_sample_text_propagates_exhaustion():
    provider = ScriptedProvider([])
    with pytest.raises(ProviderExhausted):
        sample_text(provider, provider.make_request("anything", seed=0))


# -- config --------------------------------------------------------------------


def test_provider_from_config_kinds(tmp_path):
    assert isinstance(provider_from_config({"kind": "echo"}), EchoHashProvider)
    scripted = provider_from_config({"kind": "scripted", "responses": ["a"]})
    assert isinstance(scripted, ScriptedProvider) and scripted.remaining == 1

    cassette = tmp_path / "c.jsonl"
    rec = provider_from_config({"kind": "record", "cassette": str(cassette),
                                "inner": {"kind": "scripted", "responses": ["x"]}})
    assert isinstance(rec, RecordingProvider)
    rec.complete(rec.make_request("p", seed=0))
    rec.close()
    rep = provider_from_config({"kind": "replay", "cassette": "c.jsonl"},
                               base_dir=tmp_path)
    assert isinstance(rep, ReplayProvider)

    with pytest.raises(ProviderError):
        provider_from_config({"kind": "replay"})
    with pytest.raises(ProviderError):
        provider_from_config({"kind": "remote"})
