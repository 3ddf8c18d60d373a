"""System file parsing, validation rules and demand sampling."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ucinfer.errors import SystemParseError, SystemValidationError
from ucinfer.system import (deterministic_demand, instance_hash,
                            load_bundled, load_system, sample_demand,
                            validate)

from .oracles.instances import make_instance, random_tiny_doc


def parse_doc(doc):
    return load_system(io.StringIO(json.dumps(doc)))


class TestBundled:
    @pytest.mark.parametrize("name", ["mini3", "single", "rts96_shaped"])
    def test_bundled_systems_are_clean(self, name):
        inst = load_bundled(name)
        assert validate(inst) == []
        assert inst.name == name

    def test_unknown_bundled_name(self):
        with pytest.raises(FileNotFoundError):
            load_bundled("nope")

    def test_mini3_shape(self, mini3):
        assert (mini3.horizon, mini3.n_gens, mini3.n_buses,
                mini3.n_lines) == (8, 3, 3, 3)

    def test_hash_stable_across_loads(self):
        a = instance_hash(load_bundled("mini3"))
        b = instance_hash(load_bundled("mini3"))
        assert a == b
        assert a != instance_hash(load_bundled("single"))


class TestParser:
    def test_not_json(self):
        with pytest.raises(SystemParseError):
            load_system(io.StringIO("not json {"))

    def test_top_level_must_be_object(self):
        with pytest.raises(SystemParseError):
            load_system(io.StringIO("[1, 2]"))

    def test_missing_required_key(self):
        doc = random_tiny_doc(np.random.default_rng(0))
        del doc["horizon"]
        with pytest.raises(SystemParseError):
            parse_doc(doc)

    def test_scalar_shares_tiled_over_horizon(self):
        doc = random_tiny_doc(np.random.default_rng(1))
        inst = parse_doc(doc)
        assert inst.load.shares.shape == (inst.horizon, inst.n_buses)
        assert np.allclose(inst.load.shares.sum(axis=1), 1.0)

    def test_matrix_shares_accepted(self):
        doc = random_tiny_doc(np.random.default_rng(2))
        T, N = doc["horizon"], len(doc["buses"])
        doc["load"]["shares"] = [doc["load"]["shares"]] * T
        inst = parse_doc(doc)
        assert inst.load.shares.shape == (T, N)

    def test_validation_failure_collects_all(self):
        doc = random_tiny_doc(np.random.default_rng(3))
        doc["generators"][0]["g_min"] = -5.0
        doc["generators"][0]["ramp_up"] = 0.0
        with pytest.raises(SystemValidationError) as exc:
            parse_doc(doc)
        assert len(exc.value.violations) >= 2


class TestValidationRules:
    def _base(self):
        return random_tiny_doc(np.random.default_rng(42))

    def _violations(self, doc):
        with pytest.raises(SystemValidationError) as exc:
            parse_doc(doc)
        return "\n".join(exc.value.violations)

    def test_bad_shares_sum(self):
        doc = self._base()
        doc["load"]["shares"] = [0.9] + [0.0] * (len(doc["buses"]) - 1)
        doc["load"]["shares"][0] = 0.9
        assert "sum to 1" in self._violations(doc)

    def test_slack_out_of_range(self):
        doc = self._base()
        doc["slack_bus"] = 99
        assert "slack_bus" in self._violations(doc)

    def test_offline_gen_with_output(self):
        doc = self._base()
        doc["generators"][0]["v_init"] = 0
        doc["generators"][0]["g_init"] = 10.0
        assert "offline" in self._violations(doc)

    def test_committed_gen_outside_band(self):
        doc = self._base()
        g = doc["generators"][0]
        g["v_init"] = 1
        g["g_init"] = g["g_max"] + 50.0
        assert "g_init" in self._violations(doc)

    def test_disconnected_network(self):
        doc = self._base()
        while len(doc["buses"]) < 2:
            doc["buses"].append({"name": "island"})
        doc["lines"] = []
        assert "disconnected" in self._violations(doc)

    def test_profile_length_mismatch(self):
        doc = self._base()
        doc["load"]["base_profile"] = doc["load"]["base_profile"][:-1]
        assert "base_profile" in self._violations(doc)

    def test_nonpositive_profile(self):
        doc = self._base()
        doc["load"]["base_profile"][0] = 0.0
        assert "base_profile" in self._violations(doc)

    def test_min_up_below_one(self):
        doc = self._base()
        doc["generators"][0]["min_up"] = 0
        assert "min_up" in self._violations(doc)


class TestDemand:
    def test_deterministic_demand_is_profile_times_shares(self, mini3):
        d = deterministic_demand(mini3.load)
        assert d.shape == (mini3.horizon, mini3.n_buses)
        assert np.allclose(d.sum(axis=1), mini3.load.base_profile)

    def test_zero_noise_sample_equals_deterministic(self, mini3):
        load = mini3.load.__class__(
            base_profile=mini3.load.base_profile,
            shares=mini3.load.shares, sigma_load=0.0, sigma_share=0.0)
        d = sample_demand(load, np.random.default_rng(5))
        assert d.tobytes() == deterministic_demand(load).tobytes()

    def test_sample_reproducible_by_seed(self, mini3):
        a = sample_demand(mini3.load, np.random.default_rng(9))
        b = sample_demand(mini3.load, np.random.default_rng(9))
        assert a.tobytes() == b.tobytes()

    def test_sample_nonnegative_and_consistent(self, mini3):
        rng = np.random.default_rng(10)
        for _ in range(50):
            d = sample_demand(mini3.load, rng)
            assert np.all(d >= 0)
            assert d.shape == (mini3.horizon, mini3.n_buses)

    def test_sample_level_noise_magnitude(self, mini3):
        # per-period totals should scatter like sigma_load around base
        rng = np.random.default_rng(11)
        ratios = []
        for _ in range(400):
            d = sample_demand(mini3.load, rng)
            ratios.append(d.sum(axis=1) / mini3.load.base_profile - 1.0)
        r = np.concatenate(ratios)
        assert abs(r.mean()) < 0.005
        assert abs(r.std() - mini3.load.sigma_load) < 0.005


class TestHash:
    def test_hash_sensitive_to_every_block(self):
        doc = random_tiny_doc(np.random.default_rng(8))
        base = instance_hash(parse_doc(doc))
        tweaked = json.loads(json.dumps(doc))
        tweaked["generators"][0]["g_max"] += 1.0
        assert instance_hash(parse_doc(tweaked)) != base
        tweaked = json.loads(json.dumps(doc))
        tweaked["load"]["sigma_load"] = 0.123
        assert instance_hash(parse_doc(tweaked)) != base

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_docs_parse_and_validate(self, seed):
        doc = random_tiny_doc(np.random.default_rng(seed))
        inst = make_instance(doc)
        assert validate(inst) == []
        assert instance_hash(inst) == instance_hash(parse_doc(doc))
