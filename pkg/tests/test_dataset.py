"""Dataset generation, packed format round trips, worker invariance."""

import json

import numpy as np
import pytest

from ucinfer.dataset import (SHED_TOL, Dataset, generate, load, record_dtype,
                             save)
from ucinfer.errors import DatasetFormatError
from ucinfer.forward import PriorConfig, prior_rng, sample_prior, simulate
from ucinfer.scuc import derive_startups
from ucinfer.system import instance_hash


class TestRecordLayout:
    def test_dtype_is_packed_little_endian(self):
        dt = record_dtype(8, 3, 3)
        assert dt.itemsize == (3 + 3 + 24 + 24) * 8 + 24 + 8 + 8
        assert dt["theta_c"].shape == (3,)
        assert dt["dispatch"].shape == (8, 3)
        assert dt["startup"].base == np.uint8
        assert dt["seed"] == np.dtype("<u8")


class TestGenerate:
    def test_records_match_single_simulations(self, single, prior):
        ds = generate(single, prior, 5, base_seed=40)
        assert len(ds) == 5
        assert np.array_equal(ds.seeds, np.arange(40, 45))
        for i, seed in enumerate(range(40, 45)):
            theta = sample_prior(prior, single.n_gens, prior_rng(seed))
            out = simulate(single, theta, prior, seed)
            assert ds.records["theta_c"][i] == pytest.approx(theta.marginal)
            assert ds.records["theta_s"][i] == pytest.approx(theta.startup)
            assert ds.dispatch[i].tobytes() == \
                out.schedule.dispatch.tobytes()
            assert np.array_equal(ds.startup[i], out.schedule.startup)
            assert ds.demand[i].tobytes() == out.demand.tobytes()
            assert ds.shed_total[i] == out.schedule.shed.sum()

    def test_meta_fields(self, single, prior):
        ds = generate(single, prior, 3, base_seed=7)
        assert ds.meta["instance"] == "single"
        assert ds.meta["instance_hash"] == instance_hash(single)
        assert ds.meta["n_records"] == 3
        assert ds.meta["base_seed"] == 7
        assert ds.meta["prior"] == prior.to_dict()

    def test_drop_shed_filters(self, single, prior):
        full = generate(single, prior, 40, base_seed=0)
        kept = generate(single, prior, 40, base_seed=0, drop_shed=True)
        mask = full.shed_total <= SHED_TOL
        assert len(kept) == mask.sum()
        assert kept.records.tobytes() == full.records[mask].tobytes()
        assert kept.meta["n_requested"] == 40
        assert kept.meta["drop_shed"] is True

    def test_jobs_do_not_change_bytes(self, single, prior):
        a = generate(single, prior, 16, base_seed=3, jobs=1)
        b = generate(single, prior, 16, base_seed=3, jobs=3)
        assert a.records.tobytes() == b.records.tobytes()

    def test_bad_n_rejected(self, single, prior):
        with pytest.raises(ValueError):
            generate(single, prior, 0, base_seed=0)


class TestSaveLoad:
    def test_round_trip_byte_identity(self, single, prior, tmp_path):
        ds = generate(single, prior, 6, base_seed=11)
        p = tmp_path / "d.ds"
        save(ds, p)
        back = load(p)
        assert back.meta == ds.meta
        assert back.records.tobytes() == ds.records.tobytes()
        save(back, tmp_path / "d2.ds")
        assert (tmp_path / "d.ds").read_bytes() == \
            (tmp_path / "d2.ds").read_bytes()

    def test_header_is_one_json_line(self, single, prior, tmp_path):
        ds = generate(single, prior, 2, base_seed=0)
        p = tmp_path / "d.ds"
        save(ds, p)
        with open(p, "rb") as f:
            header = f.readline()
        assert json.loads(header) == ds.meta

    def test_not_a_dataset(self, tmp_path):
        p = tmp_path / "junk.ds"
        p.write_bytes(b'{"format":"other"}\n')
        with pytest.raises(DatasetFormatError):
            load(p)
        p.write_bytes(b"\x00\x01garbage\n")
        with pytest.raises(DatasetFormatError):
            load(p)

    def test_truncated_body(self, single, prior, tmp_path):
        ds = generate(single, prior, 3, base_seed=0)
        p = tmp_path / "d.ds"
        save(ds, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-5])
        with pytest.raises(DatasetFormatError):
            load(p)

    def test_version_gate(self, single, prior, tmp_path):
        ds = generate(single, prior, 1, base_seed=0)
        meta = dict(ds.meta, version=99)
        p = tmp_path / "d.ds"
        with open(p, "wb") as f:
            f.write((json.dumps(meta) + "\n").encode())
            f.write(ds.records.tobytes())
        with pytest.raises(DatasetFormatError):
            load(p)


class TestOutcome:
    def test_outcome_reconstruction(self, single, prior):
        ds = generate(single, prior, 4, base_seed=21)
        for i in range(4):
            out = ds.outcome(i)
            assert out.demand.tobytes() == ds.demand[i].tobytes()
            assert out.schedule.dispatch.tobytes() == \
                ds.dispatch[i].tobytes()
            v = out.schedule.commitment
            assert np.array_equal(v, (ds.dispatch[i] > 0).astype(np.int8))
            assert np.array_equal(out.schedule.startup, ds.startup[i])
            assert np.isnan(out.schedule.total_cost)

    def test_commitment_consistent_with_startups(self, mini3, prior):
        # recovered commitment must reproduce the stored start indicators
        # whenever the day had full availability (dispatch > 0 iff on)
        ds = generate(mini3, PriorConfig(p_gen_out=0.0, p_line_out=0.0),
                      8, base_seed=50)
        v_init = np.array([g.v_init for g in mini3.generators])
        for i in range(len(ds)):
            v = ds.outcome(i).schedule.commitment
            y, _ = derive_startups(v, v_init)
            assert np.array_equal(y, ds.startup[i].astype(np.int8))


class TestBigFixture:
    def test_cached_small_dataset_sane(self, mini3_ds_small, prior):
        ds = mini3_ds_small
        assert len(ds) == 192
        assert ds.meta["instance"] == "mini3"
        th = ds.theta
        assert th.shape == (192, 6)
        assert np.all((th[:, :3] >= prior.c_min) & (th[:, :3] <= prior.c_max))
        assert np.all((th[:, 3:] >= prior.s_min) & (th[:, 3:] <= prior.s_max))
        assert np.all(ds.dispatch >= 0)
        assert np.all(ds.demand > 0)
