import numpy as np
import pytest

from impact_denoise.core_types import (
    ComponentId,
    ImpactDataset,
    ImpactRecord,
    KinematicsTrace,
    Split,
    TRACE_CSV_HEADER,
    component_series,
    magnitude_trace,
    partition,
    read_dataset,
    read_trace_csv,
    write_dataset,
    write_trace_csv,
)


def trace_from_columns(**cols):
    length = len(next(iter(cols.values())))
    data = np.zeros((length, 6))
    names = ["lin_acc_x", "lin_acc_y", "lin_acc_z", "ang_vel_x", "ang_vel_y", "ang_vel_z"]
    for name, values in cols.items():
        data[:, names.index(name)] = values
    return KinematicsTrace(data)


def make_records(n, length=120, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        samples = rng.normal(size=(length, 6))
        records.append(ImpactRecord(impact_id=f"imp_{i:03d}", noisy=KinematicsTrace(samples)))
    return records


class TestKinematicsTrace:
    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(ValueError):
            KinematicsTrace(np.zeros((5, 4)))
        with pytest.raises(ValueError):
            KinematicsTrace(np.zeros((0, 6)))
        bad = np.zeros((5, 6))
        bad[2, 3] = np.nan
        with pytest.raises(ValueError):
            KinematicsTrace(bad)
        with pytest.raises(ValueError):
            KinematicsTrace(np.zeros((5, 6)), sample_rate_hz=0.0)

    def test_immutable_samples(self):
        trace = KinematicsTrace(np.zeros((5, 6)))
        with pytest.raises(ValueError):
            trace.samples[0, 0] = 1.0

    def test_times(self):
        trace = KinematicsTrace(np.zeros((3, 6)), sample_rate_hz=1000.0, t0_s=0.5)
        assert np.allclose(trace.times(), [0.5, 0.501, 0.502])


class TestMagnitude:
    def test_three_four_five(self):
        trace = trace_from_columns(
            lin_acc_x=np.full(10, 3.0), lin_acc_y=np.full(10, 4.0)
        )
        assert np.allclose(magnitude_trace(trace, "lin_acc"), 5.0)

    def test_zero_trace(self):
        trace = KinematicsTrace(np.zeros((7, 6)))
        assert np.all(magnitude_trace(trace, "lin_acc") == 0.0)
        assert np.all(magnitude_trace(trace, "ang_vel") == 0.0)

    def test_unit_symmetry(self):
        trace = trace_from_columns(
            ang_vel_x=np.ones(4), ang_vel_y=np.ones(4), ang_vel_z=np.ones(4)
        )
        assert np.allclose(magnitude_trace(trace, "ang_vel"), np.sqrt(3.0))

    def test_dominates_single_channels(self):
        rng = np.random.default_rng(3)
        trace = KinematicsTrace(rng.normal(size=(50, 6)))
        mag = magnitude_trace(trace, "lin_acc")
        for c in range(3):
            assert np.all(mag >= np.abs(trace.samples[:, c]) - 1e-12)

    def test_component_series_magnitudes(self):
        rng = np.random.default_rng(4)
        trace = KinematicsTrace(rng.normal(size=(20, 6)))
        assert np.allclose(
            component_series(trace, ComponentId.ANG_VEL_MAG),
            magnitude_trace(trace, "ang_vel"),
        )
        assert np.allclose(
            component_series(trace, ComponentId.LIN_ACC_Z), trace.samples[:, 2]
        )


class TestComponentId:
    def test_six_trainable_channels(self):
        channels = [c.channel for c in ComponentId if not c.is_magnitude]
        assert sorted(channels) == list(range(6))

    def test_magnitudes_have_no_channel(self):
        with pytest.raises(ValueError):
            ComponentId.LIN_ACC_MAG.channel


class TestPartition:
    def test_paper_counts(self):
        ds = partition(make_records(163), seed=1)
        assert ds.counts() == {Split.TRAIN: 113, Split.VAL: 25, Split.TEST: 25}

    def test_three_records(self):
        ds = partition(make_records(3), seed=5)
        assert ds.counts() == {Split.TRAIN: 1, Split.VAL: 1, Split.TEST: 1}

    def test_deterministic(self):
        records = make_records(10)
        a = partition(records, seed=42)
        b = partition(records, seed=42)
        assert a.split == b.split

    def test_depends_only_on_ids_and_seed(self):
        records = make_records(12, seed=0)
        shuffled = list(reversed(records))
        different_payload = [
            ImpactRecord(r.impact_id, KinematicsTrace(np.ones((30, 6))))
            for r in records
        ]
        base = partition(records, seed=9).split
        assert partition(shuffled, seed=9).split == base
        assert partition(different_payload, seed=9).split == base

    def test_rejects_too_few(self):
        with pytest.raises(ValueError):
            partition(make_records(2), seed=0)

    def test_every_id_in_exactly_one_split(self):
        ds = partition(make_records(29), seed=3)
        assert sorted(ds.split.keys()) == [r.impact_id for r in ds.records]


class TestDatasetInvariants:
    def test_duplicate_ids_rejected(self):
        records = make_records(3)
        records[1] = ImpactRecord("imp_000", records[1].noisy)
        with pytest.raises(ValueError):
            ImpactDataset(records=tuple(records), split={}, rng_seed=0)

    def test_split_must_cover_records(self):
        records = make_records(3)
        split = {r.impact_id: Split.TRAIN for r in records[:2]}
        with pytest.raises(ValueError):
            ImpactDataset(records=tuple(records), split=split, rng_seed=0)


class TestTraceCsv:
    def test_header_is_bit_exact(self, tmp_path):
        trace = KinematicsTrace(np.zeros((2, 6)))
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        assert path.read_text().splitlines()[0] == TRACE_CSV_HEADER

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        trace = KinematicsTrace(rng.normal(size=(57, 6)), t0_s=0.25)
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        assert np.array_equal(back.samples, trace.samples)
        assert back.t0_s == trace.t0_s

    def test_rejects_wrong_rate(self, tmp_path):
        lines = [TRACE_CSV_HEADER]
        for i in range(5):
            lines.append(",".join([f"{i*0.002:.17g}"] + ["0"] * 6))
        path = tmp_path / "bad.csv"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="1 kHz"):
            read_trace_csv(path)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,ax\n0,1\n")
        with pytest.raises(ValueError, match="header"):
            read_trace_csv(path)


class TestManifest:
    def test_round_trip_with_reference_and_metadata(self, tmp_path):
        rng = np.random.default_rng(1)
        records = []
        for i in range(4):
            noisy = KinematicsTrace(rng.normal(size=(110, 6)))
            ref = KinematicsTrace(rng.normal(size=(110, 6))) if i % 2 == 0 else None
            records.append(
                ImpactRecord(
                    impact_id=f"imp_{i:03d}",
                    noisy=noisy,
                    reference=ref,
                    metadata={"location": "side", "impact_speed_mps": "4.20"},
                )
            )
        ds = partition(records, seed=2)
        manifest = write_dataset(ds, tmp_path)
        back = read_dataset(manifest)
        assert back.rng_seed == ds.rng_seed
        assert back.split == ds.split
        for orig, loaded in zip(
            sorted(ds.records, key=lambda r: r.impact_id),
            sorted(back.records, key=lambda r: r.impact_id),
        ):
            assert np.array_equal(orig.noisy.samples, loaded.noisy.samples)
            assert (orig.reference is None) == (loaded.reference is None)
            if orig.reference is not None:
                assert np.array_equal(orig.reference.samples, loaded.reference.samples)
            assert loaded.metadata == orig.metadata

    def test_manifest_schema(self, tmp_path):
        import json

        ds = partition(make_records(3), seed=2)
        manifest = write_dataset(ds, tmp_path)
        doc = json.loads(manifest.read_text())
        assert doc["format_version"] == 1
        assert doc["seed"] == 2
        entry = doc["records"][0]
        assert set(entry) == {
            "impact_id",
            "noisy_path",
            "reference_path",
            "split",
            "metadata",
        }
        assert entry["split"] in {"train", "val", "test"}
