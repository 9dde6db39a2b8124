"""
Unit tests for record and table I/O.

Tests cover:
- Measurement records with sidecar headers
- Truth records attached on load
- Size and header validation errors
- Carrier records
- CSV tables and PSD files
"""

import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from optomech.errors import RecordIOError  # noqa: E402
from optomech.records import (  # noqa: E402
    RecordHeader,
    load_measurement,
    read_csv,
    read_header,
    read_psd_csv,
    read_record,
    save_carrier,
    save_measurement,
    write_csv,
    write_matrix_csv,
    write_record,
)
from optomech.simulator import CarrierRecord, MeasurementRecord  # noqa: E402


class TestRawRecords(unittest.TestCase):
    """Test header and sample files."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_header_and_data_written_together(self):
        data = np.arange(12.0).reshape(6, 2)
        header_file = write_record(self.test_dir / "rec", data, RecordHeader(["a", "b"], 0, 1.0e3))
        self.assertEqual(header_file.name, "rec.json")
        self.assertTrue((self.test_dir / "rec.f64").is_file(), "Sample file should sit next to the header")

        header, loaded = read_record(header_file)
        self.assertEqual(header.n_samples, 6)
        self.assertEqual(header.data_file, "rec.f64")
        np.testing.assert_array_equal(loaded, data)

    def test_channel_count_mismatch(self):
        with self.assertRaises(RecordIOError):
            write_record(self.test_dir / "rec.json", np.zeros((4, 3)), RecordHeader(["a", "b"], 0, 1.0))

    def test_truncated_data_detected(self):
        header_file = write_record(self.test_dir / "rec.json", np.zeros((10, 2)), RecordHeader(["a", "b"], 0, 1.0))
        data_file = self.test_dir / "rec.f64"
        data_file.write_bytes(data_file.read_bytes()[:-8])
        with self.assertRaises(RecordIOError) as ctx:
            read_record(header_file)
        self.assertIsNotNone(ctx.exception.hint)

    def test_missing_header(self):
        with self.assertRaises(RecordIOError):
            read_header(self.test_dir / "absent.json")

    def test_invalid_header(self):
        path = self.test_dir / "bad.json"
        path.write_text(json.dumps({"channels": ["a"]}))
        with self.assertRaises(RecordIOError):
            read_header(path)


class TestDomainRecords(unittest.TestCase):
    """Test measurement and carrier records."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_measurement_with_truth(self):
        rng = np.random.default_rng(0)
        record = MeasurementRecord(
            i_x=rng.standard_normal(50),
            i_y=rng.standard_normal(50),
            sample_rate=2.0e5,
            demod_frequency=1.1e6,
            truth=rng.standard_normal((50, 4)),
            meta={"seed": 4, "offsets_rad_s": np.array([0.0, 1.5])},
        )
        written = save_measurement(record, self.test_dir / "record.json")
        self.assertEqual([p.name for p in written], ["record.json", "record_truth.json"])

        loaded = load_measurement(self.test_dir / "record.json")
        np.testing.assert_array_equal(loaded.i_x, record.i_x)
        np.testing.assert_array_equal(loaded.truth, record.truth)
        self.assertEqual(loaded.demod_frequency, 1.1e6)
        self.assertEqual(loaded.meta["offsets_rad_s"], [0.0, 1.5])
        self.assertEqual(read_header(written[1]).channels, ["X1", "Y1", "X2", "Y2"])

    def test_measurement_without_truth(self):
        record = MeasurementRecord(i_x=np.ones(8), i_y=np.zeros(8), sample_rate=1.0)
        self.assertEqual(len(save_measurement(record, self.test_dir / "r.json")), 1)
        self.assertIsNone(load_measurement(self.test_dir / "r.json").truth)

    def test_carrier_record(self):
        samples = np.sin(np.arange(100) * 0.1)
        save_carrier(CarrierRecord(samples=samples, sample_rate=4.0e6, carrier_frequency=1.0e6), self.test_dir / "c")
        loaded = load_measurement(self.test_dir / "c.json")
        self.assertIsInstance(loaded, CarrierRecord)
        self.assertEqual(loaded.carrier_frequency, 1.0e6)
        np.testing.assert_array_equal(loaded.samples, samples)

    def test_unsupported_kind(self):
        write_record(self.test_dir / "t.json", np.zeros((3, 2)), RecordHeader(["X1", "Y1"], 0, 1.0, kind="truth"))
        with self.assertRaises(RecordIOError):
            load_measurement(self.test_dir / "t.json")


class TestTables(unittest.TestCase):
    """Test CSV output tables."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_csv_columns(self):
        path = write_csv(self.test_dir / "t.csv", {"f_hz": [1.0, 2.0], "psd": np.array([0.1, 0.2])})
        table = read_csv(path)
        self.assertEqual(list(table), ["f_hz", "psd"])
        np.testing.assert_array_equal(table["psd"], [0.1, 0.2])

    def test_unequal_columns(self):
        with self.assertRaises(RecordIOError):
            write_csv(self.test_dir / "t.csv", {"a": [1.0], "b": [1.0, 2.0]})

    def test_psd_table_with_weight(self):
        path = write_csv(self.test_dir / "p.csv", {"freq": [1.0, 2.0], "S": [3.0, 4.0], "weight": [1.0, 0.5]})
        f, psd, weight = read_psd_csv(path)
        np.testing.assert_array_equal(f, [1.0, 2.0])
        np.testing.assert_array_equal(weight, [1.0, 0.5])
        _, _, none = read_psd_csv(write_csv(self.test_dir / "q.csv", {"freq": [1.0], "S": [3.0]}))
        self.assertIsNone(none)

    def test_non_numeric_csv(self):
        path = self.test_dir / "x.csv"
        path.write_text("a,b\n1,zz\n")
        with self.assertRaises(RecordIOError):
            read_csv(path)

    def test_matrix_csv_layout(self):
        path = write_matrix_csv(self.test_dir / "m.csv", np.eye(2), ["X1", "Y1"])
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "row,X1,Y1")
        self.assertEqual(lines[1], "X1,1.0,0.0")


if __name__ == "__main__":
    unittest.main()
