import json

import pytest

from clrnn.bench import BenchConfig, bench_forward, speedups, write_report


def test_records_pair_serial_and_parallel(tmp_path):
    records = bench_forward([BenchConfig(8, hidden=4, batch=2), BenchConfig(16, hidden=4, batch=2)], repeats=5)
    assert [r.model_kind for r in records] == ["serial-rnn", "cl-rnn"] * 2
    for r in records:
        assert r.repeats == 5 and r.median_s > 0 and r.stddev_s >= 0
    serial, parallel = records[0], records[1]
    assert parallel.speedup == pytest.approx(serial.median_s / parallel.median_s)
    assert parallel.parameters > serial.parameters
    assert set(speedups(records)) == {8, 16}
    report = write_report(tmp_path / "b.json", records)
    doc = json.loads((tmp_path / "b.json").read_text())
    assert doc == json.loads(json.dumps(report))
    assert doc["machine"]["cpu_count"] >= 1 and len(doc["records"]) == 4


def test_requires_five_repeats():
    with pytest.raises(ValueError):
        bench_forward([BenchConfig(4)], repeats=3)
