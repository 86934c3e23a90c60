import json
import os

import pytest

from clichain import run_chain, sdp
from sdp.bench import REPORT_FILES
from sdp.cli import main
from sdp.container import read_header


@pytest.fixture(scope="module")
def chain(tmp_path_factory, deterministic_env):
    work = tmp_path_factory.mktemp("chain")
    return str(work), run_chain(str(work), deterministic_env, seed=3, users=3)


def test_full_chain_produces_every_file(chain):
    work, produced = chain
    for path in produced:
        assert os.path.getsize(path) > 0, path
    metrics = json.load(open(os.path.join(work, "metrics.json")))
    det = metrics["tasks"]["detection"]
    assert metrics["split"] == "test" and det["n"] == metrics["n_rows"] > 0
    assert 0.0 <= det["top1"] <= 1.0


def test_bench_writes_all_six_reports(chain):
    work, _ = chain
    for name in REPORT_FILES:
        assert os.path.exists(os.path.join(work, "bench", name)), name


def test_inspect_prints_header(chain, capsys):
    work, _ = chain
    assert main(["inspect", os.path.join(work, "presence-u0.rec.sdpb")]) == 0
    header = json.loads(capsys.readouterr().out)
    assert header["schema_version"] == 1 and header["kind"] == "recording"


def test_pool_csv_matches_binary_table(chain):
    work, _ = chain
    header, _ = read_header(open(os.path.join(work, "presence-u1.h.sdpb"), "rb").read())
    lines = open(os.path.join(work, "presence-u1.h.csv")).read().splitlines()
    assert len(lines) == len(header["records"]) + 1
    assert "weight_0" in lines[0].split(",")


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["generate"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    out = tmp_path / "x.sdpb"
    assert main(["generate", "--kind", "presence", "--out", str(out)]) == 2
    assert "seed" in capsys.readouterr().err
    assert not out.exists()
    assert main(["generate", "--kind", "presence", "--seed-from-entropy", "--param", "duration=4",
                 "--out", str(out)]) == 0
    assert out.exists()


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "unknown": 1}))
    out = str(tmp_path / "x.sdpb")
    assert main(["generate", "--config", str(bad), "--seed", "1", "--out", out]) == 2
    assert main(["generate", "--config", str(tmp_path / "nope.json"), "--seed", "1", "--out", out]) == 2
    assert main(["generate", "--kind", "presence", "--seed", "1", "--param", "oops",
                 "--out", out]) == 2


def test_corrupt_container_exits_3(tmp_path, capsys):
    path = tmp_path / "r.sdpb"
    assert main(["generate", "--kind", "static-empty", "--seed", "2", "--param", "duration=4",
                 "--out", str(path)]) == 0
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF
    path.write_bytes(bytes(data))
    assert main(["window", str(path), "--out", str(tmp_path / "b.sdpb")]) == 3
    assert "checksum-mismatch" in capsys.readouterr().err
    path.write_bytes(b"JUNK" + bytes(data[4:]))
    assert main(["inspect", str(path)]) == 3
    assert main(["inspect", str(tmp_path / "missing.sdpb")]) == 3


def test_dry_run_touches_nothing(tmp_path, capsys):
    out = tmp_path / "r.sdpb"
    assert main(["generate", "--kind", "presence", "--seed", "5", "--dry-run", "--out", str(out)]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["command"] == "generate" and plan["seed"] == 5
    assert not out.exists()
    bench_dir = tmp_path / "bench"
    assert main(["bench", "--seeds", "1", "--repeats", "1", "--task", "presence", "--users", "4",
                 "--test-users", "1", "--dry-run", "--out", str(bench_dir)]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["bench"]["seeds"] == [1]
    assert not bench_dir.exists()


def test_generate_is_seed_deterministic(tmp_path):
    a, b = tmp_path / "a.sdpb", tmp_path / "b.sdpb"
    for p in (a, b):
        assert main(["generate", "--kind", "gesture", "--seed", "9", "--param", "duration=4",
                     "--param", "class_id=1", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_subprocess_entry_point(tmp_path):
    proc = sdp(["inspect", "nothing.sdpb"], str(tmp_path), check=False)
    assert proc.returncode == 3
    proc = sdp(["--help"], str(tmp_path))
    assert "generate" in proc.stdout
