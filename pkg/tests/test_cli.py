import json
import math
import struct

import numpy as np
import pytest

from disckde.bench import COLUMNS, bench_row, make_points
from disckde.cli import EXIT_DATA, EXIT_OK, EXIT_SELFTEST, EXIT_USAGE, main
from disckde.core import BuildParams
from disckde.errors import DataError, IndexFormatError
from disckde.io import load_index, read_points, save_index, write_points
from disckde.kernels import Cauchy, kernel_row, parse_kernel
from disckde.selftest import uniform_ball
from disckde.tree import build_forest


def jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@pytest.fixture
def toy(tmp_path):
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    path = tmp_path / "toy.csv"
    write_points(str(path), P)
    return P, path


def test_read_points_roundtrip(tmp_path, rng):
    P = rng.standard_normal((10, 3))
    write_points(str(tmp_path / "p.csv"), P)
    assert np.array_equal(read_points(str(tmp_path / "p.csv")), P)


def test_read_points_skips_blank_lines(tmp_path):
    (tmp_path / "p.csv").write_text("1,2\n\n3,4\n")
    assert read_points(str(tmp_path / "p.csv")).shape == (2, 2)


@pytest.mark.parametrize(
    "text,fragment",
    [("1,2\n3\n", ":2:"), ("1,2\n3,x\n", ":2:"), ("1,nan\n", ":1:"), ("", "no points")],
)
def test_read_points_errors(tmp_path, text, fragment):
    (tmp_path / "p.csv").write_text(text)
    with pytest.raises(DataError, match=fragment):
        read_points(str(tmp_path / "p.csv"))


def test_read_points_binary_and_missing(tmp_path):
    (tmp_path / "b.csv").write_bytes(b"\xff\xfe\x00\x81")
    with pytest.raises(DataError):
        read_points(str(tmp_path / "b.csv"))
    with pytest.raises(DataError):
        read_points(str(tmp_path / "missing.csv"))


def test_build_and_query_toy(toy, tmp_path, capsys):
    P, path = toy
    idx = tmp_path / "toy.idx"
    assert main(["build", str(path), str(idx), "--seed", "1"]) == EXIT_OK
    stats = jsonl(capsys.readouterr().out)[0]
    assert stats["n"] == 3 and stats["trees"] == 3 and stats["kernel"] == "cauchy"
    assert main(["query", str(idx), str(path), "--exact-check"]) == EXIT_OK
    rows = jsonl(capsys.readouterr().out)
    answers = [r for r in rows if "query" in r]
    assert len(answers) == 3
    for r, p in zip(answers, P):
        assert r["status"] == "ok"
        assert r["estimate"] == pytest.approx(math.fsum(kernel_row(Cauchy(), P, p)), rel=1e-12)
        assert r["rel_err"] <= 1e-12
    summary = rows[-1]
    assert summary["summary"] == "rel_err" and summary["queries"] == 3


def test_query_at_singleton_center(tmp_path, capsys):
    write_points(str(tmp_path / "one.csv"), np.array([[2.0, -1.0, 0.5]]))
    main(["build", str(tmp_path / "one.csv"), str(tmp_path / "one.idx")])
    capsys.readouterr()
    main(["query", str(tmp_path / "one.idx"), str(tmp_path / "one.csv")])
    assert jsonl(capsys.readouterr().out)[0]["estimate"] == 1.0


def test_same_seed_byte_identical(toy, tmp_path):
    _, path = toy
    P = uniform_ball(np.random.default_rng(0), 200, 4)
    write_points(str(tmp_path / "p.csv"), P)
    for name in ("a.idx", "b.idx"):
        assert main(["build", str(tmp_path / "p.csv"), str(tmp_path / name), "--seed", "7", "--trees", "2"]) == 0
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()


def test_roundtrip_bit_identical_answers(tmp_path, rng):
    P = uniform_ball(rng, 300, 5)
    F = build_forest(P, parse_kernel("rq:2"), BuildParams(seed=4))
    save_index(F, str(tmp_path / "f.idx"))
    G = load_index(str(tmp_path / "f.idx"))
    assert G.kernel == F.kernel and G.params == F.params
    for q in uniform_ball(rng, 40, 5, 2.0):
        a, b = F.query(q), G.query(q)
        assert a.status == b.status and a.estimate == b.estimate


def test_index_rejects_corruption(tmp_path, toy):
    _, path = toy
    idx = tmp_path / "t.idx"
    main(["build", str(path), str(idx)])
    raw = idx.read_bytes()
    bad_version = raw[:4] + struct.pack("<I", 99) + raw[8:]
    cases = {"magic": b"XXXX" + raw[4:], "version": bad_version, "trunc": raw[:-5], "trail": raw + b"\0"}
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(IndexFormatError):
            load_index(str(tmp_path / name))
        assert main(["query", str(tmp_path / name), str(path)]) == EXIT_DATA


def test_exit_codes(tmp_path, toy, capsys):
    _, path = toy
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    assert main(["build", str(tmp_path / "ragged.csv"), str(tmp_path / "x.idx")]) == EXIT_DATA
    assert "ragged.csv:2" in capsys.readouterr().err
    assert main(["build", str(path), str(tmp_path / "x.idx"), "--kernel", "gauss"]) == EXIT_USAGE
    assert main(["build", str(path), str(tmp_path / "x.idx"), "--eps", "2"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["selftest", "--suite", "nope"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["build", str(path), "o", "--xi", "0.1", "--tau", "0.1"])
    assert exc.value.code == EXIT_USAGE


def test_query_dimension_mismatch(tmp_path, toy, capsys):
    _, path = toy
    main(["build", str(path), str(tmp_path / "t.idx")])
    (tmp_path / "q3.csv").write_text("1,2,3\n")
    assert main(["query", str(tmp_path / "t.idx"), str(tmp_path / "q3.csv")]) == EXIT_DATA


def test_fail_status_keeps_exit_zero(tmp_path, rng, capsys, monkeypatch):
    import disckde.tree as tree_mod

    P = uniform_ball(rng, 150, 3)
    F = build_forest(P, Cauchy(), BuildParams(num_trees=1, seed=0))
    save_index(F, str(tmp_path / "w.idx"))
    write_points(str(tmp_path / "q.csv"), uniform_ball(rng, 20, 3))
    # every carving reports the boundary zone, so in-ball queries fail
    monkeypatch.setattr(tree_mod, "hash_eval", lambda p, x: tree_mod.BOUNDARY)
    assert main(["query", str(tmp_path / "w.idx"), str(tmp_path / "q.csv")]) == EXIT_OK
    rows = jsonl(capsys.readouterr().out)
    assert {r["status"] for r in rows} == {"fail"}
    assert all(r["estimate"] is None for r in rows)


def test_selftest_walk_suite(capsys):
    assert main(["selftest", "--suite", "walk"]) == EXIT_OK
    rows = jsonl(capsys.readouterr().out)
    assert rows and all(r["pass"] for r in rows)


def test_selftest_violation_exit(monkeypatch, capsys):
    import disckde.selftest as selftest

    monkeypatch.setitem(selftest.SUITES, "walk", lambda seed: [selftest._check("walk", "x", 1.0, 0.0, False)])
    assert main(["selftest", "--suite", "walk"]) == EXIT_SELFTEST


def test_bench_smoke(capsys):
    import time

    t = time.perf_counter()
    assert main(["bench", "--n", "1000", "--d", "10", "--queries", "20", "--trees", "1"]) == EXIT_OK
    assert time.perf_counter() - t < 60
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",") == list(COLUMNS)
    assert len(lines) == 2


def test_bench_deterministic_apart_from_timing():
    a = bench_row(300, 5, Cauchy(), 0.2, "shells", seed=3, trees=1, queries=10)
    b = bench_row(300, 5, Cauchy(), 0.2, "shells", seed=3, trees=1, queries=10)
    for key in ("index_bytes", "mean_rel_err", "fail_rate"):
        assert a[key] == b[key]


@pytest.mark.parametrize("dist", ["uniform-ball", "two-clusters", "shells"])
def test_make_points(dist, rng):
    P = make_points(dist, 101, 4, rng)
    assert P.shape == (101, 4) and np.all(np.isfinite(P))
