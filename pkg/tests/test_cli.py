import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbkmeans.cli import JobError, main
from wbkmeans.core import WeightedDataset
from wbkmeans.io import IngestError, ingest, read_assignment, serialize_points, write_points


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def three(tmp_path):
    pts = write(tmp_path / "p.csv", "x,w\n0,1\n1,1\n2,1\n")
    sites = write(tmp_path / "s.csv", "0\n2\n")
    return tmp_path, pts, sites


def blobs(tmp_path, seed=1):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (25, 2)), rng.normal(5, 1, (25, 2))])
    data = WeightedDataset(X, rng.uniform(0.5, 2, 50))
    path = tmp_path / "q.csv"
    write_points(path, data)
    return data, str(path)


def load(path):
    return json.loads(path.read_text())


def test_ingest_small_file(three):
    _, pts, _ = three
    data = ingest(pts)
    assert (data.n, data.d) == (3, 1)


def test_ingest_whitespace_and_comments(tmp_path):
    p = write(tmp_path / "p.txt", "# two points\n0.0 1.0  2.0\n\n3.0 4.0 0.5  # tail\n")
    data = ingest(p)
    assert (data.n, data.d) == (2, 2)
    np.testing.assert_array_equal(data.weights, [2.0, 0.5])


def test_ingest_zero_weight_cites_line(tmp_path):
    p = write(tmp_path / "p.csv", "x,w\n0,1\n1,0\n")
    with pytest.raises(IngestError, match="line 3"):
        ingest(p)


def test_ingest_duplicate_has_merge_hint(tmp_path):
    p = write(tmp_path / "p.csv", "0,1,1\n2,2,1\n0,1,3\n")
    with pytest.raises(IngestError, match="line 3.*line 1.*merge"):
        ingest(p)


def test_ingest_malformed_row(tmp_path):
    p = write(tmp_path / "p.csv", "x,w\n0,1\n1,abc\n")
    with pytest.raises(IngestError, match="line 3"):
        ingest(p)
    p = write(tmp_path / "r.csv", "0,1\n1,2,3\n")
    with pytest.raises(IngestError, match="line 2"):
        ingest(p)
    # a bad first data row is not mistaken for a header
    p = write(tmp_path / "h.csv", "0,oops\n1,1\n")
    with pytest.raises(IngestError, match="line 1"):
        ingest(p)


coords = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords, st.floats(1e-6, 1e6)), min_size=1, max_size=20,
                unique_by=lambda t: (t[0], t[1])))
def test_round_trip_is_bit_exact(rows):
    arr = np.array(rows)
    data = WeightedDataset(arr[:, :2], arr[:, 2])
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "d.csv"
        path.write_text(serialize_points(data))
        back = ingest(path)
    assert np.array_equal(back.points, data.points)
    assert np.array_equal(back.weights, data.weights)


def test_three_point_assign_job(three):
    tmp, pts, sites = three
    out = tmp / "a"
    assert main(["run", pts, "-k", "2", "--sites", sites, "--assign-only", "-o", str(out)]) == 0
    s = load(out / "summary.json")
    assert s["n_fractional"] == 2
    assert s["squared_error"] == 1.0
    assert s["certificate"] == "strongly_feasible"
    assert (out / "assignment.csv").read_text() == (
        "cluster,point,fraction\n0,0,1.0\n0,1,0.5\n1,1,0.5\n1,2,1.0\n"
    )


def test_three_point_full_run(three):
    tmp, pts, sites = three
    out = tmp / "b"
    assert main(["run", pts, "-k", "2", "--sites", sites, "-o", str(out)]) == 0
    s = load(out / "summary.json")
    assert s["verdict"] == "converged" and s["certificate"] == "strongly_feasible"
    assert s["n_fractional"] == 2
    assert abs(s["squared_error"] - 2 / 3) < 1e-12
    sites_doc = load(out / "sites.json")
    np.testing.assert_allclose(np.array(sites_doc["centroids"])[:, 0], [1 / 3, 5 / 3])
    y = read_assignment(out / "assignment.csv", 2, 3)
    np.testing.assert_allclose(y.y, [[1, 0.5, 0], [0, 0.5, 1]])


def test_infeasible_bounds_exit_1(three, capsys):
    tmp, pts, _ = three
    assert main(["run", pts, "-k", "2", "--lower", "2,2", "--upper", "2,2", "-o", str(tmp / "x")]) == 1
    assert "Σκ⁻ ≤ Σω ≤ Σκ⁺" in capsys.readouterr().err


def test_iteration_cap_exit_2(three):
    tmp, pts, sites = three
    assert main(["run", pts, "-k", "2", "--sites", sites, "--max-iterations", "1", "-o", str(tmp / "c")]) == 2
    assert load(tmp / "c" / "summary.json")["verdict"] == "iteration_cap"


def test_multi_start_keeps_all_traces(tmp_path):
    _, pts = blobs(tmp_path)
    out = tmp_path / "m"
    rc = main(["run", pts, "-k", "3", "--balanced", "0.1", "--init", "weighted-d2",
               "--seeds", "0,1,2,3,4,5,6,7", "-o", str(out)])
    assert rc == 0
    trace = load(out / "trace.json")
    assert len(trace["runs"]) == 8
    thetas = [r["theta"] for r in trace["runs"]]
    assert trace["best"] == thetas.index(min(thetas))
    assert trace["best_seed"] == trace["best"]


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    _, pts = blobs(tmp_path)
    monkeypatch.setenv("WBKMEANS_WORKERS", "2")
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        main(["run", pts, "-k", "3", "--balanced", "0.05", "--seeds", "0,1,2", "--plot",
              "--dump-assignments", "-o", str(out)])
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert "convergence.png" in names and "clusters.png" in names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n
    assert "assignment" in load(outs[0] / "trace.json")["runs"][0]["records"][0]


def test_config_file_and_flag_override(tmp_path):
    _, pts = blobs(tmp_path)
    cfg = write(tmp_path / "job.yaml", "k: 2\nbounds:\n  balanced: 0.1\nmust_link:\n  - [0, 1, 2]\n"
                "init: weighted-d2\nseeds: [3, 4]\ntolerances:\n  eps_obj: 1.0e-9\n")
    out = tmp_path / "cfg"
    assert main(["run", pts, "-c", cfg, "--seeds", "5", "-o", str(out)]) == 0
    s = load(out / "summary.json")
    assert s["must_link"]["applied"] and s["must_link"]["groups"] == [[0, 1, 2]]
    assert s["seed"] == 5 and s["k"] == 2
    y = read_assignment(out / "assignment.csv", 2, 50).y
    assert np.array_equal(y[:, 0], y[:, 1]) and np.array_equal(y[:, 1], y[:, 2])


def test_config_errors_name_the_field(tmp_path):
    _, pts = blobs(tmp_path)
    bad = write(tmp_path / "bad.yaml", "k: 2\nbounds:\n  lower: [1, 2, 3]\n  upper: [50, 50, 50]\n")
    with pytest.raises(JobError, match="'lower'"):
        from wbkmeans.cli import build_parser, job_from_args

        job_from_args(build_parser().parse_args(["run", pts, "-c", bad]))
    typo = write(tmp_path / "typo.yaml", "k: 2\nbalance: 0.1\n")
    assert main(["run", pts, "-c", typo]) == 1


def test_kernel_run_job(tmp_path):
    _, pts = blobs(tmp_path)
    out = tmp_path / "k"
    assert main(["kernel-run", pts, "-k", "2", "--kernel", "gaussian", "--bandwidth", "2.0",
                 "--plot", "-o", str(out)]) == 0
    s = load(out / "summary.json")
    assert s["kernel"] == {"kind": "gaussian", "bandwidth": 2.0}
    assert s["certificate"] == "strongly_feasible"
    coef = np.array(load(out / "sites.json")["coefficients"])
    np.testing.assert_allclose(coef.sum(axis=1), 1.0)


def test_kernel_run_requires_parameters(tmp_path):
    _, pts = blobs(tmp_path)
    assert main(["kernel-run", pts, "-k", "2", "--kernel", "gaussian"]) == 1
    assert main(["run", pts, "-k", "2", "-c", write(tmp_path / "g.yaml", "kernel: linear\n")]) == 1


def test_verify_accepts_run_output_and_rejects_crossing(tmp_path, capsys):
    _, pts = blobs(tmp_path)
    out = tmp_path / "v"
    main(["run", pts, "-k", "2", "-o", str(out)])
    capsys.readouterr()
    rc = main(["verify", pts, "--assignment", str(out / "assignment.csv"), "--sites", str(out / "sites.json")])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "strongly_feasible"
    p = write(tmp_path / "line.csv", "0,1\n1,1\n9,1\n10,1\n")
    s = write(tmp_path / "ls.csv", "0\n10\n")
    a = write(tmp_path / "a.csv", "cluster,point,fraction\n1,0,1\n0,1,1\n1,2,1\n0,3,1\n")
    assert main(["verify", p, "--assignment", a, "--sites", s]) == 3
    assert json.loads(capsys.readouterr().out)["verdict"] == "infeasible"
    assert main(["verify", p, "--assignment", a, "--sites", s, "--sigma", "0,0"]) == 3
    assert json.loads(capsys.readouterr().out)["witness"] is not None


def test_oracle_subcommand(three, capsys):
    _, pts, sites = three
    assert main(["oracle", pts, "-k", "2", "--sites", sites]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["lp_squared_error"] == 1.0
    assert doc["integral_assignment"] is None


def test_console_entry_point(three):
    tmp, pts, sites = three
    proc = subprocess.run(
        [sys.executable, "-m", "wbkmeans.cli", "run", pts, "-k", "2", "--sites", sites, "-o", str(tmp / "e")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
