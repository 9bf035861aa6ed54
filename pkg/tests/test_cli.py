import csv
import io
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from jitterest import csvio
from jitterest.cli import main
from jitterest.em import EmSettings, run_em
from jitterest.model import ModelConfig, SampleSet, generate_samples
from jitterest.quadrature import gauss_hermite_rule


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def model(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps(dict(K=3, M=4, sigma_z=0.2, sigma_w=0.1, J=40)))
    return p


def test_rules_output(capsys):
    main(["rules", "--family", "gh", "--J", "7"])
    rows = read_csv(capsys.readouterr().out)
    assert list(rows[0]) == ["index", "abscissa", "weight"]
    r = gauss_hermite_rule(7)
    # 17 significant digits round-trip exactly
    assert_array_equal([float(x["abscissa"]) for x in rows], r.abscissas)
    assert_array_equal([float(x["weight"]) for x in rows], r.weights)


def test_rules_other_families(tmp_path):
    out = tmp_path / "gl.csv"
    main(["rules", "--family", "gl", "--J", "5", "--a", "0", "--b", "2", "--out", str(out)])
    w = [float(r["weight"]) for r in read_csv(out.read_text())]
    assert_allclose(sum(w), 2.0, rtol=1e-14)
    main(["rules", "--family", "gl-tan", "--J", "65", "--sigma", "0.5", "--out", str(out)])
    w = [float(r["weight"]) for r in read_csv(out.read_text())]
    assert abs(sum(w) - 1) < 1e-8


def test_simulate_estimate_roundtrip(model, tmp_path):
    samples = tmp_path / "s.csv"
    xfile = tmp_path / "x.csv"
    x = np.array([0.5, -1.0, 0.25])
    csvio.write_vector(xfile, x)
    main(["simulate", "--config", str(model), "--x", str(xfile), "--seed", "3", "--out", str(samples)])
    s = csvio.read_samples(samples)
    ref = generate_samples(ModelConfig(3, 4, 0.2, 0.1), x, 3)
    assert_array_equal(s.y, ref.y)
    assert_array_equal(s.z, ref.z)

    out = tmp_path / "em.csv"
    main(["estimate", "--config", str(model), "--samples", str(samples), "--method", "em", "--out", str(out)])
    rows = read_csv(out.read_text())
    tr = run_em(ModelConfig(3, 4, 0.2, 0.1), ref, EmSettings(J=40))
    assert len(rows) == tr.iterations + 1
    assert rows[-1]["termination"] == tr.termination.value
    assert_array_equal([float(rows[-1][f"x_{k}"]) for k in range(3)], tr.final)

    for method in ("linear", "nojitter"):
        main(["estimate", "--config", str(model), "--samples", str(samples), "--method", method,
              "--out", str(out)])
        (row,) = read_csv(out.read_text())
        assert row["termination"] == "closed_form"
        assert np.isfinite(float(row["loglik"]))


def test_estimate_checks_sample_count(model, tmp_path):
    samples = tmp_path / "s.csv"
    csvio.write_samples(samples, SampleSet(y=np.zeros(5)))
    with pytest.raises(SystemExit):
        main(["estimate", "--config", str(model), "--samples", str(samples)])


def test_crb_command(model, tmp_path, capsys):
    xfile = tmp_path / "x.csv"
    xfile.write_text("0.5\n-1.0\n0.25\n")
    main(["crb", "--config", str(model), "--x", str(xfile), "--S", "50", "--J", "60"])
    (row,) = read_csv(capsys.readouterr().out)
    assert float(row["crb_yz"]) <= float(row["crb_y"]) + 3 * float(row["crb_y_se"])
    assert int(row["S"]) == 50


def test_model_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(dict(K=3, M=4, sigma_z=0.2, sigma_w=0.1, T=2)))
    with pytest.raises(ValueError):
        main(["simulate", "--config", str(p)])


def test_experiment_writes_files(tmp_path, capsys):
    cfg = tmp_path / "blue.json"
    cfg.write_text(json.dumps(dict(kind="blue", options=dict(points=5))))
    main(["experiment", "--kind", "blue", "--config", str(cfg), "--out", str(tmp_path / "out")])
    printed = capsys.readouterr().out.split()
    assert sorted(p.rsplit("/", 1)[-1] for p in printed) == ["blue.csv", "summary.csv"]
    (s,) = read_csv((tmp_path / "out" / "summary.csv").read_text())
    assert s["equals_linear_at_zero"] == "true"


def test_experiment_kind_mismatch(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(kind="mse")))
    with pytest.raises(SystemExit):
        main(["experiment", "--kind", "blue", "--config", str(cfg), "--out", str(tmp_path)])


class TestCsv:
    def test_format(self):
        assert csvio.fmt(0.1) == "0.10000000000000001"
        assert csvio.fmt(True) == "true" and csvio.fmt(None) == ""
        assert csvio.fmt((1.5, 2)) == "1.5 2"
        assert csvio.fmt(float("nan")) == "nan"

    def test_vector_roundtrip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal(6)
        csvio.write_vector(tmp_path / "x.csv", x)
        assert_array_equal(csvio.read_vector(tmp_path / "x.csv"), x)

    def test_samples_roundtrip_any_order(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("n,y\n2,0.3\n0,0.1\n1,0.2\n")
        assert_array_equal(csvio.read_samples(p).y, [0.1, 0.2, 0.3])

    def test_samples_without_truth(self, tmp_path):
        p = tmp_path / "s.csv"
        csvio.write_samples(p, SampleSet(y=np.array([0.5, -0.25])))
        s = csvio.read_samples(p)
        assert_array_equal(s.y, [0.5, -0.25])
        assert s.z is None and s.w is None
