import json

from click.testing import CliRunner

from main import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, cli
from streaming.catalog import TileCatalog


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def experiment(tmp_path, **overrides):
    doc = {
        "catalog": {"synthesize": {"L": 2}, "seed": 1},
        "channel": {"type": "fixed", "bandwidth_kbps": 10000},
        "methods": ["aa", "pd"],
        "switch_probabilities": [0.1],
        "replicates": 1,
        "segments": 4,
    }
    doc.update(overrides)
    return write(tmp_path / "experiment.json", doc)


def test_validate_prints_the_normalized_config(tmp_path):
    result = CliRunner().invoke(cli, ["validate", "--config", experiment(tmp_path)])
    assert result.exit_code == EXIT_OK
    doc = json.loads(result.output)
    assert doc["methods"] == ["aa", "pd"]
    assert doc["fine"]["theta"] == [0.2, 0.3, 0.5]


def test_invalid_config_exits_with_one(tmp_path):
    path = experiment(tmp_path, methods=["greedy"], fine={"theta": [1, 1, 1]})
    result = CliRunner().invoke(cli, ["validate", "--config", path])
    assert result.exit_code == EXIT_INVALID
    assert "$.methods[0]" in result.output
    assert "$.fine.theta" in result.output


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "results"
    result = CliRunner().invoke(cli, ["run", "--config", experiment(tmp_path), "--out", str(out), "--seed", "5"])
    assert result.exit_code == EXIT_OK
    assert (out / "aggregate.csv").is_file()
    assert (out / "segments" / "pd_p0.10_r00.csv").is_file()
    assert json.loads((out / "summary.json").read_text())["seeds"] == [5]


def test_runtime_failure_exits_with_two(tmp_path):
    # the file exists, so validation passes, but it is not a catalog
    write(tmp_path / "catalog.json", {"tiles": "none"})
    path = experiment(tmp_path, catalog={"path": "catalog.json"})
    result = CliRunner().invoke(cli, ["run", "--config", path, "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_RUNTIME


def test_synth_catalog(tmp_path):
    spec = write(tmp_path / "spec.json", {"L": 3, "alpha_range": [5000, 6000]})
    out = tmp_path / "catalog.json"
    result = CliRunner().invoke(cli, ["synth-catalog", "--spec", spec, "--out", str(out), "--seed", "4"])
    assert result.exit_code == EXIT_OK
    catalog = TileCatalog.load(out)
    assert catalog.segments == 3
    assert all(5000 <= p.alpha <= 6000 for row in catalog.rd for p in row)


def test_synth_catalog_rejects_bad_ranges(tmp_path):
    spec = write(tmp_path / "spec.json", {"beta_range": [1.2, 0.8]})
    result = CliRunner().invoke(cli, ["synth-catalog", "--spec", spec, "--out", str(tmp_path / "c.json")])
    assert result.exit_code == EXIT_INVALID


def test_rate_adaptation_command(tmp_path):
    path = write(tmp_path / "rate.json", {"segments": 20})
    result = CliRunner().invoke(cli, ["rate-adaptation", "--config", path, "--out", str(tmp_path / "rate")])
    assert result.exit_code == EXIT_OK
    assert "bqa:" in result.output and "bfa:" in result.output
    assert (tmp_path / "rate" / "rate_adaptation_bqa.csv").is_file()
