import csv
import io
import json

import pytest

from cli.lab_cli import main
from lab.core import analytic
from lab.core.errors import EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERICAL, EXIT_OK
from lab.core.protocol import config_from_dict
from tools.compare_reports import compare_dirs


def _rows(text: str) -> list[list[str]]:
    return list(csv.reader(io.StringIO(text)))


def test_closed_form_at_zero(tmp_path, capsys):
    assert main(["analytic", "closed-form", "--T", "0", "1", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["T", "value"]
    assert float(rows[1][1]) == pytest.approx(0.0, abs=1e-12)
    assert float(rows[2][1]) == pytest.approx(0.509938, abs=1e-5)
    assert (tmp_path / "analytic-closed-form.closed_form.csv").is_file()
    assert (tmp_path / "analytic-closed-form.timing.json").is_file()


def test_closed_form_needs_the_binary_coalescing_model(tmp_path, capsys):
    assert main(["analytic", "closed-form", "--model", "voter", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "Error [2]" in capsys.readouterr().err


def test_rate_sum_report(tmp_path):
    assert main(["ising", "rate-sum", "--beta", "2", "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "ising-rate-sum.json").read_text(encoding="utf-8"))
    assert meta["status"] == "ok"
    assert meta["summary"]["sum"] == pytest.approx(0.018353, abs=1e-6)
    assert meta["summary"]["bounded"] is True
    assert meta["tables"] == ["ising-rate-sum.rate_sum.csv"]
    assert "workers" not in meta["config"]


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    code = main(["simulate", "coalescing", "--n", "1", "--samples", "100", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "nope"],
        ["ising", "rate-sum"],
        ["simulate", "walk", "--seed", "1"],
        ["ising", "rate-sum", "--beta", "2", "--schedule", "linear"],
    ],
)
def test_config_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_guard_breach(tmp_path, capsys):
    code = main(["simulate", "coalescing", "--n", "30", "--seed", "1", "--samples", "10", "--out", str(tmp_path)])
    assert code == EXIT_GUARD
    assert "Error [3]" in capsys.readouterr().err


def test_divergent_rate_sum(tmp_path):
    assert main(["ising", "rate-sum", "--beta", "0.2", "--out", str(tmp_path)]) == EXIT_NUMERICAL


def test_reports_are_reproducible(tmp_path):
    argv = ["simulate", "coalescing", "--n", "2", "--T", "0.5", "1", "--samples", "3000", "--seed", "7"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert compare_dirs(tmp_path / "a", tmp_path / "b") == []


def test_reports_do_not_depend_on_workers(tmp_path):
    argv = ["simulate", "voter", "--n", "2", "--samples", "4500", "--seed", "3"]
    assert main(argv + ["--workers", "1", "--out", str(tmp_path / "one")]) == EXIT_OK
    assert main(argv + ["--workers", "2", "--out", str(tmp_path / "two")]) == EXIT_OK
    assert compare_dirs(tmp_path / "one", tmp_path / "two") == []
    timing = json.loads((tmp_path / "two" / "simulate-voter.timing.json").read_text(encoding="utf-8"))
    assert timing["workers"] == 2


def test_compare_dirs_reports_differences(tmp_path):
    base = ["simulate", "lattice-demo", "--side", "8", "--horizon", "5"]
    assert main(base + ["--seed", "1", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(base + ["--seed", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert "differs: simulate-lattice-demo.json" in compare_dirs(tmp_path / "a", tmp_path / "b")


def test_config_file_with_flag_override(tmp_path):
    ini = tmp_path / "experiment.ini"
    ini.write_text(
        "[experiment]\nn = 1\nT = 0.5, 1.0\nsamples = 500\nseed = 3\n\n[guards]\nmax_coalescing_depth = 4\n",
        encoding="utf-8",
    )
    out = tmp_path / "out"
    assert main(["simulate", "coalescing", "--config", str(ini), "--samples", "400", "--out", str(out)]) == EXIT_OK
    meta = json.loads((out / "simulate-coalescing.json").read_text(encoding="utf-8"))
    assert meta["config"]["samples"] == 400
    assert meta["config"]["T"] == [0.5, 1.0]
    assert meta["seed"] == 3
    assert meta["guards"]["max_coalescing_depth"] == 4
    rows = _rows((out / "simulate-coalescing.rho.csv").read_text(encoding="utf-8"))
    assert len(rows) == 3

    code = main(["simulate", "coalescing", "--config", str(ini), "--n", "6", "--out", str(out)])
    assert code == EXIT_GUARD


def test_config_file_rejects_unknown_keys(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[experiment]\ncolour = blue\n", encoding="utf-8")
    assert main(["analytic", "ode", "--config", str(ini), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["analytic", "ode", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_json_format_embeds_tables(tmp_path):
    argv = ["ising", "infection", "--beta", "2", "--depth", "6", "--horizon", "20", "--seed", "5"]
    assert main(argv + ["--format", "json", "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "ising-infection.json").read_text(encoding="utf-8"))
    assert meta["tables"]["infected"]["columns"] == ["t", "infected"]
    assert meta["tables"]["infected"]["rows"][0] == [0.0, 0]
    assert not list(tmp_path.glob("*.infected.csv"))


def test_iterate_writes_a_grid_file(tmp_path):
    argv = ["analytic", "iterate", "--model", "voter", "--iterations", "3", "--h", "0.05", "--t-max", "3"]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    model, grid = analytic.read_grid_csv(tmp_path / "analytic-iterate.iterate.grid.csv")
    assert model.kind == "voter"
    assert grid.size == 61
    rows = _rows((tmp_path / "analytic-iterate.iterates.csv").read_text(encoding="utf-8"))
    assert rows[0] == ["iteration", "T", "value"]
    assert len(rows) == 4


def test_coupled_ising_tables(tmp_path):
    argv = ["ising", "coupled", "--beta", "3", "--depth", "3", "--horizon", "5", "--seed", "2"]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    for table in ("disagreements", "layers", "creations"):
        assert (tmp_path / f"ising-coupled.{table}.csv").is_file()
    layers = _rows((tmp_path / "ising-coupled.layers.csv").read_text(encoding="utf-8"))
    assert [r[0] for r in layers[1:]] == ["0", "-1", "-2"]


def test_report_config_reads_back(tmp_path):
    argv = ["analytic", "ode", "--model", "voter", "--T", "1", "2", "--h", "0.05", "--t-max", "5"]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "analytic-ode.json").read_text(encoding="utf-8"))
    config = config_from_dict(meta["config"])
    assert (config.command, config.action, config.model) == ("analytic", "ode", "voter")
    assert config.T == (1.0, 2.0)
    assert config.guards.max_ising_depth == meta["guards"]["max_ising_depth"]


def test_estimate_table_columns(tmp_path):
    base = ["--n", "1", "--T", "0.5", "1", "--samples", "200", "--seed", "4", "--out", str(tmp_path)]
    assert main(["simulate", "coalescing", *base]) == EXIT_OK
    assert main(["simulate", "voter", *base]) == EXIT_OK
    rho = _rows((tmp_path / "simulate-coalescing.rho.csv").read_text(encoding="utf-8"))
    assert rho[0] == ["n", "T", "samples", "estimate", "ci_low", "ci_high", "seed"]
    bar = _rows((tmp_path / "simulate-voter.rho_bar.csv").read_text(encoding="utf-8"))
    assert bar[0] == ["n", "T", "samples", "rho_bar", "ci", "seed"]
    assert [row[1] for row in bar[1:]] == ["0.5", "1.0"]
    meta = json.loads((tmp_path / "simulate-voter.json").read_text(encoding="utf-8"))
    assert len(meta["summary"]["standard_errors"]) == 2


def test_lattice_demo_rejects_a_fractional_horizon(tmp_path, capsys):
    argv = ["simulate", "lattice-demo", "--side", "8", "--horizon", "5.5", "--seed", "1"]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "horizon" in capsys.readouterr().err
    assert main(["simulate", "lattice-demo", "--side", "8", "--horizon", "5.0", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK


def test_infection_at_very_low_temperature(tmp_path):
    argv = ["ising", "infection", "--beta", "400", "--depth", "5", "--horizon", "10", "--seed", "1"]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "ising-infection.json").read_text(encoding="utf-8"))
    assert meta["status"] == "ok"
