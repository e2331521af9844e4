import os

import pytest

from feedsim import cli, experiment
from feedsim.experiment import ConfigError, parse_config, run_sweep, serialize_config


MINIMAL = """
[network]
nodes = 60
edges = 400
core = 10
"""

TINY_SWEEP = """
[network]
nodes = 60
edges = 400
core = 10
seed = 7

[simulation]
ticks = 6
reset_tick = 4
activation_prob = 0.5

[sweep]
algorithms = ["random", "minimize_rho"]
prevalences = [0.25]
feed_lengths = [5]
seeds = [1]
output_dir = "out"

[learner]
embedding_dim = 4
mlp_layers = [8, 4]
epochs_per_tick = 2
"""


def write(tmp_path, text, name="conf.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    assert spec.simulation.ticks == 36
    assert spec.simulation.reset_tick == 24
    assert spec.simulation.activation_prob == 0.083
    assert spec.simulation.like_prob_same == 0.20
    assert spec.simulation.like_prob_diff == 0.05
    assert spec.simulation.candidate_window == 24
    assert spec.algorithms == ("random", "chronological", "ncf", "widedeep", "minimize_rho")
    assert spec.prevalences == (0.05, 0.15, 0.50)
    assert spec.feed_lengths == (30, 50, 100)
    assert spec.seeds == (1, 2, 3)
    assert spec.learner.embedding_dim == 16
    assert spec.learner.mlp_layers == (32, 16, 8)
    assert spec.learner.epochs_per_tick == 10
    assert spec.learner.focal_alpha == 0.25
    assert spec.learner.focal_gamma == 2.0


def test_out_of_range_value_names_key(tmp_path):
    bad = MINIMAL + "\n[simulation]\nactivation_prob = 1.5\n"
    with pytest.raises(ConfigError, match="simulation.activation_prob"):
        parse_config(write(tmp_path, bad))


def test_unknown_key_rejected(tmp_path):
    bad = MINIMAL + "\n[simulation]\nactivation_probability = 0.1\n"
    with pytest.raises(ConfigError, match="simulation.activation_probability"):
        parse_config(write(tmp_path, bad))


def test_missing_network_rejected(tmp_path):
    with pytest.raises(ConfigError, match="network"):
        parse_config(write(tmp_path, "[simulation]\nticks = 10\n"))


def test_path_and_synthetic_exclusive(tmp_path):
    bad = '[network]\npath = "x.tsv"\nnodes = 5\nedges = 4\ncore = 1\n'
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(write(tmp_path, bad))


def test_round_trip(tmp_path):
    full = TINY_SWEEP + "\nlearning_rate = 0.02\nfocal_alpha = 0.3\n"
    spec = parse_config(write(tmp_path, full))
    text = serialize_config(spec)
    spec2 = parse_config(write(tmp_path, text, name="rt.toml"))
    assert spec2 == spec
    assert serialize_config(spec2) == text


def test_sweep_outputs_and_determinism(tmp_path):
    spec = parse_config(write(tmp_path, TINY_SWEEP))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    from dataclasses import replace
    assert run_sweep(replace(spec, output_dir=str(out_a))) == 0
    assert run_sweep(replace(spec, output_dir=str(out_b))) == 0

    names = sorted(os.listdir(out_a))
    assert names == ["manifest.tsv", "minimize_rho_p0.25_n5_s1.csv", "random_p0.25_n5_s1.csv"]
    csv = (out_a / "random_p0.25_n5_s1.csv").read_text().splitlines()
    assert len(csv) == 1 + 6  # header + one row per tick
    for name in names:
        if name.endswith(".csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_sweep_worker_count_equivalence(tmp_path):
    spec = parse_config(write(tmp_path, TINY_SWEEP))
    from dataclasses import replace
    out_1 = tmp_path / "w1"
    out_8 = tmp_path / "w8"
    assert run_sweep(replace(spec, output_dir=str(out_1), workers=1)) == 0
    assert run_sweep(replace(spec, output_dir=str(out_8), workers=8)) == 0
    for name in os.listdir(out_1):
        if name.endswith(".csv"):
            assert (out_1 / name).read_bytes() == (out_8 / name).read_bytes()


def test_manifest_contents(tmp_path):
    spec = parse_config(write(tmp_path, TINY_SWEEP))
    from dataclasses import replace
    out = tmp_path / "m"
    run_sweep(replace(spec, output_dir=str(out)))
    lines = (out / "manifest.tsv").read_text().splitlines()
    assert lines[0].startswith("run_id\tfilename\talgorithm")
    assert len(lines) == 3
    fields = lines[1].split("\t")
    assert fields[6] == "ok"
    assert len(fields[8]) == 16  # config hash


def test_failed_run_recorded_and_sweep_continues(tmp_path, monkeypatch):
    spec = parse_config(write(tmp_path, TINY_SWEEP))
    from dataclasses import replace
    out = tmp_path / "f"

    real = experiment._execute_run

    def flaky(net, spec_, algorithm, prevalence, n, seed, run_workers):
        if algorithm == "minimize_rho":
            raise RuntimeError("boom")
        return real(net, spec_, algorithm, prevalence, n, seed, run_workers)

    monkeypatch.setattr(experiment, "_execute_run", flaky)
    assert run_sweep(replace(spec, output_dir=str(out))) == 1
    lines = (out / "manifest.tsv").read_text().splitlines()
    statuses = {ln.split("\t")[2]: ln.split("\t")[6] for ln in lines[1:]}
    assert statuses == {"random": "ok", "minimize_rho": "error"}
    assert (out / "random_p0.25_n5_s1.csv").exists()
    assert not (out / "minimize_rho_p0.25_n5_s1.csv").exists()


# --------------------------------------------------------------------- CLI

def test_cli_gen_network_and_validate(tmp_path, capsys):
    edges = tmp_path / "edges.tsv"
    rc = cli.main(["gen-network", "--nodes", "50", "--edges", "300",
                   "--core", "5", "--seed", "3", "--out", str(edges)])
    assert rc == 0
    from feedsim.graph import load_edge_list
    net = load_edge_list(edges)
    assert net.node_count == 50 and net.edge_count == 300
    assert len(net.core_users) == 5

    conf = tmp_path / "c.toml"
    conf.write_text(f'[network]\npath = "{edges}"\n')
    assert cli.main(["validate", "--config", str(conf)]) == 0


def test_cli_config_error_exit_code(tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text("[simulation]\nticks = 3\n")
    assert cli.main(["validate", "--config", str(conf)]) == 2
    assert cli.main(["validate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_run_tiny(tmp_path):
    conf = write(tmp_path, TINY_SWEEP)
    out = tmp_path / "cli_out"
    rc = cli.main(["run", "--config", str(conf), "--out", str(out), "--workers", "2"])
    assert rc == 0
    assert (out / "manifest.tsv").exists()
