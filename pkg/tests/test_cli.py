import pytest

from tile360.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from tile360.cli_io import load_report

SMALL_CFG = (
    "name: tiny\nseed: 4\nusers: 2\nepochs: 4\nstrategy: decomposition\n"
    "ladder: [0.1, 0.2, 0.3, 0.4]\ngrid: {rows: 2, cols: 4}\nqoe: {mu: 0.0}\n"
    "synth: {num_aps: 2, lte_cap: 6.0, wifi_cap: 10.0}\n"
    "strategies: [decomposition, decentralized]\n"
)


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(SMALL_CFG)
    return str(p)


class TestCommands:
    def test_allocate(self, cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["allocate", "--config", cfg, "--out", str(out)]) == EXIT_OK
        path = out / "tiny_allocate.csv"
        assert path.exists()
        assert capsys.readouterr().out.strip() == str(path)
        table = load_report(str(path))
        assert any(r[3] == "system_qoe" for r in table.rows)

    def test_simulate_json(self, cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out),
                     "--format", "json"]) == EXIT_OK
        table = load_report(str(out / "tiny_simulate.json"))
        assert any(r[3] == "avg_viewed_qoe" for r in table.rows)

    def test_compare(self, cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["compare", "--config", cfg, "--out", str(out)]) == EXIT_OK
        table = load_report(str(out / "tiny_compare.csv"))
        assert {r[1] for r in table.rows} == {"decomposition", "decentralized"}

    def test_oracle(self, cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert (out / "tiny_oracle.csv").exists()

    def test_strategy_flag_overrides(self, cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["allocate", "--config", cfg, "--out", str(out),
                     "--strategy", "decentralized"]) == EXIT_OK
        table = load_report(str(out / "tiny_allocate.csv"))
        assert {r[1] for r in table.rows} == {"decentralized"}


class TestExitCodes:
    def test_bad_config_path(self, tmp_path):
        assert main(["allocate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_IO

    def test_config_error(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("users: 0\n")
        assert main(["allocate", "--config", str(p)]) == EXIT_CONFIG

    def test_unknown_strategy(self, cfg, tmp_path):
        assert main(["allocate", "--config", cfg, "--out", str(tmp_path),
                     "--strategy", "magic"]) == EXIT_CONFIG

    def test_seed_required_for_simulate(self, tmp_path):
        p = tmp_path / "noseed.yaml"
        p.write_text(SMALL_CFG.replace("seed: 4\n", ""))
        assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path),
                     "--seed", "1"]) == EXIT_OK

    def test_compare_needs_two_strategies(self, tmp_path):
        p = tmp_path / "one.yaml"
        p.write_text(SMALL_CFG.replace(
            "strategies: [decomposition, decentralized]\n", ""))
        assert main(["compare", "--config", str(p)]) == EXIT_CONFIG

    def test_infeasible_instance(self, tmp_path):
        p = tmp_path / "tight.yaml"
        # path-loss rates far below the 32 * 0.1 Mbps minimum coverage
        p.write_text("name: tight\nseed: 1\nusers: 3\n"
                     "synth: {lte_cap: 0.05, wifi_cap: 0.05}\n")
        assert main(["allocate", "--config", str(p),
                     "--out", str(tmp_path)]) == EXIT_INFEASIBLE

    def test_unwritable_out(self, cfg):
        assert main(["allocate", "--config", cfg,
                     "--out", "/dev/null/x"]) == EXIT_IO

    def test_oracle_cap(self, cfg, tmp_path):
        assert main(["oracle", "--config", cfg, "--out", str(tmp_path),
                     "--cap", "0"]) == EXIT_CONFIG
