import csv
import io
import json
import subprocess
import sys

import pytest

from levy_penalize.cli import (
    RunConfig,
    config_from_args,
    emit_manifest,
    main,
    read_config_file,
    run_suite,
)
from levy_penalize.errors import UsageError
from levy_penalize.path_sim import read_path_dump


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- identities ---------------------------------------------------------------


@pytest.mark.parametrize("model", ["brownian", "cauchy"])
def test_identities_suite_passes(model, tmp_path):
    out = tmp_path / "ids.csv"
    assert main(["identities", "--model", model, "--out", str(out)]) == 0
    table = rows(out.read_text())
    assert list(table[0]) == ["model", "check", "param_q", "param_lambda_or_x", "residual",
                              "tolerance", "pass"]
    assert table and all(r["pass"] == "true" for r in table)
    checks = {r["check"] for r in table}
    assert "laplace_hq" in checks and "q_over_kappa_final" in checks
    if model == "brownian":
        assert {"convolution", "sup_law_exponential", "excursion_density_ratio"} <= checks


def test_identities_print_to_stdout_without_out(capsys):
    assert main(["identities"]) == 0
    assert capsys.readouterr().out.startswith("model,check,")


# --- usage errors and exit codes ----------------------------------------------


def test_empty_clock_grid_is_a_usage_error(capsys):
    assert main(["exp-clock", "--paths", "100"]) == 2
    assert "clock grid" in capsys.readouterr().err
    with pytest.raises(UsageError):
        run_suite(RunConfig(suite="exp-clock"))


@pytest.mark.parametrize("argv,token", [
    (["exp-clock", "--clock-grid", "1", "--model", "levy"], "levy"),
    (["mass", "--clock-grid", "1", "--weight", "box:a=1"], "box"),
    (["exp-clock", "--clock-grid", "1", "--functional", "xle:c=1"], "c=1"),
    (["mass", "--clock-grid", "1,x"], "1,x"),
    (["mass", "--clock-grid", "1,0.1"], "1.0,0.1"),
])
def test_bad_specs_name_the_offending_token(argv, token, capsys):
    assert main(argv) == 2
    assert token in capsys.readouterr().err


def test_unknown_suite_exits_through_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_domain_errors_exit_with_three(capsys):
    # dt does not divide t
    assert main(["penalized-sample", "--t", "0.25", "--dt", "0.1", "--paths", "10"]) == 3
    assert "DomainError" in capsys.readouterr().err


def test_unsupported_capability_exits_with_three(capsys):
    assert main(["decompose", "--model", "cauchy", "--paths", "10", "--dt", "0.01"]) == 3
    assert "UnsupportedCapability" in capsys.readouterr().err


def test_failing_rows_give_exit_code_one(tmp_path):
    # a zero tolerance with a handful of paths cannot match the limit law
    code = main(["penalized-sample", "--t", "1", "--dt", "0.1", "--paths", "50",
                 "--tolerance", "0", "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert any(r["pass"] == "false" for r in rows((tmp_path / "p.csv").read_text()))


# --- config and manifest --------------------------------------------------------


def test_config_file_sections_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text(
        "[run]\nmodel = cauchy\nseed = 5\ndt = 0.01\npaths = 300\n"
        "[mass]\nseed = 6\nclock-grid = 0.5,1\n"
        "[exp-clock]\nseed = 99\n"
    )
    cfg = config_from_args(["mass", "--config", str(cfg_file), "--dt", "0.02"])
    assert (cfg.model, cfg.seed, cfg.dt, cfg.n_paths) == ("cauchy", 6, 0.02, 300)
    assert cfg.clock_grid == (0.5, 1.0)
    assert read_config_file(cfg_file, "identities")["seed"] == 5


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nunknown_key = 1\n")
    with pytest.raises(UsageError):
        config_from_args(["identities", "--config", str(bad)])
    with pytest.raises(UsageError):
        config_from_args(["identities", "--config", str(tmp_path / "missing.ini")])
    broken = tmp_path / "broken.ini"
    broken.write_text("no section header\n")
    with pytest.raises(UsageError):
        config_from_args(["identities", "--config", str(broken)])


def test_manifest_round_trip():
    cfg = RunConfig(suite="exp-clock", clock_grid=(0.01, 0.1, 1.0), t=0.5, dt=0.01, seed=42,
                    tolerance=0.05).validate()
    text = emit_manifest(cfg, build="abc123", wall_time=1.5)
    doc = json.loads(text)
    assert doc["seed"] == 42 and doc["build_id"] == "abc123" and doc["wall_time"] == 1.5
    assert RunConfig.from_manifest(text) == cfg


def test_manifest_written_next_to_csv_in_new_directory(tmp_path):
    out = tmp_path / "deep" / "nested" / "mass.csv"
    cfg = RunConfig(suite="mass", clock_grid=(1.0,), dt=0.05, n_paths=2000, seed=3, out=str(out))
    report, code = run_suite(cfg)
    assert code == 0 and out.exists()
    manifest = json.loads((out.parent / "mass.manifest.json").read_text())
    assert manifest["seed"] == 3
    assert RunConfig.from_dict(manifest["config"]) == cfg.validate()
    assert manifest["build_id"]


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        cfg = RunConfig(suite="exp-clock", clock_grid=(0.5, 2.0), t=0.2, dt=0.02, n_paths=3000,
                        seed=8, out=str(tmp_path / f"r{k}.csv"))
        run_suite(cfg)
        outs.append((tmp_path / f"r{k}.csv").read_bytes())
    assert outs[0] == outs[1]
    assert len(rows(outs[0].decode())) == 2


# --- other suites on small inputs ----------------------------------------------


@pytest.mark.parametrize("argv", [
    ["const-clock", "--clock-grid", "4", "--t", "0.2", "--dt", "0.02", "--paths", "2000"],
    ["martingale", "--model", "cauchy", "--clock-grid", "0.2", "--dt", "0.02", "--paths",
     "2000", "--tolerance", "0.05"],
    ["decompose", "--t", "1", "--dt", "0.05", "--paths", "3000", "--tolerance", "0.05"],
    ["crosscheck", "--t", "0.5", "--dt", "0.05", "--paths", "3000", "--tolerance", "0.06"],
])
def test_small_suites_run(argv, tmp_path):
    out = tmp_path / "o.csv"
    code = main(argv + ["--seed", "1", "--out", str(out)])
    table = rows(out.read_text())
    assert table
    assert code == (0 if all(r["pass"] == "true" for r in table) else 1)
    assert (tmp_path / "o.manifest.json").exists()


def test_dump_paths(tmp_path):
    out = tmp_path / "dump" / "paths.bin"
    assert main(["dump-paths", "--paths", "4", "--t", "0.5", "--dt", "0.1", "--out",
                 str(out)]) == 0
    recs = read_path_dump(io.BytesIO(out.read_bytes()))
    assert len(recs) == 4
    for dt, x, s in recs:
        assert dt == 0.1 and len(x) == 6 and (s >= x).all()
    assert (out.parent / "paths.manifest.json").exists()


def test_dump_paths_needs_out():
    assert main(["dump-paths", "--paths", "1"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "levy_penalize", "identities"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "model,check,param_q,param_lambda_or_x,residual," \
                                         "tolerance,pass"
