import subprocess
import sys

import pytest

from vodswarm.cli import SUMMARY_HEADER, Cell, execute, parse_args


def test_no_flags_gives_full_grid():
    m = parse_args([])
    assert len(m.cells) == 27 and len(set(m.cells)) == 27
    assert (m.reps, m.base_seed, m.base.duration) == (30, 1, 7200.0)


def test_single_cell():
    m = parse_args(["--policy", "qbps", "--scenario", "lp", "--profile", "hi"])
    assert m.cells == [Cell("lp", "hi", "qbps")]


@pytest.mark.parametrize("argv", [["--reps", "0"], ["--bogus"], ["--reps", "two"],
                                  ["--policy", "g2g"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        parse_args(argv)
    assert info.value.code != 0


def test_config_file(tmp_path):
    cfg = tmp_path / "run.conf"
    cfg.write_text("swarm.provision = bp\npolicy.kind = sbnp\nrun.duration = 300\n")
    m = parse_args(["--config", str(cfg)])
    assert {c.scenario for c in m.cells} == {"bp"} and {c.policy for c in m.cells} == {"sbnp"}
    assert m.base.duration == 300
    cfg.write_text("run.seed = 1\nrun.seed = 2\n")
    with pytest.raises(SystemExit):
        parse_args(["--config", str(cfg)])


def test_seed_derivation_is_injective():
    m = parse_args(["--reps", "5"])
    seeds = [m.seed(i, r) for i in range(len(m.cells)) for r in range(m.reps)]
    assert len(seeds) == len(set(seeds))


def test_execute_writes_summary_and_comparison(tmp_path):
    m = parse_args(["--scenario", "lp", "--profile", "hi", "--reps", "2", "--duration", "400",
                    "--out", str(tmp_path), "--emit", "per-run"])
    code = execute(m)
    assert code in (0, 2)
    summary = (tmp_path / "summary_lp_hi_original.csv").read_text().splitlines()
    assert summary[0] == ",".join(SUMMARY_HEADER)
    assert len(summary) == 7
    comparison = (tmp_path / "comparison.csv").read_text().splitlines()
    assert comparison[0] == "scenario,profile,metric,original,sbnp,qbps"
    erc = [row for row in comparison if row.startswith("lp,hi,ERC")]
    assert len(erc) == 1 and "" not in erc[0].split(",")
    assert (tmp_path / "per_run_lp_hi_qbps.csv").exists()


def test_unwritable_output_is_an_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    m = parse_args(["--scenario", "bp", "--profile", "li", "--policy", "qbps", "--reps", "1",
                    "--out", str(blocker / "sub")])
    assert execute(m) == 1


def test_two_invocations_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        subprocess.run([sys.executable, "-m", "vodswarm", "--scenario", "lp", "--profile", "hi",
                        "--policy", "qbps", "--reps", "2", "--duration", "600",
                        "--out", str(out)], check=False)
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] and outs[0]
