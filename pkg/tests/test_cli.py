import csv

import numpy as np
import pytest

from adfsdca.cli import main

SYNTH = "60,12,0.4,3"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_writes_traces_and_summary(tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "train",
            "--synthetic", SYNTH,
            "--variant", "dfsdca",
            "--variant", "adfsdca",
            "--variant", "adfsdca+:s=10",
            "--epochs", "12",
            "--seed", "0",
            "--seed", "1",
            "--out", str(out),
        ]
    )
    assert rc == 0
    names = {p.name for p in out.iterdir()}
    assert "summary.csv" in names and "metadata.txt" in names
    for label in ("dfsdca", "adfsdca", "adfsdca_plus_s10"):
        for seed in (0, 1):
            assert f"{label}_seed{seed}.csv" in names
            assert f"{label}_seed{seed}_timing.csv" in names
    rows = read_csv(out / "summary.csv")
    assert rows[0] == ["variant", "seed", "epochs_to_1e-4", "epochs_to_1e-6", "seconds"]
    assert len(rows) == 7
    # epochs-to-target monotone in the target
    for row in rows[1:]:
        e4, e6 = row[2], row[3]
        if e4 and e6:
            assert int(e6) >= int(e4)
    trace = read_csv(out / "adfsdca_seed0.csv")
    assert trace[0] == ["epoch", "iter", "primal", "subopt", "gap_G", "residue_norm", "residue_p90", "theta"]
    assert len(trace) == 14  # epochs 0..12 plus header
    subopt = [float(r[3]) for r in trace[1:]]
    assert subopt[-1] < subopt[0]


def test_train_deterministic_traces(tmp_path):
    args = [
        "train",
        "--synthetic", SYNTH,
        "--variant", "adfsdca",
        "--variant", "minibatch:b=4",
        "--epochs", "5",
        "--seed", "3",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for name in ("adfsdca_seed3.csv", "minibatch_b4_seed3.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_train_unknown_variant(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--synthetic", SYNTH, "--variant", "sgd", "--out", str(tmp_path)])
    assert exc.value.code != 0


def test_train_zero_epochs_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--synthetic", SYNTH, "--epochs", "0", "--out", str(tmp_path)])
    assert exc.value.code != 0


def test_train_infeasible_batch_before_running(tmp_path):
    out = tmp_path / "never"
    with pytest.raises(SystemExit) as exc:
        main(["train", "--synthetic", SYNTH, "--variant", "minibatch:b=60", "--out", str(out)])
    assert exc.value.code != 0
    assert not out.exists() or not any(out.iterdir())


def test_train_requires_exactly_one_source(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--out", str(tmp_path)])


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text("synthetic=60,12,0.4,3\nepochs=4\nvariant=adfsdca\nseed=2\n")
    out = tmp_path / "oconf"
    assert main(["train", "--config", str(conf), "--epochs", "6", "--out", str(out)]) == 0
    trace = read_csv(out / "adfsdca_seed2.csv")
    assert len(trace) == 8  # flag epochs=6 wins over config epochs=4


def test_residue_density_outputs(tmp_path):
    out = tmp_path / "dens"
    rc = main(
        [
            "residue-density",
            "--synthetic", SYNTH,
            "--epochs-at", "0",
            "--epochs-at", "2",
            "--out", str(out),
        ]
    )
    assert rc == 0
    for variant in ("dfsdca", "adfsdca"):
        for epoch in (0, 2):
            rows = read_csv(out / f"residue_{variant}_epoch{epoch}.csv")
            assert rows[0] == ["bin_lo", "bin_hi", "count"]
            assert len(rows) == 51
            assert sum(int(r[2]) for r in rows[1:]) == 60
    # epoch-0 snapshots are taken before any step: identical histograms
    assert (out / "residue_dfsdca_epoch0.csv").read_bytes() == (out / "residue_adfsdca_epoch0.csv").read_bytes()


def test_residue_density_empty_epoch_list(tmp_path):
    out = tmp_path / "empty"
    assert main(["residue-density", "--synthetic", SYNTH, "--out", str(out)]) == 0
    assert not out.exists() or not any(out.iterdir())


def test_sample_test_toy_levels(tmp_path):
    out = tmp_path / "fig"
    rc = main(["sample-test", "--dist", "0.8,0.6,0.4,0.2", "--batch", "2", "--draws", "20000", "--out", str(out)])
    assert rc == 0
    levels = read_csv(out / "levels.csv")
    assert levels[0] == ["level", "t", "i", "j"]
    ts = [float(r[1]) for r in levels[1:]]
    assert np.allclose(ts, [0.2, 0.4, 0.4], atol=1e-12)
    assert [(r[2], r[3]) for r in levels[1:]] == [("2", "2"), ("2", "3"), ("1", "4")]
    marg = read_csv(out / "marginals.csv")
    assert [float(r[2]) for r in marg[1:]] == pytest.approx([0.8, 0.6, 0.4, 0.2], abs=1e-12)
    chi2 = read_csv(out / "chi2.csv")
    assert [r[0] for r in chi2[1:]] == ["plan", "cdf", "alias", "tree"]
    assert all(float(r[3]) > 0.001 for r in chi2[1:])


def test_sample_test_uniform_single_level(tmp_path):
    out = tmp_path / "uni"
    assert main(["sample-test", "--dist", "uniform", "--n", "8", "--batch", "2", "--draws", "1000", "--out", str(out)]) == 0
    levels = read_csv(out / "levels.csv")
    assert len(levels) == 2  # header + the single uniform level


def test_sample_test_infeasible_marginal(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample-test", "--dist", "1.0,0.5,0.5", "--batch", "2", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "q[0]" in capsys.readouterr().err


def test_reference_command(tmp_path):
    out = tmp_path / "ref"
    assert main(["reference", "--synthetic", SYNTH, "--out", str(out)]) == 0
    rows = read_csv(out / "reference.csv")
    assert rows[0] == ["kind", "index", "value"]
    kinds = {r[0] for r in rows[1:]}
    assert kinds == {"w", "alpha"}
    meta = (out / "reference_meta.txt").read_text()
    assert "primal=" in meta and "approximate=False" in meta
