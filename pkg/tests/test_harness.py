import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadrl import cli
from dyadrl.config import load_config, parse_config
from dyadrl.env_model import ConfigurationError, ContractViolation, TestbedVariant, VariantKind
from dyadrl.harness import io
from dyadrl.harness.experiments import (
    ablation_suite,
    collaboration_experiment,
    cumulative_improvement,
    summarize,
)
from dyadrl.harness.trial import Algorithm, RunMetrics, TrialConfig, build_testbed_at, run_trial


def metrics(adh, label="x"):
    adh = np.asarray(adh, dtype=np.uint8)
    R, n = adh.shape[:2]
    return RunMetrics(label, np.arange(R), np.zeros((R, n), dtype=int), adh)


@pytest.fixture
def tb(small_pop):
    tb = build_testbed_at(small_pop, 0.5, with_policy=False)
    tb.ste_target = tb.achieved_ste = 0.5
    return tb


def test_improvement_identical_runs_is_zero():
    m = metrics(np.random.default_rng(0).integers(0, 2, (4, 3, 196)))
    mean, sd = cumulative_improvement(m, m)
    assert np.all(mean == 0) and np.all(sd == 0)


def test_improvement_two_constant_differences():
    base = np.zeros((2, 5, 196))
    alt = base.copy()
    alt[0, 0, :3] = 1  # run 0 leads by 3 from the first dyad on
    alt[1, 0, :7] = 1  # run 1 leads by 7
    mean, sd = cumulative_improvement(metrics(alt), metrics(base))
    assert np.allclose(mean, 5.0)
    assert np.allclose(sd, abs(3 - 7) / np.sqrt(2))  # sample sd (ddof=1)
    per, _ = cumulative_improvement(metrics(alt), metrics(base), per_dyad=True)
    assert np.allclose(per, 5.0 / np.arange(1, 6))


def test_improvement_requires_pairing():
    a = metrics(np.zeros((2, 3, 196)))
    with pytest.raises(ContractViolation):
        cumulative_improvement(a, metrics(np.zeros((3, 3, 196))))
    b = metrics(np.zeros((2, 3, 196)))
    b.dyad_ids = b.dyad_ids + 1
    with pytest.raises(ContractViolation):
        cumulative_improvement(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 4))
def test_improvement_properties(seed, R, n):
    rng = np.random.default_rng(seed)
    a, b = metrics(rng.integers(0, 2, (R, n, 196))), metrics(rng.integers(0, 2, (R, n, 196)))
    mean, sd = cumulative_improvement(a, b)
    assert mean.shape == (n,) and np.all(sd >= 0)
    assert np.all(np.diff(a.cumulative, axis=1) >= 0)
    assert np.all((a.total >= 0) & (a.total <= 196 * n))
    perm = rng.permutation(R)
    pa, pb = metrics(a.adherence[perm]), metrics(b.adherence[perm])
    mean2, sd2 = cumulative_improvement(pa, pb)
    assert np.allclose(mean, mean2) and np.allclose(sd, sd2)


def test_curve_has_one_point_per_dyad(tb):
    cfg = TrialConfig("MultiAgent", n_dyads=3, n_runs=2, ste_target=0.5)
    m = run_trial(cfg, tb)
    base = run_trial(TrialConfig("UniformRandom", n_dyads=3, n_runs=2, ste_target=0.5), tb)
    mean, _ = cumulative_improvement(m, base)
    assert len(mean) == 3
    assert np.allclose(mean, (m.cumulative - base.cumulative).mean(axis=0))
    assert np.array_equal(m.dyad_ids, base.dyad_ids)


def test_run_trial_deterministic_and_chunking_invariant(tb):
    cfg = TrialConfig("MultiAgentSurrogate", n_dyads=2, n_runs=3, master_seed=4)
    a = run_trial(cfg, tb)
    b = run_trial(cfg, tb, chunk_size=1)
    c = run_trial(cfg, tb, jobs=2)
    for other in (b, c):
        assert np.array_equal(a.adherence, other.adherence)
        assert np.array_equal(a.dyad_ids, other.dyad_ids)
    # Adding runs does not change existing ones.
    more = run_trial(TrialConfig("MultiAgentSurrogate", n_dyads=2, n_runs=4, master_seed=4), tb)
    assert np.array_equal(more.adherence[:3], a.adherence)


def test_random_against_itself(tb):
    cfg = lambda key: TrialConfig("UniformRandom", n_runs=200, ste_target=0.5, stream_key=key)  # noqa: E731
    a, b = run_trial(cfg("first"), tb), run_trial(cfg("second"), tb)
    mean, sd = cumulative_improvement(a, b, per_dyad=True)
    assert abs(mean[-1]) < 2 * sd[-1] / np.sqrt(200)


def test_mismatched_calibration_rejected(tb):
    with pytest.raises(ConfigurationError):
        run_trial(TrialConfig("MultiAgent", n_runs=1, ste_target=0.15), tb)
    with pytest.raises(ConfigurationError):
        run_trial(TrialConfig("MultiAgent", n_runs=1, variant=TestbedVariant(VariantKind.NO_MEDIATOR)), tb)


def test_algorithm_parsing():
    assert Algorithm.parse("FixedProb(0.7)").probs == (0.7, 0.7, 0.7)
    assert Algorithm.parse("FixedProb(0.1, 0.2, 0.3)").label == "FixedProb(0.1,0.2,0.3)"
    for bad in ("FixedProb(2)", "Nope", "FixedProb(0.1,0.2)"):
        with pytest.raises(ConfigurationError):
            Algorithm.parse(bad)


def test_summary_relative(tb):
    base = metrics(np.ones((2, 2, 196)) * (np.arange(196) < 100))
    alt = metrics(np.ones((2, 2, 196)) * (np.arange(196) < 103))
    s = summarize(alt, base)
    assert s.mean == pytest.approx(3.0) and s.relative == pytest.approx(0.03) and s.se == 0.0


def test_empty_ablation_grid():
    assert ablation_suite([]) == []


def test_collaboration_validates_components(tb):
    with pytest.raises(ValueError):
        collaboration_experiment(tb, "REL", {"aya": 0.5})
    with pytest.raises(ValueError):
        collaboration_experiment(tb, "REL", {"aya": 0.5, "rel": 0.5})
    res = collaboration_experiment(tb, "CARE", {"aya": 0.5, "rel": 0.25}, n_dyads=2, n_reps=2)
    assert res.rates.shape == (2,) and np.all((res.rates >= 0) & (res.rates <= 1))


# ---------------------------------------------------------------- io / config / cli

def test_curve_file_format(tmp_path):
    path = io.write_curve(tmp_path / "c.csv", [1.5, 2.0], [0.1, 0.2], 7)
    text = path.read_bytes().decode("utf-8")
    assert text.splitlines()[0] == "dyad_index,mean_improvement,sd,n_runs"
    assert text.endswith("\n")
    back = io.read_curve(path)
    assert back["dyad_index"].tolist() == [1, 2] and back["n_runs"].tolist() == [7, 7]


def test_prepare_output_refuses_existing_manifest(tmp_path):
    out = io.prepare_output(tmp_path / "run")
    io.write_manifest(out, "run", "", 0, [])
    with pytest.raises(io.ManifestError):
        io.prepare_output(out)
    assert io.prepare_output(out, force=True) == out


def test_config_parsing():
    cfg = parse_config("[population]\nam_b0 = 0.5, 0.2\n[trial]\nalgorithms = FixedProb(0.7,0.7,0.7); MultiAgent\n"
                       "ste_targets = 0.3\n[variant]\nkind = NoMediator\n")
    assert cfg.population.coeffs["am_b0"] == (0.5, 0.2)
    assert [a.label for a in cfg.algorithms] == ["FixedProb(0.7,0.7,0.7)", "MultiAgent"]
    assert cfg.ste_targets == (0.3,) and cfg.variant.kind is VariantKind.NO_MEDIATOR
    for bad in ("[trial]\nn_runz = 3\n", "[bogus]\n", "[population]\nam_b0 = 1\n",
                "[population]\nam_b1 = 0.3, -1\n", "[variant]\nkind = Other\n", "[trial]\nn_runs = x\n"):
        with pytest.raises(ConfigurationError):
            parse_config(bad)
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/config.ini")


TINY = """[population]
size = 12
[trial]
algorithms = MultiAgent
n_dyads = 2
n_runs = 2
ste_targets = 0.5
[calibration]
n_eval = 4
q_trajectories = 60
"""


def test_cli_run_is_reproducible(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(TINY)
    outs = []
    for name in ("a", "b"):
        rc = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / name)])
        assert rc == 0
        outs.append(tmp_path / name)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "manifest.json" in files and "summary.csv" in files
    for f in files:
        if f.endswith(".csv"):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["config_sha256"] == io.config_hash(TINY) and manifest["master_seed"] == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(outs[0])]) == cli.EXIT_IO


def test_cli_errors_leave_no_outputs(tmp_path, capsys):
    out = tmp_path / "never"
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    assert cli.main(["frobnicate", "--out", str(out)]) == cli.EXIT_USAGE
    bad = tmp_path / "bad.ini"
    bad.write_text("[trial]\nnruns = 3\n")
    assert cli.main(["calibrate", "--config", str(bad), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    assert "configuration error" in capsys.readouterr().err


def test_cli_export_population(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[population]\nsize = 3\n")
    assert cli.main(["export-population", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "population.csv").read_text()
    assert text.startswith("#format=dyadrl-population")
