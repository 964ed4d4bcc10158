import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ffl.data.io import save_dataset
from ffl.data.synthetic import generate_synthetic
from ffl.experiments import (
    ConfigError,
    ExperimentConfig,
    MismatchedRunsError,
    RunRecord,
    compare_runs,
    default_experiment_config,
    emit_plots,
    parse_config,
    parse_config_text,
    prepare_sites,
    run_experiment,
    write_comparison_csv,
)

SITE_A = {"site_id": "A", "n": 60, "labels": [{"name": "d1", "formula": "z1"}, {"name": "d2", "formula": "z2"}]}
SITE_B = {
    "site_id": "B",
    "n": 120,
    "labels": [{"name": "d1_or_d3", "formula": "z1 | z3"}, {"name": "d4", "formula": "z4"}],
}


def small(**over):
    d = {
        "federation": {"rounds": 2, "fine_tune_epochs": 1},
        "backbone": [{"type": "dense", "out": 8}, {"type": "relu"}],
        "eval": {"bootstrap": 50},
        "sites": [SITE_A, SITE_B],
    }
    d.update(over)
    return parse_config_text(json.dumps(d))


# --- config ---------------------------------------------------------------------------------


def test_minimal_config_gets_defaults():
    cfg = parse_config_text(json.dumps({"sites": [SITE_A]}))
    f = cfg.federation_config()
    assert (f.batch_size, f.backbone_lr, f.head_lr) == (16, 5e-5, 9e-5)
    assert cfg.eval.bootstrap == 1000
    assert cfg.mode == "federated" and cfg.transport == "inproc"


def test_batch_size_zero_names_the_field():
    with pytest.raises(ConfigError, match=r"federation\.batch_size"):
        parse_config_text(json.dumps({"sites": [SITE_A], "federation": {"batch_size": 0}}))


@pytest.mark.parametrize(
    "bad, where",
    [
        ({"sites": [SITE_A], "federation": {"round": 3}}, "federation.round"),
        ({"sites": [SITE_A], "typo": 1}, "typo"),
        ({"sites": []}, "sites"),
        ({"sites": [SITE_A, SITE_A]}, "unique"),
        ({"sites": [dict(SITE_A, labels=[{"name": "x", "formula": "z7"}])]}, "z7"),
        ({"sites": [dict(SITE_A, labels=[{"name": "x", "formula": "z1"}, {"name": "x", "formula": "z2"}])]}, "duplicate"),
        ({"sites": [{"site_id": "A"}]}, "synthetic site"),
        ({"sites": [SITE_A], "federation": {"rounds": "3"}}, "federation.rounds"),
        ({"sites": [SITE_A], "federation": {"head_lr": -1.0}}, "federation.head_lr"),
        ({"sites": [SITE_A], "mode": "central"}, "mode"),
    ],
)
def test_config_errors(bad, where):
    with pytest.raises(ConfigError, match=where):
        parse_config_text(json.dumps(bad))


def test_config_round_trip():
    cfg = default_experiment_config()
    assert parse_config_text(cfg.to_json()) == cfg
    cfg2 = small()
    assert parse_config_text(cfg2.to_json()) == cfg2


def test_config_hash_ignores_key_order_and_output_dir():
    d = json.loads(small().to_json())
    shuffled = json.dumps(dict(reversed(list(d.items()))))
    a, b = parse_config_text(json.dumps(d)), parse_config_text(shuffled)
    assert a.config_hash() == b.config_hash()
    assert a.model_copy(update={"output_dir": "/x"}).config_hash() == a.config_hash()
    assert a.model_copy(update={"seed": 9}).config_hash() != a.config_hash()


def test_dataset_paths_resolve_relative_to_config(tmp_path):
    (ds,) = generate_synthetic(small(sites=[SITE_A]).latent_config(), [40], seed=0)
    save_dataset(ds, tmp_path / "data" / "a")
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"sites": [{"site_id": "A", "dataset": "data/a"}]}))
    cfg = parse_config(p)
    assert cfg.sites[0].dataset == str((tmp_path / "data" / "a").resolve())
    p.write_text(json.dumps({"sites": [{"site_id": "A", "dataset": "nope"}]}))
    with pytest.raises(ConfigError, match="no such directory"):
        parse_config(p)


def test_conv_backbone_config():
    cfg = parse_config_text(
        json.dumps(
            {
                "synthetic": {"image_size": [10, 10]},
                "backbone": [
                    {"type": "conv2d", "out_channels": 3, "kernel": 3},
                    {"type": "relu"},
                    {"type": "maxpool", "kernel": 2},
                    {"type": "flatten"},
                    {"type": "dense", "out": 6},
                ],
                "sites": [SITE_A],
            }
        )
    )
    spec = cfg.backbone_spec((10, 10))
    assert spec.input_shape == (1, 10, 10)
    assert spec.output_shape == (6,)
    with pytest.raises(ConfigError):
        small().backbone_spec((10, 10))


# --- runs -----------------------------------------------------------------------------------


def test_local_run_is_deterministic():
    cfg = small(mode="local", sites=[SITE_A])
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json(include_wall_clock=False) == b.to_json(include_wall_clock=False)


def test_federated_run_is_deterministic():
    cfg = small()
    assert run_experiment(cfg).to_json(False) == run_experiment(cfg).to_json(False)


def test_one_site_federated_metrics_equal_local():
    fed = run_experiment(small(sites=[SITE_A]))
    loc = run_experiment(small(sites=[SITE_A], mode="local"))
    assert fed.sites["A"].model_digest == loc.sites["A"].model_digest
    assert fed.sites["A"].report == loc.sites["A"].report


def test_tcp_run_matches_inproc():
    a = run_experiment(small())
    b = run_experiment(small(transport="tcp"))
    for sid in a.sites:
        assert a.sites[sid].model_digest == b.sites[sid].model_digest
        assert a.sites[sid].report == b.sites[sid].report
    assert a.history == b.history


def test_record_round_trips_through_json(tmp_path):
    rec = run_experiment(small(), tmp_path)
    back = RunRecord.load(tmp_path / "run.json")
    assert back.to_json() == rec.to_json()
    d = json.loads((tmp_path / "run.json").read_text())
    assert d["format_version"] == 1
    assert set(d["sites"]) == {"A", "B"}
    assert d["config_hash"] == small().config_hash()


def test_record_rejects_unknown_format():
    d = json.loads(run_experiment(small(sites=[SITE_A])).to_json())
    d["format_version"] = 99
    with pytest.raises(ValueError):
        RunRecord.from_dict(d)


def test_splits_are_patient_disjoint():
    for p in prepare_sites(small()):
        assert not set(p.train.patient_ids) & set(p.test.patient_ids)


def test_dataset_site_with_fixed_test_set(tmp_path):
    lat = small(sites=[SITE_A]).latent_config()
    tr, te = generate_synthetic(lat, [50], seed=1)[0], generate_synthetic(lat, [30], seed=2)[0]
    save_dataset(tr, tmp_path / "tr")
    save_dataset(te, tmp_path / "te")
    cfg = small(sites=[{"site_id": "A", "dataset": str(tmp_path / "tr"), "test_dataset": str(tmp_path / "te")}])
    (p,) = prepare_sites(cfg)
    assert p.train.content_hash() == tr.content_hash() and p.test.content_hash() == te.content_hash()
    rec = run_experiment(cfg)
    assert rec.sites["A"].test_set_hash == te.content_hash()


# --- compare and plots ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def two_arms():
    return run_experiment(small(mode="local")), run_experiment(small())


def test_compare_same_run_gives_large_p(two_arms, tmp_path):
    a, _ = two_arms
    rows = compare_runs(a, a)
    assert [r.site for r in rows] == ["A", "B"]
    assert all(r.p_value >= 0.5 for r in rows)
    path = write_comparison_csv(rows, tmp_path / "cmp.csv")
    with path.open() as f:
        got = list(csv.reader(f))
    assert got[0] == ["site", "arm_a_auroc", "arm_b_auroc", "p_value"]
    assert len(got) == 3


def test_compare_reports_both_arms(two_arms):
    a, b = two_arms
    rows = {r.site: r for r in compare_runs(a, b)}
    for sid in ("A", "B"):
        assert rows[sid].arm_a_auroc == a.sites[sid].report.macro_auroc
        assert rows[sid].arm_b_auroc == b.sites[sid].report.macro_auroc
        assert 0 < rows[sid].p_value <= 1


def test_compare_refuses_different_test_sets(two_arms):
    a, _ = two_arms
    other = run_experiment(small(seed=1))
    with pytest.raises(MismatchedRunsError):
        compare_runs(a, other)
    one = run_experiment(small(sites=[SITE_A]))
    with pytest.raises(MismatchedRunsError):
        compare_runs(a, one)


def test_plots_csv_matches_records(two_arms, tmp_path):
    a, b = two_arms
    paths = emit_plots([a, b], tmp_path)
    with paths["csv"].open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    for r in rows:
        rec = a if r["arm"] == "local" else b
        rep = rec.sites[r["site"]].report
        assert float(r["macro_auroc"]) == rep.macro_auroc
        assert float(r["ci95_low"]) == rep.bootstrap.ci95[0]
    root = ET.parse(paths["svg"]).getroot()
    assert root.tag.endswith("svg")


def test_plot_single_record_single_site(tmp_path):
    rec = run_experiment(small(sites=[SITE_A]))
    paths = emit_plots([rec], tmp_path)
    with paths["csv"].open() as f:
        assert len(list(csv.DictReader(f))) == 1
    ET.parse(paths["svg"])


def test_plot_needs_records(tmp_path):
    with pytest.raises(ValueError):
        emit_plots([], tmp_path)


def test_default_config_file_matches_builtin():
    from pathlib import Path

    p = Path(__file__).resolve().parents[1] / "configs" / "synthetic_default.json"
    assert parse_config(p) == default_experiment_config()


def test_scores_are_probabilities(two_arms):
    for rec in two_arms:
        for s in rec.sites.values():
            assert np.all((s.test_scores > 0) & (s.test_scores < 1))
            assert s.test_scores.shape == (s.n_test, len(s.label_names))
