import random

import pytest

from crlmesh import mobility, sim


def small_cfg(**kw):
    base = dict(
        seed=11, n_vehicles=120, n_rsus=6, grid_rows=4, grid_cols=4,
        cell_m=250.0, sim_duration_s=60, entry_window_s=30, checkpoint_s=45,
        revocation_rate=0.02,
    )
    base.update(kw)
    return sim.ScenarioConfig(**base)


# -- config handling --

def test_config_defaults_fill_derived_fields():
    cfg = sim.ScenarioConfig(sim_duration_s=200)
    assert cfg.entry_window_s == 100
    assert cfg.checkpoint_s == 150


def test_config_validation_errors():
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(n_vehicles=0)
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(scheme="nonsense")
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(revocation_rate=1.5)
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(issue_interval_s=90, psnym_lifetime_s=60)
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(crl_window_s=700, issue_interval_s=60)
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(sim_duration_s=601, crl_window_s=600)
    with pytest.raises(sim.ConfigError):
        sim.ScenarioConfig(checkpoint_s=999, sim_duration_s=300)


def test_config_file_parse(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(
        "# scenario\nseed = 9\nn_vehicles = 50   # inline comment\n"
        "scheme = baseline\ncell_m = 300.5\n"
    )
    cfg = sim.ScenarioConfig.from_file(str(path))
    assert cfg.seed == 9 and cfg.n_vehicles == 50
    assert cfg.scheme == "baseline" and cfg.cell_m == 300.5


def test_config_file_unknown_key_named_in_error(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("bogus_key = 3\n")
    with pytest.raises(sim.ConfigError, match="bogus_key"):
        sim.ScenarioConfig.from_file(str(path))


def test_config_file_bad_value(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("seed = banana\n")
    with pytest.raises(sim.ConfigError, match="seed"):
        sim.ScenarioConfig.from_file(str(path))


def test_config_hash_tracks_content():
    a = sim.ScenarioConfig(seed=1)
    b = sim.ScenarioConfig(seed=1)
    c = sim.ScenarioConfig(seed=2)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


# -- RSU placement --

def test_place_rsus_skips_within_radio_range():
    grid = mobility.GridSpec(4, 4, 250.0)
    ranked = mobility.rank_intersections(grid, random.Random(0))
    placed = sim.place_rsus(ranked, grid, 6, radio_range_m=300.0)
    assert len(placed) == 6
    for i, (x1, y1) in enumerate(placed):
        for x2, y2 in placed[i + 1:]:
            assert ((x1 - x2) ** 2 + (y1 - y2) ** 2) ** 0.5 >= 300.0


def test_place_rsus_shortfall_when_grid_too_small():
    grid = mobility.GridSpec(1, 1, 100.0)  # 4 intersections inside 300 m
    ranked = mobility.rank_intersections(grid, random.Random(0))
    placed = sim.place_rsus(ranked, grid, 5, radio_range_m=300.0)
    assert len(placed) == 1


# -- end-to-end behavior --

def test_run_is_deterministic():
    m1 = sim.run(small_cfg())
    m2 = sim.run(small_cfg())
    assert m1.latency == m2.latency
    assert m1.cognizant == m2.cognizant
    assert m1.overhead == m2.overhead
    assert m1.counters == m2.counters


def test_csv_bytes_identical_across_reruns(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    sim.run(small_cfg()).write_csvs(str(d1))
    sim.run(small_cfg()).write_csvs(str(d2))
    for name in ("latency.csv", "cognizant.csv", "overhead.csv", "events.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_empty_crl_is_trivially_complete():
    m = sim.run(small_cfg(revocation_rate=0.0))
    assert m.counters["crl_pieces_window"] == 0
    for _, enter_s, complete_s in m.latency:
        assert complete_s == pytest.approx(enter_s)
    assert m.latency_percentile(0.95) == 0.0


def test_honest_nodes_respect_bandwidth_budget():
    for scheme in sim.SCHEMES:
        m = sim.run(small_cfg(scheme=scheme, attacker_fraction=0.2))
        assert m.max_tx_in_any_second() <= small_cfg().bandwidth_bytes_s


def test_vehicles_learn_revoked_serials():
    cfg = small_cfg()
    s = sim.Simulation(cfg)
    s.run()
    revoked = set()
    for w in s.pca.registry:
        from crlmesh.node import derive_serials

        for e in s.pca.window_entries(w):
            if w == 0:
                revoked.update(derive_serials(e))
    completed = [v for v in s.vehicles if not v.attacker and v.completed_ms is not None]
    assert completed
    for v in completed[:10]:
        assert v.store.all_serials(0) == revoked


def test_attackers_never_complete_and_are_excluded():
    cfg = small_cfg(attacker_fraction=0.25)
    s = sim.Simulation(cfg)
    m = s.run()
    n_attackers = round(0.25 * cfg.n_vehicles)
    assert len(m.latency) == cfg.n_vehicles - n_attackers
    assert m.counters.get("fakes_sent", 0) > 0
    assert m.counters.get("pollution_rejected", 0) >= 0


def test_baseline_pieces_individually_signed():
    cfg = small_cfg(scheme="baseline")
    s = sim.Simulation(cfg)
    from crlmesh.crypto import verify

    assert s.base_pieces
    for p in s.base_pieces:
        assert verify(s.pca.key.public_bytes, p.signing_bytes(), p.signature)
    ann = s.announcement
    assert verify(s.pca.key.public_bytes, ann.signing_bytes(), ann.signature)


def test_summary_lines_contain_key_metrics():
    m = sim.run(small_cfg())
    text = "\n".join(m.summary_lines())
    for token in ("p95_latency_s", "final_cognizant_fraction",
                  "total_security_overhead_bytes", "config_hash", "seed"):
        assert token in text


def test_csvs_carry_provenance_comment(tmp_path):
    cfg = small_cfg()
    m = sim.run(cfg)
    m.write_csvs(str(tmp_path))
    head = (tmp_path / "latency.csv").read_text().splitlines()[0]
    assert head.startswith("#")
    assert cfg.config_hash() in head and f"seed={cfg.seed}" in head
