import json
import math
import struct

import pytest

from softguide import cli_harness as ch
from softguide.errors import BracketError, ConfigError, InconclusiveError, NonConvergenceError


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("SOFTGUIDE_CACHE_DIR", str(d))
    return d


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


def read_csv(path):
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_delta_solve1d_energy(tmp_path):
    cfg = write_config(tmp_path / "c.json", experiment="solve1d", kind="delta_point", depth=2.0)
    assert ch.main(["solve1d", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    res = json.loads((tmp_path / "out" / "result.json").read_text())
    assert res["energy"] == -1.0
    header, rows = read_csv(tmp_path / "out" / "eigenvalues.csv")
    assert header == ["index", "eigenvalue", "residual"]
    assert rows == [["0", "-1", "0"]]


def test_square_well_solve1d(tmp_path):
    cfg = ch.ExperimentConfig.from_dict(dict(experiment="solve1d", kind="square_well", a=1.0, depth=1.0,
                                             n_list=[1000, 2000, 4000], L=20.0, k=2))
    rec = ch.run(cfg, out=str(tmp_path / "out"))
    res = json.loads((tmp_path / "out" / "result.json").read_text())
    assert res["energy"] == pytest.approx(-0.4538, abs=1e-4)
    assert rec.diagnostics["residual_max"] < 1e-8
    header, rows = read_csv(tmp_path / "out" / "eigenvalues.csv")
    assert len(rows) == 2 and float(rows[0][1]) < float(rows[1][1])


def test_cache_hit_identical_bytes(tmp_path, cache_dir):
    cfg = ch.ExperimentConfig.from_dict(dict(experiment="sgamma", rho=1.0, beta=0.3, tail_length=1.0))
    r1 = ch.run(cfg, out=str(tmp_path / "a"))
    r2 = ch.run(cfg, out=str(tmp_path / "b"))
    assert not r1.cache_hit and r2.cache_hit
    assert r1.config_hash == r2.config_hash and r1.timestamp == r2.timestamp
    for name in r1.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # forced recomputation reproduces the same bytes
    r3 = ch.run(cfg, force=True, out=str(tmp_path / "c"))
    assert not r3.cache_hit
    for name in r1.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    assert (cache_dir / r1.config_hash / "record.json").exists()


def test_cli_reports_cache_hit(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", experiment="sgamma", rho=2.0)
    assert ch.main(["sgamma", "--config", cfg]) == 0
    assert "computed" in capsys.readouterr().out
    assert ch.main(["sgamma", "--config", cfg]) == 0
    assert "cache hit" in capsys.readouterr().out
    assert ch.main(["sgamma", "--config", cfg, "--force"]) == 0
    assert "computed" in capsys.readouterr().out


def test_sgamma_table_matches_exact_levels(tmp_path):
    ch.run(ch.ExperimentConfig.from_dict(dict(experiment="sgamma", rho=1.0)), out=str(tmp_path))
    header, rows = read_csv(tmp_path / "sgamma.csv")
    assert header == ["index", "eigenvalue", "exact"]
    for _, e, x in rows:
        assert float(e) == pytest.approx(float(x), rel=1e-6)


def test_hash_ignores_output_directory():
    a = ch.ExperimentConfig.from_dict(dict(experiment="solve2d", out="x"))
    b = ch.ExperimentConfig.from_dict(dict(experiment="solve2d", out="y"))
    assert a.digest() == b.digest()
    assert len(a.digest()) == 64 and int(a.digest(), 16) >= 0


def test_hash_changes_with_every_physical_field():
    base = ch.ExperimentConfig(experiment="solve2d")
    changes = dict(rho=0.3, beta=0.1, tail_length=4.0, kind="square_well", exponent=4, a=0.05, depth=100.0,
                   h=0.01, pad=0.5, k=5, tol=1e-7, seed=1, n_list=[1000, 2000, 4000], L=3.0, nu=-1.0,
                   nu_fraction=0.5, beta_list=[0.3], tail_list=[2.0, 3.0, 4.0], a_list=[0.1], ratios=[0.3], exponents=[2],
                   strength_guess=0.5, rtol=1e-3, lambda_list=[1.0], h_list=[0.01], experiment="sgamma")
    names = {f for f in base.physical()}
    assert names == set(changes)
    seen = {base.digest()}
    for k, v in changes.items():
        d = dict(base.physical())
        d[k] = v
        digest = ch.ExperimentConfig(**d).digest()
        assert digest not in seen, k
        seen.add(digest)


def test_canonical_form_sorted():
    cfg = ch.ExperimentConfig(experiment="solve1d")
    d = json.loads(cfg.canonical())
    assert list(d) == sorted(d)
    assert " " not in cfg.canonical()


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", experiment="solve1d", rhoo=0.3)
    assert ch.main(["solve1d", "--config", cfg]) == 2
    assert "rhoo" in capsys.readouterr().err


def test_field_level_validation_messages():
    with pytest.raises(ConfigError) as exc:
        ch.ExperimentConfig.from_dict(dict(experiment="solve2d", rho=-1.0, exponent=3, k=0))
    assert {"rho", "exponent", "k"} <= set(exc.value.fields)
    with pytest.raises(ConfigError) as exc:
        ch.ExperimentConfig.from_dict(dict(experiment="sweep_beta"))
    assert "nu" in exc.value.fields
    with pytest.raises(ConfigError) as exc:
        ch.ExperimentConfig.from_dict(dict(experiment="sweep_beta", nu=-1.0, tail_list=[1.0]))
    assert "tail_list" in exc.value.fields
    with pytest.raises(ConfigError):
        ch.ExperimentConfig.from_dict(dict(experiment="nope"))
    with pytest.raises(ConfigError):
        ch.ExperimentConfig.from_dict(dict(rho=1.0))


def test_mismatched_experiment_name(tmp_path):
    cfg = write_config(tmp_path / "c.json", experiment="sgamma")
    assert ch.main(["solve1d", "--config", cfg]) == 2


def test_invalid_json_exit_code(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert ch.main(["solve1d", "--config", str(p)]) == 2


def test_missing_config_is_io_error(tmp_path):
    assert ch.main(["solve1d", "--config", str(tmp_path / "missing.json")]) == ch.EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_config(tmp_path / "c.json", experiment="solve1d", kind="delta_point", depth=2.0)
    assert ch.main(["solve1d", "--config", cfg, "--out", str(blocker / "sub")]) == ch.EXIT_IO


@pytest.mark.parametrize("exc,code", [
    (NonConvergenceError("stalled", [1.0]), 3),
    (BracketError("no sign change"), 4),
    (InconclusiveError("level inside margin"), 4),
])
def test_experiment_errors_map_to_exit_codes(tmp_path, monkeypatch, exc, code):
    def boom(cfg, workers):
        raise exc

    monkeypatch.setitem(ch.DISPATCH, "sgamma", boom)
    cfg = write_config(tmp_path / "c.json", experiment="sgamma")
    assert ch.main(["sgamma", "--config", cfg]) == code


def test_emit_csv_format(tmp_path):
    rows = [(0.1, 2, 1.0 / 3.0, 0.5, -1e-20)]
    path = ch.emit_csv(rows, "critical", tmp_path / "t.csv")
    header, body = read_csv(path)
    assert header == ["a_over_rho", "exponent", "critical_depth", "sqrt_depth_times_A", "dn_gap"]
    assert body[0][2] == "0.33333333333333331"
    assert float(body[0][2]) == 1.0 / 3.0
    assert body[0][1] == "2"
    with pytest.raises(ValueError):
        ch.emit_csv([(1, 2)], "critical", tmp_path / "bad.csv")


@pytest.mark.parametrize("schema,cols", [
    ("beta_sweep", ["beta", "nu", "count_lower", "count_upper", "variational_n_nu"]),
    ("solve1d", ["index", "eigenvalue", "residual"]),
])
def test_schema_headers(tmp_path, schema, cols):
    header, body = read_csv(ch.emit_csv([], schema, tmp_path / "t.csv"))
    assert header == cols and body == []


def test_atomic_write_leaves_no_temporaries(tmp_path):
    ch.atomic_write(tmp_path / "x.bin", b"abc")
    ch.atomic_write(tmp_path / "x.bin", b"def")
    assert (tmp_path / "x.bin").read_bytes() == b"def"
    assert [p.name for p in tmp_path.iterdir()] == ["x.bin"]


def test_solve2d_hairpin_coarse(tmp_path):
    cfg = ch.ExperimentConfig.from_dict(dict(experiment="solve2d", tail_length=2.0, h=0.025, pad=0.4, k=3))
    rec = ch.run(cfg, out=str(tmp_path))
    res = json.loads((tmp_path / "result.json").read_text())
    assert res["count_lower"] >= 1
    assert res["eigenvalues_dirichlet"][0] < res["threshold_dirichlet"] - res["margin"]
    assert rec.diagnostics["dn_gap"] > 0
    raw = (tmp_path / "ground_dirichlet.sgw1").read_bytes()
    assert raw[:4] == b"SGW1"
    nx, ny = struct.unpack_from("<II", raw, 4)
    assert len(raw) == 64 + 8 * nx * ny
    header, rows = read_csv(tmp_path / "eigenvalues.csv")
    assert header == ["bc", "index", "eigenvalue", "residual"]
    assert [r[0] for r in rows] == ["dirichlet"] * 3 + ["neumann"] * 3


def test_workers_preserve_input_order(tmp_path):
    base = dict(experiment="sweep_width", rho=0.25, tail_length=2.0, h=0.025, pad=0.4, k=2,
                a_list=[0.1, 0.075])
    one = ch.run(ch.ExperimentConfig.from_dict(base), out=str(tmp_path / "one"))
    two = ch.run(ch.ExperimentConfig.from_dict(base), force=True, workers=2, out=str(tmp_path / "two"))
    assert not two.cache_hit
    a = (tmp_path / "one" / "width_sweep.csv").read_bytes()
    b = (tmp_path / "two" / "width_sweep.csv").read_bytes()
    assert a == b
    _, rows = read_csv(tmp_path / "one" / "width_sweep.csv")
    assert [float(r[0]) for r in rows] == [0.1, 0.075]
    assert float(rows[0][1]) == pytest.approx(0.4)
    assert one.config_hash == two.config_hash


def test_sweep_beta_uses_fraction(tmp_path):
    cfg = ch.ExperimentConfig(experiment="sweep_beta", rho=0.12, depth=60.0, nu_fraction=0.5)
    p = cfg.profile()
    nu = ch._sweep_nu(cfg, p)
    er = ch.an.essential_threshold(p, 0.12, 0.0).threshold
    ev = ch.an.essential_threshold(p, 0.12, 1.0).threshold
    assert nu == pytest.approx(0.5 * (er + ev))
    assert not math.isnan(nu)
