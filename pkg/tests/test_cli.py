import csv
import json
import shutil
import subprocess

import pytest
from helpers import mini_config

from wingcrack.cli import main, make_client

HEADER = (
    "t_s,tip_id,K_I,K_II,theta0_deg,wing_len_m,"
    "probe_C_p_Pa,probe_C_ux_m,probe_C_uy_m,probe_D_p_Pa,probe_D_ux_m,probe_D_uy_m"
)


def write(path, data):
    path.write_text(json.dumps(data))
    return path


def run(cfg_path, out, *extra):
    return main(["run", "--config", str(cfg_path), "--out", str(out), *extra])


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    cfg = write(d / "small.json", mini_config(stop={"t_end_h": 2}))
    code = run(cfg, d / "out", "--vtk-every", "1")
    return code, cfg, d / "out"


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    assert capsys.readouterr().out.split() == ["onset_5_1", "three_frac_5_3", "wingcrack_5_2"]


def test_console_script():
    exe = shutil.which("simulate")
    assert exe is not None
    out = subprocess.run([exe, "presets", "list"], capture_output=True, text=True, check=True)
    assert "wingcrack_5_2" in out.stdout


def test_config_errors_exit_4(tmp_path, capsys):
    assert run(tmp_path / "missing.json", tmp_path / "o") == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(bad, tmp_path / "o") == 4
    assert run(write(tmp_path / "x.json", mini_config(unknown=1)), tmp_path / "o") == 4
    assert "unknown" in capsys.readouterr().err


def test_small_run_outputs(small_run):
    code, _, out = small_run
    assert code == 0
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert lines[0] == HEADER
    # one row per tip per step
    assert len(lines) == 1 + 2 * 2
    assert (out / "sif_history.csv").read_text().splitlines()[0] == "t,tip_id,K_I,K_II,theta0,K_eq,propagated"
    assert sorted(p.name for p in (out / "vtk").iterdir()) == ["step_00000.vtk", "step_00001.vtk", "step_00002.vtk"]
    assert (out / "vtk" / "step_00001.vtk").read_text().startswith("# vtk DataFile Version 3.0\n")
    m = json.loads((out / "manifest.json").read_text())
    assert (m["status"], m["exit_code"], m["stop_reason"], m["steps"]) == ("complete", 0, "t_end", 2)
    assert len(m["config_sha256"]) == 64 and "numpy" in m["versions"]
    assert (out / "checkpoint.npz").is_file() and (out / "fracture_paths.txt").read_text().startswith("# t_s 0.0\n")


def test_run_is_byte_deterministic(small_run, tmp_path):
    _, cfg, out = small_run
    assert run(cfg, tmp_path / "again", "--vtk-every", "1") == 0
    names = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(tmp_path / "again") for p in (tmp_path / "again").rglob("*") if p.is_file())
    for n in names:
        a, b = (out / n).read_bytes(), (tmp_path / "again" / n).read_bytes()
        if n.name == "manifest.json":
            ja, jb = json.loads(a), json.loads(b)
            ja.pop("wall_time_s"), jb.pop("wall_time_s")
            assert ja == jb
        else:
            assert a == b, n


def test_unloaded_model_stays_at_rest(tmp_path):
    free = {"kind": "traction", "normal": 0.0}
    cfg = mini_config(boundary={"right": free, "top": free}, injection=[], stop={"t_end_h": 1})
    assert run(write(tmp_path / "z.json", cfg), tmp_path / "o") == 0
    with open(tmp_path / "o" / "timeseries.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k not in ("t_s", "tip_id", "theta0_deg", "wing_len_m"):
                assert float(v) == 0.0, k


def test_nonconvergence_exit_2(tmp_path):
    cfg = mini_config(numerics={"max_newton": 1, "newton_tol": 1e-30}, stop={"t_end_h": 1})
    assert run(write(tmp_path / "n.json", cfg), tmp_path / "o") == 2
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["status"] == "nonconvergence" and m["exit_code"] == 2
    assert (tmp_path / "o" / "checkpoint.npz").is_file()


def test_geometry_abort_exit_3(tmp_path):
    cfg = mini_config(
        fractures=[{"points": [[1.85, 1.0], [1.93, 1.0]], "tip_ids": ["L", "R"]}],
        boundary={"top": {"kind": "traction", "normal": 10e6}, "right": {"kind": "roller"}},
        injection=[], K_IC=0.7e6,
    )
    assert run(write(tmp_path / "g.json", cfg), tmp_path / "o") == 3
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["status"] == "geometry_abort"


def test_sweep_runs_each_config(tmp_path, capsys):
    cfgs = tmp_path / "cfgs"
    cfgs.mkdir()
    write(cfgs / "a.json", mini_config(stop={"t_end_h": 1}))
    write(cfgs / "b.json", mini_config(stop={"t_end_h": 1}, numerics={"max_newton": 1, "newton_tol": 1e-30}))
    code = main(["sweep", "--configs", str(cfgs / "*.json"), "--out", str(tmp_path / "o"), "--jobs", "2"])
    assert code == 2
    assert (tmp_path / "o" / "a" / "timeseries.csv").is_file()
    assert json.loads((tmp_path / "o" / "b" / "manifest.json").read_text())["exit_code"] == 2
    out = capsys.readouterr().out
    assert "a.json: complete (exit 0)" in out and "b.json: nonconvergence (exit 2)" in out
    assert main(["sweep", "--configs", str(tmp_path / "none*.json"), "--out", str(tmp_path / "o")]) == 4


def test_service_endpoints():
    with make_client(None) as c:
        assert c.get("/health").json() == {"status": "ok"}
        assert c.get("/presets/nope").status_code == 404
        assert c.get("/presets/onset_5_1").json()["name"] == "onset_5_1"
        ok = c.post("/validate", json={"config": mini_config()}).json()
        assert ok["valid"] and len(ok["config_sha256"]) == 64
        bad = c.post("/validate", json={"config": mini_config(numerics={"dH": 0})}).json()
        assert not bad["valid"] and "dH" in bad["error"]
        assert c.post("/runs", json={"config": {}, "out_dir": "/tmp/x"}).json()["exit_code"] == 4
