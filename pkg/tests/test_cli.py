import csv
import json
import subprocess
import sys

import pytest

from ektau import cli
from ektau import config as cfg

FAST_RIGIDITY = """
[rigidity]
ts = [1.0]
"""


def run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / "run.toml"
        path.write_text(config, encoding="utf-8")
        argv += ["--config", str(path)]
    return cli.main(argv)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def verified(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("verify")
    code = cli.main(["verify", "--out", str(tmp / "out")])
    return code, tmp / "out"


def test_verify_passes_on_defaults(verified):
    code, out = verified
    assert code == 0
    rows = read_csv(out / "verify.csv")
    assert rows and all(r["passed"] == "1" for r in rows)
    checks = {r["check"] for r in rows}
    assert {"eq1", "alpha_e2", "ode_v", "ode_Jv", "fact3_root", "dg_xi_vertical", "horizontal_jacobian", "killing"} <= checks
    summary = (out / "verify_summary.txt").read_text()
    assert summary.startswith(f"{len(rows)}/{len(rows)} checks passed")


def test_verify_fails_and_names_the_identity_under_an_impossible_tolerance(tmp_path, capsys):
    code = run(tmp_path, "verify", "--tolerance-tier", "jet=1e-15", config='[grid]\nspaces = [[0, 0.5]]\nsamples = 20\n')
    assert code == 1
    text = capsys.readouterr().out
    assert "FAIL eq1" in text or "FAIL alpha_e2" in text
    assert "jet tolerance" in text


def test_verify_is_byte_identical_across_runs(tmp_path):
    conf = '[grid]\nspaces = [[1, 0.5]]\nsamples = 20\n'
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "verify", config=conf) == 0
    assert run(b, "verify", config=conf) == 0
    assert (a / "out" / "verify.csv").read_bytes() == (b / "out" / "verify.csv").read_bytes()


def test_analyze_writes_the_documented_columns(tmp_path):
    code = run(tmp_path, "analyze", "sphere[k=0,tau=0.5]")
    assert code == 0
    files = list((tmp_path / "out").glob("analyze_*.csv"))
    assert len(files) == 1
    with open(files[0], newline="") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == cli.ANALYZE_COLUMNS
    rows = read_csv(files[0])
    assert len(rows) == 21 * 21
    assert all(float(r["K_e"]) > 0 for r in rows)


def test_analyze_by_bare_name_covers_every_space(tmp_path):
    assert run(tmp_path, "analyze", "vertical-plane") == 0
    assert len(list((tmp_path / "out").glob("analyze_*.csv"))) == 5


def test_analyze_unknown_surface_is_a_config_error(tmp_path):
    assert run(tmp_path, "analyze", "torus") == 2


def test_rigidity_self_and_isometric_family(tmp_path, capsys):
    code = run(tmp_path, "rigidity", "--family", "self", "--family", "fiber-rotation", config=FAST_RIGIDITY)
    assert code == 0
    report = json.loads((tmp_path / "out" / "rigidity.json").read_text())
    assert [f["family"] for f in report["families"]] == ["self", "fiber-rotation"]
    members = [m for f in report["families"] for m in f["members"]]
    assert all(m["verdict"] == "congruent" for m in members)
    assert "fiber-rotation t=1: congruent" in capsys.readouterr().out


def test_rigidity_negative_control_fails_at_the_metric_stage(tmp_path, capsys):
    code = run(tmp_path, "rigidity", "--family", "radial", config=FAST_RIGIDITY)
    assert code == 1
    report = json.loads((tmp_path / "out" / "rigidity.json").read_text())
    member = report["families"][0]["members"][0]
    assert member["verdict"] == "hypotheses-violated"
    assert member["failed_stage"] == "a"
    assert "stage (a)" in capsys.readouterr().out


def test_rigidity_rejects_a_horizontal_comparison_point(tmp_path):
    code = run(tmp_path, "rigidity", "--family", "self", "--three-points=-1.5606,-0.5876;1.0,-0.4;-1.5,0.6")
    assert code == 1
    report = json.loads((tmp_path / "out" / "rigidity.json").read_text())
    assert report["error"]["kind"] == "precondition"
    assert "horizontal" in report["error"]["message"]


def test_rigidity_unknown_family_is_a_config_error(tmp_path):
    assert run(tmp_path, "rigidity", "--family", "twist") == 2


def test_examples_listing(tmp_path, capsys):
    assert run(tmp_path, "examples") == 0
    listing = json.loads((tmp_path / "out" / "examples.json").read_text())
    assert set(listing["families"]) == {"coordinate-sphere", "vertical-plane", "graph", "custom-expression"}
    spheres = [s for s in listing["surfaces"] if s["family"] == "coordinate-sphere"]
    assert len(spheres) == 5 and all(s["strictly_convex"] for s in spheres)
    assert "strictly convex: yes" in capsys.readouterr().out


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("bogus = 1\n", "bogus"),
        ("[tolerances]\njet = -1.0\n", "positive"),
        ("[grid]\nspaces = [[1, 0.5, 3]]\n", "space"),
        ("[rigidity]\nfamilies = ['twist']\n", "twist"),
        ("[rigidity]\nreference = 'nothing'\n", "nothing"),
        ("this is not toml", ""),
    ],
)
def test_malformed_config_exits_with_code_2(tmp_path, capsys, text, fragment):
    assert run(tmp_path, "examples", config=text) == 2
    assert fragment in capsys.readouterr().err


def test_surface_outside_the_admissible_chart_is_a_config_error(tmp_path):
    conf = '[grid]\nspaces = [[1, 0]]\n[[surfaces]]\nname = "huge"\nfamily = "coordinate-sphere"\nradius = 5.0\n'
    assert run(tmp_path, "examples", config=conf) == 2


def test_tolerance_override_syntax():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["verify", "--tolerance-tier", "jet"])
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["rigidity", "--three-points", "1,2;3,4"])


def test_seed_changes_the_sample_points(tmp_path):
    conf = '[grid]\nspaces = [[0, 0.5]]\nsamples = 10\n'
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    run(a, "verify", "--seed", "1", config=conf)
    run(b, "verify", "--seed", "2", config=conf)
    assert (a / "out" / "verify.csv").read_bytes() != (b / "out" / "verify.csv").read_bytes()


def test_config_loader_defaults():
    conf = cfg.load(None)
    assert conf.seed == 0
    assert len(conf.spaces) == 5
    assert all(v > 0 for v in conf.tolerances.values())


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ektau.cli", "examples", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
