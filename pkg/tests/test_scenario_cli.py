import json
import subprocess
import sys

import pytest

from auction_lab import cli
from auction_lab.errors import ScenarioError
from auction_lab.scenario import dumps, load_scenario, parse_scenario, reference_scenarios

SHIPPED = reference_scenarios()

SSP_POINT = {
    "schema_version": 1,
    "auction": {
        "mechanism": "ssp",
        "bids": [
            {"id": 1, "type": {"family": "point_mass", "c": 0.7}},
            {"id": 2, "type": {"family": "point_mass", "c": 0.5}},
        ],
    },
    "simulation": {"trials": 5, "seed": 11},
}


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# scenario files


def test_reference_scenarios_are_shipped():
    assert {"ssp_point_mass", "svcg_two_winners", "bundled_two_links", "tsvcg_reference", "assignment_vcg",
            "assignment_ivcg"} <= set(SHIPPED)


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_reference_scenarios_round_trip(name):
    sc = load_scenario(SHIPPED[name])
    again = parse_scenario(json.loads(dumps(sc)))
    assert again == sc
    assert dumps(again) == dumps(sc)


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {"auction": SSP_POINT["auction"]},
        {**SSP_POINT, "schema_version": 2},
        {**SSP_POINT, "tsvcg": {}},
        {**SSP_POINT, "extras": 1},
        {**SSP_POINT, "simulation": {"trials": 10}},
        {**SSP_POINT, "simulation": {"trials": -1, "seed": 1}},
        {**SSP_POINT, "verify": {"grid_points": 1}},
        {**SSP_POINT, "verify": {"tolerance": "small"}},
        {"schema_version": 1, "auction": {"mechanism": "dutch", "bids": []}},
        {"schema_version": 1, "auction": {"mechanism": "ssp"}},
        {"schema_version": 1, "assignment": {"lambda": 1.0, "players": [], "demand": {"family": "point_mass", "c": 0},
                                             "mode": "pay-as-bid"}},
    ],
)
def test_structural_errors(doc):
    with pytest.raises(ScenarioError):
        parse_scenario(doc)


# ---------------------------------------------------------------------------
# exit codes


def test_run_reports_the_penalty_price(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", write(tmp_path, SSP_POINT))
    assert code == 0
    contract = next(json.loads(line) for line in out.splitlines() if '"contract"' in line)
    assert contract["penalty_price"] == 2.0 and contract["winners"] == [1]
    assert out.splitlines()[-1].startswith("# ssp winners=[1]")


def test_degenerate_penalty_price_exits_3(tmp_path, capsys):
    doc = json.loads(json.dumps(SSP_POINT))
    # the marginal loser reports certain full output
    for bid in doc["auction"]["bids"]:
        bid["type"]["c"] = 1.0
    code, out, err = run_cli(capsys, "run", write(tmp_path, doc))
    assert code == 3 and out == ""
    assert err.startswith("DegeneratePenaltyPrice")


def test_domain_errors_exit_3(tmp_path, capsys):
    doc = json.loads(json.dumps(SSP_POINT))
    doc["auction"]["bids"][0]["type"] = {"family": "beta", "alpha": -1, "beta": 1}
    code, _, err = run_cli(capsys, "run", write(tmp_path, doc))
    assert code == 3 and err.startswith("InvalidDistribution")
    code, _, err = run_cli(capsys, "revenue", SHIPPED["tsvcg_reference"])
    assert code == 3 and err.startswith("SpecError")


def test_parse_errors_exit_2(tmp_path, capsys):
    assert run_cli(capsys, "run", write(tmp_path, "{not json"))[0] == 2
    assert run_cli(capsys, "run", tmp_path / "missing.json")[0] == 2
    no_seed = {**SSP_POINT, "simulation": {"trials": 0}}
    code, _, err = run_cli(capsys, "settle", write(tmp_path, no_seed))
    assert code == 2 and "seed" in err


def test_verify_failure_exits_4(tmp_path, capsys):
    path = write(tmp_path, SSP_POINT)
    assert run_cli(capsys, "verify", path, "--grid-points", "5")[0] == 0
    # the truthful report is on the grid, so a strictly negative tolerance must fail
    code, out, _ = run_cli(capsys, "verify", path, "--grid-points", "5", "--tolerance=-1e-3")
    assert code == 4 and "# FAILED" in out


def test_settle_and_revenue_reports(tmp_path, capsys):
    path = write(tmp_path, SSP_POINT)
    code, out, _ = run_cli(capsys, "settle", path)
    recs = [json.loads(line) for line in out.splitlines() if line.startswith("{")]
    winners = [r for r in recs if r["x"] is not None]
    assert code == 0 and len(winners) == 5 and all(r["U"] == pytest.approx(0.4) for r in winners)
    code, out, _ = run_cli(capsys, "revenue", path, "--trials", "200")
    recs = {json.loads(line)["mechanism"]: json.loads(line) for line in out.splitlines() if line.startswith("{")}
    assert code == 0
    assert recs["ssp"]["mc_estimate"] == pytest.approx(0.3) and recs["svcg"]["mc_estimate"] == 0.5
    assert all(r["within_3se"] for r in recs.values())


@pytest.mark.parametrize("name", ["ssp_point_mass", "tsvcg_reference", "assignment_vcg", "assignment_ivcg",
                                  "svcg_two_winners", "ssp_capped_demand"])
def test_shipped_scenarios_verify_cleanly(name, capsys):
    code, out, _ = run_cli(capsys, "verify", SHIPPED[name])
    assert code == 0, out


# ---------------------------------------------------------------------------
# determinism and figures


@pytest.mark.parametrize("command", ["run", "settle", "verify", "revenue"])
def test_identical_seeds_give_byte_identical_reports(tmp_path, capsys, command):
    path = SHIPPED["ssp_point_mass"] if command != "settle" else SHIPPED["assignment_ivcg"]
    extra = ["--grid-points", "4"] if command == "verify" else []
    outputs = []
    for k in range(2):
        report = tmp_path / f"{command}{k}.jsonl"
        assert run_cli(capsys, command, path, "--seed", "123", "--report", report, *extra)[0] == 0
        outputs.append(report.read_bytes())
    assert outputs[0] == outputs[1] and outputs[0]


def test_plot_dir_writes_figures_and_a_report_copy(tmp_path, capsys):
    for k in range(2):
        code, out, _ = run_cli(capsys, "settle", SHIPPED["tsvcg_reference"], "--plot-dir", tmp_path / f"p{k}")
        assert code == 0
    png = [(tmp_path / f"p{k}" / "settle.png").read_bytes() for k in range(2)]
    assert png[0][:8] == b"\x89PNG\r\n\x1a\n" and png[0] == png[1]
    assert (tmp_path / "p0" / "settle.jsonl").read_text() == out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "auction_lab.cli", "run", str(write(tmp_path, SSP_POINT))],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "penalty_price" in proc.stdout
