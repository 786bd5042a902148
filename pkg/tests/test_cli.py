import subprocess
import sys

import pytest

from tentdyn.cli import EXIT_OK, EXIT_UNCERTIFIED, EXIT_USAGE, main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def records(text: str) -> dict:
    body = text.split("---\n", 1)[1]
    return dict(line.split(": ", 1) for line in body.splitlines() if ": " in line and not line.startswith(" "))


def test_kneading_golden(capsys):
    code, out, _ = run(["kneading", "--slope", "golden", "--depth", "9"], capsys)
    rec = records(out)
    assert code == EXIT_OK
    assert rec["kneading"] == "101101101" and rec["exact"] == "(101)" and rec["m"] == "3"
    assert abs(float(rec["delta_T"]) - 0.04509) < 1e-5


def test_header_carries_config(capsys):
    _, out, _ = run(["signature", "--n", "5"], capsys)
    head = out.split("---\n")[0]
    assert head.startswith("# tentdyn ")
    assert "slope: golden" in head and "n: 5" in head and "precision_bits: 256" in head


def test_admissible_counterexample(capsys):
    code, out, _ = run(["admissible", "--slope", "kneading:100(110)", "--seq", "(110)", "--depth", "60"], capsys)
    assert code == EXIT_OK and records(out)["status"] == "STRICT"


def test_admissible_witness_fields(capsys):
    _, out, _ = run(["admissible", "--seq", "100", "--depth", "3"], capsys)
    rec = records(out)
    assert rec["status"] == "VIOLATES" and rec["witness_window"] == "100"


def test_counterexample_certificate(tmp_path, capsys):
    path = tmp_path / "cert.txt"
    code, _, _ = run(["counterexample", "--k", "2", "--depth", "60", "-o", str(path)], capsys)
    rec = records(path.read_text())
    assert code == EXIT_OK
    cases = {k: v for k, v in rec.items() if k.startswith("case_")}
    assert len(cases) == 8
    assert cases["case_110"].startswith("EXCLUDED_B")
    assert all(v.startswith("PARITY_VIOLATION") for k, v in cases.items() if k[5] == "0")
    assert rec["ict_0.01"] == "YES" and rec["shadow_criterion"] == "NOT_FOUND"


def test_deterministic_output(capsys):
    argv = ["shadow-point", "--delta", "0.002", "--epsilon", "0.05", "--seed", "7"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b


def test_csv_export(capsys):
    code, out, _ = run(["plot-data", "--kind", "orbit", "--x", "0.3", "--n", "5", "--slope", "1.8"], capsys)
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert code == EXIT_OK and lines[0] == "index,value" and len(lines) == 6
    assert lines[1].startswith("0,0.3")


def test_omega_approx_csv(capsys):
    _, out, _ = run(["omega-approx", "--format", "csv"], capsys)
    assert len([ln for ln in out.splitlines() if not ln.startswith("#")]) == 4


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["kneading", "--precision", "32"],
    ["admissible", "--seq", "01(", "--depth", "5"],
    ["kneading", "--slope", "banana"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == EXIT_USAGE


def test_uncertified_exit(capsys):
    # a point sitting next to c at working precision cannot be certified
    code, out, _ = run(["itinerary", "--slope", "1.8", "--x",
                        "0.50000000000000000000000000000001", "--depth", "5"], capsys)
    assert code == EXIT_UNCERTIFIED and records(out)["certified"] == "False"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tentdyn", "shadow-criterion"], capture_output=True, text=True)
    assert proc.returncode == 0
    rec = records(proc.stdout)
    assert rec["status"] == "SATISFIED" and rec["witness"] == "3"
