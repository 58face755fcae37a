import pytest

from farfield.cli import EXIT_FAILED, EXIT_PASSED, EXIT_USAGE, main
from farfield.config import OUTPUT_ROOT_VARIABLE


@pytest.fixture(autouse=True)
def no_output_override(monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_VARIABLE, raising=False)


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == EXIT_PASSED
    output = capsys.readouterr().out
    assert "laplace_baseline" in output
    assert "scaling_exponents" in output


def test_run_scenario(tmp_path, capsys):
    assert main(["run", "--scenario", "laplace_baseline", "--out", str(tmp_path)]) == EXIT_PASSED
    output = capsys.readouterr().out
    assert "completed" in output
    assert str(tmp_path) in output


def test_run_config_with_failing_pipeline(tmp_path, capsys):
    path = tmp_path / "planar.toml"
    path.write_text('scenario = "laplace_baseline"\n\n[operator]\nn = 2\n', encoding="utf-8")
    assert main(["-v", "run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_FAILED
    assert "RejectedConfiguration" in capsys.readouterr().err


def test_run_rejects_unknown_scenario(capsys):
    assert main(["run", "--scenario", "unknown"]) == EXIT_USAGE
    assert "Invalid scenario" in capsys.readouterr().err


def test_sweep(tmp_path, capsys):
    path = tmp_path / "sweep.toml"
    path.write_text('scenario = "laplace_baseline"\n\n[sweep]\n"operator.n" = [3, 4]\n', encoding="utf-8")
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == EXIT_PASSED
    assert "operator.n" in capsys.readouterr().out


def test_verify(tmp_path, capsys):
    main(["run", "--scenario", "laplace_baseline", "--out", str(tmp_path)])
    [bundle] = [path for path in tmp_path.iterdir() if path.is_dir()]
    capsys.readouterr()
    assert main(["verify", str(bundle), str(bundle)]) == EXIT_PASSED
    assert "0 mismatches" in capsys.readouterr().out
    assert main(["verify", str(bundle), str(tmp_path / "missing")]) == EXIT_FAILED


def test_missing_command():
    with pytest.raises(SystemExit) as error:
        main([])
    assert error.value.code == 2
