import csv
import json
from pathlib import Path

import numpy as np
import pytest

from qmo.harness import (
    EXIT_FAILURE,
    EXIT_OK,
    TRACE_HEADER,
    cmd_batch,
    cmd_compare,
    cmd_run,
    create_argument_parser,
    main,
    matrix_records,
)
from qmo.problems import ProblemKind, generate_scenario

CONFIGS = Path(__file__).parents[1] / "configs"


def write_config(tmp_path: Path, name: str, document: dict) -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(document, indent=2), encoding="utf-8")
    return path


def beamforming(tmp_path: Path, **extra) -> Path:
    document = {"problem": "beamforming", "dims": {"n_t": 6, "n_r": 2}, "seed": 7, "solver": {"grad_tol": 1e-5}}
    document.update(extra)
    return write_config(tmp_path, "beamforming.json", document)


def test_matrix_records_are_real_imaginary_pairs():
    assert matrix_records(np.array([[1 + 2j, 3.0]])) == [[[1.0, 2.0], [3.0, 0.0]]]


def test_run_writes_result_and_trace(tmp_path):
    out = tmp_path / "out"
    code = cmd_run(str(beamforming(tmp_path)), output_dir=str(out))

    result = json.loads((out / "result.json").read_text())
    assert set(result) == {"objective", "termination", "iters", "wall_time_s", "final_point"}
    assert code == EXIT_OK
    assert result["termination"] == "grad_tol"
    assert np.array(result["final_point"]).shape == (6, 2, 2)
    assert not (out / "state.json").exists()

    with (out / "trace.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == TRACE_HEADER
    assert len(rows) == result["iters"] + 2
    assert [int(row[0]) for row in rows[1:]] == list(range(result["iters"] + 1))
    assert float(rows[-1][1]) == pytest.approx(result["objective"], rel=1e-15)


def test_rerun_writes_identical_trace(tmp_path):
    path = beamforming(tmp_path)
    cmd_run(str(path), output_dir=str(tmp_path / "first"))
    cmd_run(str(path), output_dir=str(tmp_path / "second"))
    first = (tmp_path / "first" / "trace.csv").read_bytes()
    assert first == (tmp_path / "second" / "trace.csv").read_bytes()


def test_sample_beamforming_config_reaches_top_eigenvalue_sum(tmp_path):
    code = cmd_run(str(CONFIGS / "beamforming.json"), output_dir=str(tmp_path / "bf"))
    result = json.loads((tmp_path / "bf" / "result.json").read_text())
    assert code == EXIT_OK
    optimum = generate_scenario(ProblemKind.BEAMFORMING, {"n_t": 16, "n_r": 4}, 7).optimum()
    assert result["objective"] == pytest.approx(optimum, rel=1e-6)


def test_sample_ris_config_converges(tmp_path):
    code = cmd_run(str(CONFIGS / "ris.json"), output_dir=str(tmp_path / "ris"))
    result = json.loads((tmp_path / "ris" / "result.json").read_text())
    assert code == EXIT_OK
    assert result["termination"] == "grad_tol"


def test_run_without_trace(tmp_path):
    out = tmp_path / "quiet"
    cmd_run(str(beamforming(tmp_path, emit_trace=False)), output_dir=str(out))
    assert (out / "result.json").exists()
    assert not (out / "trace.csv").exists()


def test_run_on_quantum_backend_matches_classical(tmp_path):
    path = beamforming(tmp_path)
    cmd_run(str(path), output_dir=str(tmp_path / "c"))
    cmd_run(str(path), output_dir=str(tmp_path / "q"), backend="quantum")
    classical = json.loads((tmp_path / "c" / "result.json").read_text())
    quantum = json.loads((tmp_path / "q" / "result.json").read_text())
    assert quantum["objective"] == pytest.approx(classical["objective"], abs=1e-8)

    state = json.loads((tmp_path / "q" / "state.json").read_text())
    assert set(state) == {"amplitudes", "scale"}
    assert state["scale"] == pytest.approx(np.sqrt(2.0), rel=1e-10)
    assert sum(re**2 + im**2 for _, re, im in state["amplitudes"]) == pytest.approx(1.0, rel=1e-12)
    assert not (tmp_path / "c" / "state.json").exists()


def test_config_error_exits_one_with_location(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "problem": "pilot",\n  "dims": {"L": 2, "K_users": 4}\n}\n', encoding="utf-8")
    code = cmd_run(str(path), output_dir=str(tmp_path / "never"))
    assert code == EXIT_FAILURE
    err = capsys.readouterr().err
    assert err.startswith(f"{path}:3:")
    assert "T" in err
    assert not (tmp_path / "never").exists()


def test_compare_writes_pass_field(tmp_path):
    path = write_config(
        tmp_path, "ris.json", {"problem": "ris", "dims": {"N": 4, "M": 2}, "seed": 3, "solver": {"grad_tol": 1e-5}}
    )
    code = cmd_compare(str(path), output_dir=str(tmp_path / "cmp"))
    report = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert "pass" in report and "passed" not in report
    assert report["pass"] is True
    assert code == EXIT_OK
    assert report["max_abs_gap"] <= 1e-8
    assert report["oracle_gap"] <= 1e-6
    assert set(report["final_objective"]) == {"classical", "quantum"}


def test_compare_flags_pilot_run_that_cannot_leave_the_uniform_start(tmp_path):
    path = write_config(
        tmp_path,
        "pilot.json",
        {"problem": "pilot", "dims": {"L": 3, "K_users": 6, "T": 4}, "warm_start": "uniform", "solver": {"grad_tol": 1e-6}},
    )
    code = cmd_compare(str(path), output_dir=str(tmp_path / "cmp"))
    report = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert report["decreased"] is False
    assert report["offset_identity_gap"] <= 1e-10
    assert report["pass"] is False
    assert code == EXIT_FAILURE


def test_compare_pilot_from_random_start_decreases(tmp_path):
    path = write_config(
        tmp_path,
        "pilot.json",
        {"problem": "pilot", "dims": {"L": 3, "K_users": 5, "T": 3}, "seed": 1, "solver": {"grad_tol": 1e-6, "max_iters": 40}},
    )
    cmd_compare(str(path), output_dir=str(tmp_path / "cmp"))
    report = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert report["decreased"] is True
    assert report["final_objective"]["classical"] < report["initial_objective"]
    assert report["offset_identity_gap"] <= 1e-10


def test_batch_runs_each_config_into_its_own_directory(tmp_path):
    good = beamforming(tmp_path)
    bad = write_config(tmp_path, "bad.json", {"problem": "ris", "dims": {"N": 4}})
    root = tmp_path / "batch"
    code = cmd_batch([str(good), str(bad)], output_dir=str(root), concurrency=2)
    assert code == EXIT_FAILURE
    assert (root / "beamforming" / "result.json").exists()
    assert not (root / "bad").exists()


def test_parser_rejects_unknown_backend():
    parser = create_argument_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "x.json", "--backend", "analog"])


def test_main_run(tmp_path):
    out = tmp_path / "main"
    code = main(["run", str(beamforming(tmp_path)), "--output-dir", str(out), "--seed", "4"])
    result = json.loads((out / "result.json").read_text())
    assert code == EXIT_OK
    assert result["termination"] == "grad_tol"


def test_main_validate(capsys):
    assert main(["validate", "--instances", "2"]) == EXIT_OK
    table = capsys.readouterr().out
    assert "FAIL" not in table
    assert "quantum_retraction" in table


def test_main_validate_with_zero_tolerance_fails(capsys):
    assert main(["validate", "--instances", "1", "--tolerance-scale", "0"]) == EXIT_FAILURE
    assert "FAIL" in capsys.readouterr().out
