import shutil
import subprocess

import numpy as np
import pytest

from pdmlsvd.cli import main
from pdmlsvd.fileio import read_factors, read_tensor, write_tensor, tensor_bytes
from pdmlsvd.linalg import thin_svd


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and not line.startswith("note"))


@pytest.fixture
def tensor_file(rng, tmp_path):
    path = tmp_path / "x.tns"
    write_tensor(rng.standard_normal((4, 3, 5)), path)
    return path


def test_decompose_kv(capsys, tmp_path, tensor_file):
    code, out, _ = run(capsys, "decompose", "--input", tensor_file, "--out", tmp_path / "f", "--report", "kv")
    assert code == 0
    keys = kv(out)
    for key in ("mode1.rank", "residual.lanczos.mode1", "objective", "reconstruction_error", "superdiagonality"):
        assert key in keys
    assert keys["mode1.rank"] == "4" and keys["mode3.rank"] == "5"
    assert float(keys["objective.relative"]) <= 1e-8
    assert keys["status"] == "pass"
    assert read_factors(tmp_path / "f").ranks == (4, 3, 5)


def test_decompose_human(capsys, tensor_file):
    code, out, _ = run(capsys, "decompose", "--input", tensor_file)
    assert code == 0
    assert "residual.lanczos.mode3" in out and "status" in out


def test_decompose_eps_rank_one(capsys, tmp_path):
    x = np.multiply.outer(np.multiply.outer([1.0, 2.0], [1.0, -1.0, 3.0]), [2.0, 1.0])
    write_tensor(x, tmp_path / "r1.tns")
    code, out, _ = run(capsys, "decompose", "--input", tmp_path / "r1.tns", "--eps", "1e-8", "--report", "kv")
    assert code == 0
    keys = kv(out)
    assert [keys[f"mode{d}.rank"] for d in (1, 2, 3)] == ["1", "1", "1"]
    assert float(keys["reconstruction_error"]) <= 1e-12


def test_decompose_truncated_is_not_a_failure(capsys, tensor_file):
    code, out, _ = run(capsys, "decompose", "--input", tensor_file, "--rank", "2,2,2", "--report", "kv")
    assert code == 0
    assert "objective skipped" in out


def test_decompose_matrix_svd_equivalence(capsys, rng, tmp_path):
    x = rng.standard_normal((5, 3))
    write_tensor(x, tmp_path / "m.tns")
    code, out, _ = run(capsys, "decompose", "--input", tmp_path / "m.tns", "--report", "kv")
    keys = kv(out)
    assert code == 0
    assert keys["order"] == "2"
    assert "mode3.rank" not in keys
    assert keys["svd_equivalence"] == "pass"
    gains = np.array([float(v) for v in keys["mode1.eigenvalues"].split(",")])
    np.testing.assert_allclose(np.sqrt(gains), thin_svd(x).s, rtol=1e-6)


def primal_files(rng, tmp_path, n=(5, 4, 6), m=(2, 3, 2)):
    feats = []
    for d, (nd, md) in enumerate(zip(n, m)):
        feats.append(tmp_path / f"phi{d + 1}.tns")
        write_tensor(rng.standard_normal((nd, md)), feats[-1])
    write_tensor(rng.standard_normal(m), tmp_path / "c.tns")
    return feats, tmp_path / "c.tns"


def test_decompose_primal(capsys, rng, tmp_path):
    feats, compat = primal_files(rng, tmp_path)
    code, out, _ = run(capsys, "decompose", "--path", "primal", "--features", *feats,
                       "--compat", compat, "--report", "kv", "--out", tmp_path / "f")
    keys = kv(out)
    assert code == 0, out
    assert keys["path"] == "primal"
    assert float(keys["reconstruction_error"]) <= 1e-10
    assert float(keys["objective.relative"]) <= 1e-8
    assert read_factors(tmp_path / "f").ranks == (2, 3, 2)


def test_verify_round_trip_and_corruption(capsys, tmp_path, tensor_file):
    assert run(capsys, "decompose", "--input", tensor_file, "--out", tmp_path / "f")[0] == 0
    code, out, _ = run(capsys, "verify", "--factors", tmp_path / "f", "--input", tensor_file, "--report", "kv")
    assert code == 0, out
    u1 = read_tensor(tmp_path / "f" / "U1.tns")
    u1[0, 0] += 1e-3
    write_tensor(u1, tmp_path / "f" / "U1.tns")
    code, out, _ = run(capsys, "verify", "--factors", tmp_path / "f", "--input", tensor_file)
    assert code == 1
    assert "failed checks" in out and "residual.lanczos.mode1" in out.splitlines()[-1]


def test_verify_shape_mismatch(capsys, rng, tmp_path, tensor_file):
    run(capsys, "decompose", "--input", tensor_file, "--out", tmp_path / "f")
    write_tensor(rng.standard_normal((4, 3, 4)), tmp_path / "other.tns")
    code, _, err = run(capsys, "verify", "--factors", tmp_path / "f", "--input", tmp_path / "other.tns")
    assert code == 2 and "error" in err.lower()


def test_kernel_polynomial_degree1(capsys, rng, tmp_path):
    inputs = []
    for d in range(3):
        inputs.append(tmp_path / f"x{d}.tns")
        write_tensor(rng.standard_normal((2, 3)), inputs[-1])
    code, _, _ = run(capsys, "kernel", "--variant", "polynomial", "--inputs", *inputs,
                     "--degree", "1", "--out", tmp_path / "k.tns")
    assert code == 0
    code, _, _ = run(capsys, "kernel", "--variant", "generic", "--features", *inputs,
                     "--compat", _write_superdiag(tmp_path), "--out", tmp_path / "g.tns")
    assert code == 0
    np.testing.assert_allclose(read_tensor(tmp_path / "k.tns"), read_tensor(tmp_path / "g.tns"), atol=1e-12)


def _write_superdiag(tmp_path):
    c = np.zeros((3, 3, 3))
    c[range(3), range(3), range(3)] = 1.0
    write_tensor(c, tmp_path / "sd.tns")
    return tmp_path / "sd.tns"


def test_kernel_exponential_zeros(capsys, tmp_path):
    paths = []
    for d in range(3):
        paths.append(tmp_path / f"z{d}.tns")
        write_tensor(np.zeros((2, 3)), paths[-1])
    code, _, _ = run(capsys, "kernel", "--variant", "exponential", "--inputs", *paths, "--out", tmp_path / "k.tns")
    assert code == 0
    np.testing.assert_array_equal(read_tensor(tmp_path / "k.tns"), np.ones((2, 2, 2)))


def test_kernel_linear_writes_compat(capsys, rng, tmp_path):
    write_tensor(rng.standard_normal((2, 3, 2)), tmp_path / "x.tns")
    code, out, _ = run(capsys, "kernel", "--variant", "elementwise", "--input", tmp_path / "x.tns",
                       "--function", "tanh", "--out", tmp_path / "k.tns", "--compat-out", tmp_path / "c.tns",
                       "--report", "kv")
    assert code == 0
    assert read_tensor(tmp_path / "c.tns").shape == (6, 4, 6)
    assert "compatibility.residual" in kv(out)


def test_budget_exceeded_exits_2(capsys, tmp_path):
    paths = []
    for d in range(3):
        paths.append(tmp_path / f"z{d}.tns")
        write_tensor(np.ones((2, 1)), paths[-1])
    code, _, err = run(capsys, "kernel", "--variant", "polynomial", "--inputs", *paths, "--budget", "7")
    assert code == 2 and "budget" in err.lower()


def test_convert_round_trip(capsys, rng, tmp_path):
    feats, compat = primal_files(rng, tmp_path)
    from pdmlsvd import PrimalProblem, solve_primal
    from pdmlsvd.fileio import write_model

    p = PrimalProblem([read_tensor(f) for f in feats], read_tensor(compat))
    pm, _ = solve_primal(p)
    write_model(pm, tmp_path / "pm")
    code, out, _ = run(capsys, "convert", "--model", tmp_path / "pm", "--features", *feats,
                       "--compat", compat, "--to", "dual", "--out", tmp_path / "dm", "--report", "kv")
    assert code == 0, out
    code, out, _ = run(capsys, "convert", "--model", tmp_path / "dm", "--features", *feats,
                       "--compat", compat, "--to", "primal", "--out", tmp_path / "pm2", "--report", "kv")
    assert code == 0, out
    assert any(k.startswith("kkt.") for k in kv(out))


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--grid", "50:5", "--report", "kv")
    keys = kv(out)
    assert code == 0, out
    assert float(keys["agreement.N50.M5"]) <= 1e-8
    assert "bench.N50.M5.primal_seconds" in keys


def test_bench_skips_dual_over_budget(capsys):
    code, out, _ = run(capsys, "bench", "--grid", "30:3", "--budget", "1000")
    assert code == 0
    assert "skipped" in out


def test_corrupted_file_exits_2(capsys, rng, tmp_path):
    data = tensor_bytes(rng.standard_normal((2, 2, 2)))
    (tmp_path / "bad.tns").write_bytes(data[:-8])
    code, _, err = run(capsys, "decompose", "--input", tmp_path / "bad.tns")
    assert code == 2 and "expected 8 values" in err
    code, _, _ = run(capsys, "decompose", "--input", tmp_path / "missing.tns")
    assert code == 2


def test_missing_arguments_exit_2(capsys):
    assert run(capsys, "decompose")[0] == 2
    assert run(capsys, "decompose", "--path", "primal")[0] == 2


def test_threads_option(capsys, tensor_file):
    assert run(capsys, "decompose", "--input", tensor_file, "--threads", "1")[0] == 0


@pytest.mark.skipif(shutil.which("pdmlsvd") is None, reason="console script not installed")
def test_console_script(tensor_file):
    proc = subprocess.run(["pdmlsvd", "decompose", "--input", str(tensor_file), "--report", "kv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.rstrip().endswith("status=pass")
