"""End-to-end exercises of the command line interface.

Each test drives main() in-process, inspecting exit codes, the JSON a
command prints, and the files it leaves behind; one test runs the
installed console script as a subprocess.  Exit-code contract: 0 ok,
1 usage, 2 geometry/solver, 3 non-convergence, 4 property failure.
"""

import contextlib
import io
import json
import shutil
import subprocess

import numpy as np
import pytest

import cuspsteklov.cli as cli
from cuspsteklov import read_mesh
from cuspsteklov.cli import main
from cuspsteklov.errors import NonConvergenceError
from cuspsteklov.p_solver import IterationStep, IterationTrace

BESSEL_RATIO = 0.4463899658965345


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main(argv)
    return rc, out.getvalue(), err.getvalue()


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- usage validation ---------------------------------------------------------------


class TestUsage:
    def test_no_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_bad_flag_value_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["mesh", "--hmax", "abc"])
        assert exc.value.code == 1

    @pytest.mark.parametrize("alpha", ["0.5", "1.0", "-2"])
    def test_alpha_at_most_one_rejected(self, alpha, tmp_path):
        rc, _, err = _run(["mesh", "--alpha", alpha,
                           "--out", str(tmp_path / "m.txt")])
        assert rc == 1
        assert "alpha > 1" in err

    @pytest.mark.parametrize("p", ["1.05", "6.5", "0.9"])
    def test_p_outside_range_rejected(self, p):
        rc, _, err = _run(["principal", "--p", p])
        assert rc == 1
        assert "[1.1, 6]" in err

    def test_alpha_and_gamma_file_conflict(self, tmp_path):
        gf = tmp_path / "g.json"
        gf.write_text(json.dumps({"kind": "power", "alpha": 2.0}))
        rc, _, err = _run(["mesh", "--alpha", "2", "--gamma-file", str(gf)])
        assert rc == 1

    def test_oracle_disk_excludes_profile_flags(self):
        rc, _, err = _run(["spectrum", "--oracle-disk", "--alpha", "2"])
        assert rc == 1

    def test_weighted_unweighted_exclusive(self):
        with pytest.raises(SystemExit) as exc:
            main(["spectrum", "--weighted", "--unweighted"])
        assert exc.value.code == 1

    def test_convergence_needs_two_levels(self):
        rc, _, err = _run(["convergence", "--levels", "1"])
        assert rc == 1
        assert "2" in err

    def test_bad_w0_mode(self):
        rc, _, err = _run(["principal", "--w0", "bogus"])
        assert rc == 1

    def test_k_exceeding_boundary_dofs(self, tmp_path):
        rc, _, err = _run(["spectrum", "--alpha", "2", "--k", "9999",
                           "--levels", "0", "--out", str(tmp_path)])
        assert rc == 1

    def test_missing_w0_file(self, tmp_path):
        rc, _, _ = _run(["principal", "--alpha", "2", "--levels", "0",
                         "--w0", "file:/nonexistent/w0.txt",
                         "--out", str(tmp_path)])
        assert rc == 1


class TestConfigFile:
    def test_unknown_key_rejected(self, tmp_path):
        cfgf = tmp_path / "c.json"
        cfgf.write_text(json.dumps({"nope": 1}))
        rc, _, err = _run(["spectrum", "--config", str(cfgf)])
        assert rc == 1
        assert "nope" in err

    def test_missing_file_rejected(self):
        rc, _, _ = _run(["spectrum", "--config", "/no/such/config.json"])
        assert rc == 1

    def test_non_object_rejected(self, tmp_path):
        cfgf = tmp_path / "c.json"
        cfgf.write_text("[1, 2]")
        rc, _, _ = _run(["spectrum", "--config", str(cfgf)])
        assert rc == 1

    def test_precedence_flags_over_file_over_defaults(self, tmp_path):
        cfgf = tmp_path / "c.json"
        cfgf.write_text(json.dumps({"k": 3, "hmax": 0.5}))
        rc, out, _ = _run(["spectrum", "--oracle-disk", "--levels", "0",
                           "--config", str(cfgf),
                           "--out", str(tmp_path / "a")])
        assert rc == 0
        assert len(json.loads(out)["eigenvalues"]) == 3
        rc, out, _ = _run(["spectrum", "--oracle-disk", "--levels", "0",
                           "--config", str(cfgf), "--k", "5",
                           "--out", str(tmp_path / "b")])
        assert rc == 0
        assert len(json.loads(out)["eigenvalues"]) == 5

    def test_config_validated_like_flags(self, tmp_path):
        cfgf = tmp_path / "c.json"
        cfgf.write_text(json.dumps({"alpha": 0.5}))
        rc, _, err = _run(["mesh", "--config", str(cfgf)])
        assert rc == 1
        assert "alpha > 1" in err


# -- mesh command -------------------------------------------------------------------


class TestMesh:
    def test_roundtrip_quality_and_manifest(self, tmp_path):
        out = tmp_path / "m.txt"
        rc, stdout, _ = _run(["mesh", "--alpha", "2", "--hmax", "0.2",
                              "--out", str(out)])
        assert rc == 0
        quality = json.loads(stdout)
        assert quality["n_vertices"] > 100
        assert quality["total_area"] > 0
        assert quality["domain"]["gamma"]["alpha"] == 2.0
        mesh = read_mesh(str(out))
        assert mesh.n_vertices == quality["n_vertices"]
        manifest = _read_json(f"{out}.manifest.json")
        assert manifest["command"] == "mesh"
        assert set(manifest) == {"command", "inputs", "seed", "versions",
                                 "timing"}

    def test_gamma_file_power(self, tmp_path):
        gf = tmp_path / "g.json"
        gf.write_text(json.dumps({"kind": "power", "alpha": 2.5}))
        rc, stdout, _ = _run(["mesh", "--gamma-file", str(gf),
                              "--hmax", "0.3", "--out", str(tmp_path / "m.txt")])
        assert rc == 0
        assert json.loads(stdout)["domain"]["gamma"]["alpha"] == 2.5

    def test_gamma_file_tabulated_validated(self, tmp_path):
        t = np.linspace(0.0, 1.0, 201)
        good = tmp_path / "good.json"
        good.write_text(json.dumps(
            {"kind": "tabulated", "samples": np.column_stack([t, t ** 2]).tolist()}))
        rc, _, _ = _run(["mesh", "--gamma-file", str(good), "--hmax", "0.3",
                         "--out", str(tmp_path / "m.txt")])
        assert rc == 0
        # non-monotone profile must be rejected before any meshing
        bad = tmp_path / "bad.json"
        g = t ** 2
        g[100] = 0.9
        bad.write_text(json.dumps(
            {"kind": "tabulated", "samples": np.column_stack([t, g]).tolist()}))
        rc, _, err = _run(["mesh", "--gamma-file", str(bad), "--hmax", "0.3",
                           "--out", str(tmp_path / "m2.txt")])
        assert rc == 1
        assert "validation" in err

    def test_gamma_file_power_alpha_checked(self, tmp_path):
        gf = tmp_path / "g.json"
        gf.write_text(json.dumps({"kind": "power", "alpha": 0.5}))
        rc, _, err = _run(["mesh", "--gamma-file", str(gf),
                           "--out", str(tmp_path / "m.txt")])
        assert rc == 1
        assert "alpha > 1" in err

    def test_gamma_file_unknown_kind(self, tmp_path):
        gf = tmp_path / "g.json"
        gf.write_text(json.dumps({"kind": "spline"}))
        rc, _, _ = _run(["mesh", "--gamma-file", str(gf),
                         "--out", str(tmp_path / "m.txt")])
        assert rc == 1


# -- spectrum command ---------------------------------------------------------------


@pytest.fixture(scope="module")
def harmonic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("spec_harmonic")
    rc, stdout, _ = _run(["spectrum", "--problem", "harmonic", "--alpha", "2",
                          "--k", "6", "--out", str(out)])
    assert rc == 0
    return json.loads(stdout), out


class TestSpectrum:
    def test_harmonic_first_eigenvalue_vanishes(self, harmonic_run):
        record, _ = harmonic_run
        ev = record["eigenvalues"]
        assert len(ev) == 6
        assert abs(ev[0]) <= 1e-9 * ev[1]

    def test_output_files(self, harmonic_run):
        record, out = harmonic_run
        assert _read_json(out / "spectrum.json") == record
        with open(out / "traces.csv") as fh:
            header = fh.readline().strip()
        assert header == "s,x,y,w,phi0,phi1,phi2,phi3,phi4,phi5"
        manifest = _read_json(out / "manifest.json")
        assert manifest["command"] == "spectrum"
        assert manifest["inputs"]["problem"] == "harmonic"
        assert manifest["versions"]["numpy"] == np.__version__

    def test_constrained_schrodinger_all_positive(self, tmp_path):
        rc, stdout, _ = _run(["spectrum", "--problem", "schrodinger",
                              "--constrained", "--out", str(tmp_path)])
        assert rc == 0
        assert all(v > 0 for v in json.loads(stdout)["eigenvalues"])

    def test_disk_oracle(self, tmp_path):
        rc, stdout, _ = _run(["spectrum", "--oracle-disk", "--radius", "1",
                              "--k", "7", "--hmax", "0.2",
                              "--out", str(tmp_path)])
        assert rc == 0
        ev = json.loads(stdout)["eigenvalues"]
        assert abs(ev[0]) <= 1e-8
        for lam, target in zip(ev[1:], [1, 1, 2, 2, 3, 3]):
            assert abs(lam - target) <= 0.02 * target

    def test_unweighted_shifts_spectrum(self, harmonic_run, tmp_path):
        record, _ = harmonic_run
        rc, stdout, _ = _run(["spectrum", "--problem", "harmonic",
                              "--alpha", "2", "--unweighted",
                              "--out", str(tmp_path)])
        assert rc == 0
        lam1_unw = json.loads(stdout)["eigenvalues"][1]
        assert abs(lam1_unw - record["eigenvalues"][1]) > 1e-3

    def test_rerun_bitwise_identical(self, tmp_path):
        args = ["spectrum", "--alpha", "2", "--seed", "7"]
        _run(args + ["--out", str(tmp_path / "a")])
        _run(args + ["--out", str(tmp_path / "b")])
        for name in ("spectrum.json", "traces.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


# -- principal command --------------------------------------------------------------


@pytest.fixture(scope="module")
def principal_p2(tmp_path_factory):
    out = tmp_path_factory.mktemp("principal_p2")
    rc, stdout, _ = _run(["principal", "--p", "2", "--alpha", "2",
                          "--out", str(out)])
    assert rc == 0
    return json.loads(stdout), out


class TestPrincipal:
    def test_linear_run_matches_spectrum_solver(self, principal_p2, tmp_path):
        record, _ = principal_p2
        rc, stdout, _ = _run(["spectrum", "--problem", "schrodinger",
                              "--alpha", "2", "--out", str(tmp_path)])
        assert rc == 0
        lam0 = json.loads(stdout)["eigenvalues"][0]
        assert abs(record["mu"] - lam0) <= 1e-6 * lam0

    def test_trace_json_layout(self, principal_p2):
        record, out = principal_p2
        assert set(record) == {"p", "alpha", "mesh_level", "steps", "mu",
                               "converged", "residual", "trace_csv"}
        assert record["p"] == 2.0
        assert record["alpha"] == 2.0
        assert record["mesh_level"] == 1
        assert record["converged"] is True
        assert record["trace_csv"] == "steps.csv"
        for step in record["steps"]:
            assert set(step) == {"n", "mu", "sobolev_p", "step_diff",
                                 "inner_iters"}
        assert _read_json(out / "trace.json") == record

    def test_steps_csv_matches_trace(self, principal_p2):
        record, out = principal_p2
        lines = (out / "steps.csv").read_text().strip().splitlines()
        assert lines[0] == "n,mu,sobolev_p,step_diff,inner_iters"
        assert len(lines) - 1 == len(record["steps"])
        first = lines[1].split(",")
        assert float(first[1]) == record["steps"][0]["mu"]

    def test_p3_sequence_monotone(self, tmp_path):
        rc, stdout, _ = _run(["principal", "--p", "3", "--alpha", "2",
                              "--out", str(tmp_path)])
        assert rc == 0
        mus = [s["mu"] for s in json.loads(stdout)["steps"]]
        assert all(b <= a + 1e-12 for a, b in zip(mus, mus[1:]))

    def test_disk_bessel_oracle(self, tmp_path):
        rc, stdout, _ = _run(["principal", "--p", "2", "--oracle-disk",
                              "--out", str(tmp_path)])
        assert rc == 0
        record = json.loads(stdout)
        assert record["alpha"] is None
        assert abs(record["mu"] - BESSEL_RATIO) <= 0.01 * BESSEL_RATIO

    def test_random_start_reproducible(self, principal_p2, tmp_path):
        args = ["principal", "--p", "2", "--alpha", "2", "--w0", "random",
                "--seed", "3"]
        _run(args + ["--out", str(tmp_path / "a")])
        rc, stdout, _ = _run(args + ["--out", str(tmp_path / "b")])
        assert rc == 0
        for name in ("trace.json", "steps.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()
        # the eigenvalue does not depend on the start
        record, _ = principal_p2
        assert abs(json.loads(stdout)["mu"] - record["mu"]) \
            <= 1e-6 * record["mu"]

    def test_w0_file_start(self, principal_p2, tmp_path):
        record, _ = principal_p2
        rc, stdout, _ = _run(["mesh", "--alpha", "2", "--levels", "1",
                              "--out", str(tmp_path / "m.txt")])
        n = json.loads(stdout)["n_vertices"]
        w0 = tmp_path / "w0.txt"
        np.savetxt(w0, np.ones(n))
        rc, stdout, _ = _run(["principal", "--p", "2", "--alpha", "2",
                              "--w0", f"file:{w0}",
                              "--out", str(tmp_path / "run")])
        assert rc == 0
        assert abs(json.loads(stdout)["mu"] - record["mu"]) \
            <= 1e-9 * record["mu"]

    def test_w0_file_wrong_length(self, tmp_path):
        w0 = tmp_path / "w0.txt"
        np.savetxt(w0, np.ones(7))
        rc, _, err = _run(["principal", "--alpha", "2", "--w0", f"file:{w0}",
                           "--out", str(tmp_path)])
        assert rc == 1
        assert "7" in err

    def test_w0_without_boundary_trace_is_geometry_error(self, tmp_path):
        rc, stdout, _ = _run(["mesh", "--alpha", "2", "--levels", "0",
                              "--hmax", "0.35", "--out", str(tmp_path / "m.txt")])
        mesh = read_mesh(str(tmp_path / "m.txt"))
        vec = np.ones(mesh.n_vertices)
        vec[np.unique(mesh.boundary_edges)] = 0.0
        w0 = tmp_path / "w0.txt"
        np.savetxt(w0, vec)
        rc, _, err = _run(["principal", "--p", "2", "--alpha", "2",
                           "--levels", "0", "--hmax", "0.35",
                           "--w0", f"file:{w0}", "--out", str(tmp_path / "r")])
        assert rc == 2
        diag = json.loads(err.strip().splitlines()[-1])
        assert diag["error"] == "GeometryError"

    def test_unconverged_trace_still_written(self, tmp_path, monkeypatch):
        steps = [IterationStep(n=0, mu=0.7, sobolev_p=0.69,
                               boundary_norm_check=1.0, inner_iterations=3,
                               step_diff=0.1, pairing=0.98)]

        def fake(mesh, domain, p, w0=None, cfg=None, outer_tol=None,
                 max_outer=200):
            return IterationTrace(p=p, mesh=mesh, domain=domain, steps=steps,
                                  mu=0.7, w_limit=None, converged=False,
                                  residual=0.3)

        monkeypatch.setattr(cli, "inverse_iteration", fake)
        rc, stdout, err = _run(["principal", "--p", "2", "--alpha", "2",
                                "--levels", "0", "--hmax", "0.35",
                                "--out", str(tmp_path)])
        assert rc == 3
        record = _read_json(tmp_path / "trace.json")
        assert record["converged"] is False
        assert len(record["steps"]) == 1
        diag = json.loads(err.strip().splitlines()[-1])
        assert diag["error"] == "NonConvergenceError"

    def test_inner_failure_writes_partial_trace(self, tmp_path, monkeypatch):
        def fake(mesh, domain, p, w0=None, cfg=None, outer_tol=None,
                 max_outer=200):
            exc = NonConvergenceError("inner solve stalled")
            exc.outer_trace = IterationTrace(p=p, mesh=mesh, domain=domain,
                                             steps=[], mu=None, w_limit=None,
                                             converged=False, residual=None)
            raise exc

        monkeypatch.setattr(cli, "inverse_iteration", fake)
        rc, _, err = _run(["principal", "--p", "2", "--alpha", "2",
                           "--levels", "0", "--hmax", "0.35",
                           "--out", str(tmp_path)])
        assert rc == 3
        record = _read_json(tmp_path / "trace.json")
        assert record["converged"] is False
        assert record["steps"] == []
        assert (tmp_path / "manifest.json").exists()


# -- convergence command ------------------------------------------------------------


@pytest.fixture(scope="module")
def ladder_weighted(tmp_path_factory):
    out = tmp_path_factory.mktemp("conv_w")
    rc, stdout, _ = _run(["convergence", "--alpha", "3", "--weighted",
                          "--levels", "4", "--out", str(out)])
    assert rc == 0
    return json.loads(stdout), out


class TestConvergence:
    def test_weighted_cusp_stabilizes(self, ladder_weighted):
        record, _ = ladder_weighted
        assert len(record["levels"]) == 4
        deltas1 = [row[1] for row in record["deltas"]]
        assert deltas1[-1] <= 0.05

    def test_unweighted_cusp_degenerates(self, tmp_path):
        rc, stdout, _ = _run(["convergence", "--alpha", "3", "--unweighted",
                              "--levels", "4", "--out", str(tmp_path)])
        assert rc == 0
        lam1 = [lv["eigenvalues"][1] for lv in json.loads(stdout)["levels"]]
        assert all(b < a for a, b in zip(lam1, lam1[1:]))

    def test_disk_ladder_hits_oracle(self, tmp_path):
        rc, stdout, _ = _run(["convergence", "--oracle-disk", "--levels", "3",
                              "--out", str(tmp_path)])
        assert rc == 0
        lam1 = json.loads(stdout)["levels"][-1]["eigenvalues"][1]
        assert abs(lam1 - 1.0) <= 0.005

    def test_ladder_csv_matches_summary(self, ladder_weighted):
        record, out = ladder_weighted
        lines = (out / "ladder.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[:4] == ["level", "vertices", "triangles",
                                           "max_residual"]
        assert len(lines) - 1 == 4
        for line, rec in zip(lines[1:], record["levels"]):
            cells = line.split(",")
            assert int(cells[0]) == rec["level"]
            assert int(cells[1]) == rec["vertices"]
            assert float(cells[5]) == rec["eigenvalues"][1]

    def test_summary_files(self, ladder_weighted):
        record, out = ladder_weighted
        assert _read_json(out / "summary.json") == record
        assert record["ladder_csv"] == "ladder.csv"
        manifest = _read_json(out / "manifest.json")
        assert manifest["inputs"]["levels"] == 4
        assert manifest["inputs"]["weight_mode"] == "weighted"


# -- check command ------------------------------------------------------------------

PROPERTY_NAMES = [
    "stiffness_symmetry", "mass_symmetry", "boundary_mass_symmetry",
    "stiffness_constant_kernel", "energy_positive_definite",
    "gradient_homogeneity", "source_homogeneity",
    "gradient_duality_bound", "gradient_duality_equality",
    "source_duality_bound", "source_duality_equality",
    "gradient_monotonicity", "boundary_quadrature_consistency",
    "boundary_rule_agreement", "minmax_bound", "rayleigh_identity",
]


@pytest.fixture(scope="module")
def check_default(tmp_path_factory):
    out = tmp_path_factory.mktemp("check_default")
    rc, stdout, err = _run(["check", "--alpha", "2", "--out", str(out)])
    return rc, json.loads(stdout), err


class TestCheck:
    def test_default_suite_passes(self, check_default):
        rc, report, err = check_default
        assert rc == 0
        assert report["passed"] is True
        assert all(p["passed"] for p in report["properties"])

    def test_property_roster(self, check_default):
        _, report, _ = check_default
        assert [p["name"] for p in report["properties"]] == PROPERTY_NAMES
        for p in report["properties"]:
            assert set(p) == {"name", "passed", "worst", "tol"}

    def test_perturbed_weight_caught(self, tmp_path):
        rc, stdout, err = _run(["check", "--alpha", "2", "--perturb-weight",
                                "--out", str(tmp_path)])
        assert rc == 4
        report = json.loads(stdout)
        assert report["passed"] is False
        failing = [p["name"] for p in report["properties"] if not p["passed"]]
        assert failing == ["boundary_quadrature_consistency"]
        assert "property failed: boundary_quadrature_consistency" in err

    def test_nonlinear_exponents_pass(self, tmp_path):
        rc, stdout, _ = _run(["check", "--alpha", "3", "--p", "1.5",
                              "--out", str(tmp_path)])
        assert rc == 0
        assert json.loads(stdout)["passed"] is True

    def test_disk_passes_and_perturbation_caught(self, tmp_path):
        rc, _, _ = _run(["check", "--oracle-disk", "--out", str(tmp_path / "a")])
        assert rc == 0
        rc, _, _ = _run(["check", "--oracle-disk", "--perturb-weight",
                         "--out", str(tmp_path / "b")])
        assert rc == 4

    def test_same_seed_byte_identical_reports(self, tmp_path):
        args = ["check", "--alpha", "2", "--seed", "7"]
        _run(args + ["--out", str(tmp_path / "a")])
        _run(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "report.json").read_bytes() == \
            (tmp_path / "b" / "report.json").read_bytes()


# -- console script -----------------------------------------------------------------


class TestConsoleScript:
    def test_installed_entry_point(self, tmp_path):
        exe = shutil.which("cuspsteklov")
        if exe is None:
            pytest.skip("console script not installed")
        out = tmp_path / "m.txt"
        proc = subprocess.run([exe, "mesh", "--alpha", "2", "--hmax", "0.35",
                               "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["n_vertices"] > 0
        assert out.exists()
        proc = subprocess.run([exe, "mesh", "--alpha", "0.5",
                               "--out", str(tmp_path / "n.txt")],
                              capture_output=True, text=True)
        assert proc.returncode == 1
