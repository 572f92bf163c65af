import hashlib
import json

import pytest

from app.config.run_config import RunConfig, TaskName
from app.helpers.task_router import TaskRouter
from app.main import build_parser, main, registry, run
from app.modules.lyapunov import LyapunovProfile


@pytest.fixture
def workspace(tmp_path):
    """Output and cache directories for one CLI session."""
    out = tmp_path / "out"
    cache = tmp_path / "cache"
    return out, cache


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def run_cli(task, config_path, out, cache, *extra):
    return main([task, "--config", str(config_path), "--out", str(out), "--cache", str(cache), *extra])


IDS_CONFIG = {
    "potential": {"lambda": 0.0},
    "params": {"energies": {"values": [-1.0, 0.0, 1.0]}, "truncation": 200, "m": 8},
}


class TestCli:
    """Test the command-line entry point."""

    def test_ids_run_writes_artifacts(self, tmp_path, workspace, capsys):
        """Test a successful run writes headed CSV and a run record."""
        out, cache = workspace
        config = write_config(tmp_path, IDS_CONFIG)

        assert run_cli("ids", config, out, cache) == 0

        summary = json.loads(capsys.readouterr().out)
        run_dir = next(out.glob("ids-*"))
        assert run_dir.name == f"ids-{summary['config_hash'][:12]}"

        raw = (run_dir / "ids.csv").read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == f"# qpspec 0.1.0 config {summary['config_hash']}"
        assert lines[1] == "E,N"
        assert len(lines) == 5
        assert lines[3].split(",")[1] == "0.5"

        record = json.loads((run_dir / "run_record.json").read_text())
        assert record["cache_hit"] is False
        assert set(record["outputs"]) == {"ids.csv"}
        assert summary["cache_hit"] is False

    def test_rerun_is_served_from_cache(self, tmp_path, workspace, capsys, mocker):
        """Test an identical config replays cached artifacts without recomputing."""
        out, cache = workspace
        config = write_config(tmp_path, IDS_CONFIG)
        assert run_cli("ids", config, out, cache) == 0
        run_dir = next(out.glob("ids-*"))
        first = (run_dir / "ids.csv").read_bytes()
        capsys.readouterr()

        mocker.patch("app.routes.spectral.ids_counting", side_effect=AssertionError("recomputed"))
        assert run_cli("ids", config, out, cache) == 0

        summary = json.loads(capsys.readouterr().out)
        assert summary["cache_hit"] is True
        assert (run_dir / "ids.csv").read_bytes() == first
        assert json.loads((run_dir / "run_record.json").read_text())["cache_hit"] is True

    def test_invalid_config_exit_code(self, tmp_path, workspace, capsys):
        """Test every validation error is reported and the exit code is 2."""
        out, cache = workspace
        config = write_config(tmp_path, {"potential": {"lambda": "strong"}, "params": {"n": -5}})

        assert run_cli("lyapunov", config, out, cache) == 2

        errors = [line for line in capsys.readouterr().err.splitlines() if line.startswith("config error")]
        assert len(errors) == 2
        assert not out.exists() or not any(out.iterdir())

    def test_unreadable_config(self, tmp_path, workspace):
        """Test malformed JSON is a validation error."""
        out, cache = workspace
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run_cli("ids", path, out, cache) == 2

    def test_invalid_parameter_exit_code(self, tmp_path, workspace):
        """Test a bad parameter value surfaces as exit code 2."""
        out, cache = workspace
        config = write_config(tmp_path, {**IDS_CONFIG, "params": {**IDS_CONFIG["params"], "method": "bogus"}})
        assert run_cli("ids", config, out, cache) == 2
        assert not any(p for p in out.iterdir() if not p.name.startswith("."))

    def test_health_failure_exit_code(self, tmp_path, workspace, mocker):
        """Test an unhealthy acceleration profile exits with 3 and leaves no outputs."""
        out, cache = workspace
        profile = LyapunovProfile(
            E=0.0, eps_grid=[0.1, 0.05, 0.025], L_values=[0.4, 0.3, 0.2, 0.5],
            slope=0.0, omega_int=0, omega_residual=0.0, healthy=False, n=200, m=16,
        )
        mocker.patch("app.routes.dynamics.acceleration", return_value=profile)
        config = write_config(tmp_path, {"params": {"energies": {"values": [0.0]}}})

        assert run_cli("acceleration", config, out, cache) == 3
        assert list(out.iterdir()) == []

    def test_health_failure_tolerated(self, tmp_path, workspace, mocker):
        """Test strict_health=false writes the profile anyway."""
        out, cache = workspace
        profile = LyapunovProfile(
            E=0.0, eps_grid=[0.1, 0.05, 0.025], L_values=[0.4, 0.3, 0.2, 0.5],
            slope=0.0, omega_int=0, omega_residual=0.0, healthy=False, n=200, m=16,
        )
        mocker.patch("app.routes.dynamics.acceleration", return_value=profile)
        config = write_config(tmp_path, {"params": {"energies": {"values": [0.0]}, "strict_health": False}})

        assert run_cli("acceleration", config, out, cache) == 0
        run_dir = next(out.glob("acceleration-*"))
        document = json.loads((run_dir / "acceleration.json").read_text())
        assert list(document)[0] == "header"
        assert document["profiles"][0]["healthy"] is False

    def test_thread_count_does_not_change_outputs(self, tmp_path):
        """Test 1 and 2 workers give byte-identical artifacts."""
        config = write_config(tmp_path, {
            "potential": {"lambda": 2.0},
            "params": {"energies": {"values": [0.5, 3.0]}, "n": 200, "m": 512},
        })
        assert run_cli("lyapunov", config, tmp_path / "a", tmp_path / "ca", "--threads", "1") == 0
        assert run_cli("lyapunov", config, tmp_path / "b", tmp_path / "cb", "--threads", "2") == 0

        first = next((tmp_path / "a").glob("lyapunov-*")) / "lyapunov.csv"
        second = next((tmp_path / "b").glob("lyapunov-*")) / "lyapunov.csv"
        assert first.read_bytes() == second.read_bytes()

    def test_subcommand_overrides_config_task(self, tmp_path, workspace, caplog):
        """Test the subcommand wins over a task named in the file."""
        out, cache = workspace
        config = write_config(tmp_path, {**IDS_CONFIG, "task": "lyapunov"})
        assert run_cli("ids", config, out, cache) == 0
        assert next(out.glob("ids-*")).is_dir()
        assert "overridden" in caplog.text

    def test_arithmetic_task(self, tmp_path, workspace):
        """Test convergents and Diophantine data for the default golden frequency."""
        out, cache = workspace
        config = write_config(tmp_path, {"params": {"sdc_k_max": 1000}})
        assert run_cli("arithmetic", config, out, cache) == 0

        run_dir = next(out.glob("arithmetic-*"))
        lines = (run_dir / "convergents.csv").read_text().splitlines()
        assert lines[1] == "k,a,p,q"
        assert lines[2:5] == ["1,1,1,1", "2,1,1,2", "3,1,2,3"]

        document = json.loads((run_dir / "arithmetic.json").read_text())
        assert document["sdc"]["kind"] == "SDC"
        assert document["beta"]["tail"] < 0.01
        assert document["rational_detected"] is False

    def test_rotation_task(self, tmp_path, workspace):
        """Test rotation.csv layout for the free operator."""
        out, cache = workspace
        config = write_config(tmp_path, {"params": {"energies": {"values": [0.0, 3.0]}, "m": 16}})
        assert run_cli("rotation", config, out, cache) == 0

        lines = (next(out.glob("rotation-*")) / "rotation.csv").read_text().splitlines()
        assert lines[1] == "E,rho,N_from_rho,spread"
        E, rho, N, _ = (float(v) for v in lines[2].split(","))
        assert rho == pytest.approx(0.25, abs=2e-3)
        assert N == pytest.approx(0.5, abs=4e-3)

    def test_green_task(self, tmp_path, workspace):
        """Test both G routes are written for z = 3i."""
        out, cache = workspace
        config = write_config(tmp_path, {"params": {"z": [[0.0, 3.0]], "truncation": 200, "m": 16}})
        assert run_cli("green", config, out, cache) == 0

        lines = (next(out.glob("green-*")) / "green.csv").read_text().splitlines()
        assert lines[1] == "re_z,im_z,re_G,im_G,method"
        methods = [line.split(",")[-1] for line in lines[2:]]
        assert methods == ["resolvent-average", "borel-of-ids"]
        for line in lines[2:]:
            assert float(line.split(",")[3]) == pytest.approx(1.0 / 13 ** 0.5, abs=2e-3)

    def test_boundary_task(self, tmp_path, workspace):
        """Test boundary values off the spectrum skip the smooth fit."""
        out, cache = workspace
        config = write_config(tmp_path, {"params": {"energies": {"values": [3.0, 3.5]}, "truncation": 200, "m": 16}})
        assert run_cli("boundary", config, out, cache) == 0

        run_dir = next(out.glob("boundary-*"))
        lines = (run_dir / "boundary.csv").read_text().splitlines()
        assert lines[1] == "E,ReG_boundary,residual,flag"
        assert float(lines[2].split(",")[1]) == pytest.approx(-1.0 / 5 ** 0.5, abs=1e-3)

        report = json.loads((run_dir / "boundary_l1.json").read_text())
        assert report["n_points"] == 0
        assert report["smooth_fit"] is None

    def test_spectrum_task(self, tmp_path, workspace):
        """Test the spectrum and homogeneity artifacts for the free operator."""
        out, cache = workspace
        config = write_config(tmp_path, {"params": {"truncation": 200, "m": 8}})
        assert run_cli("spectrum", config, out, cache) == 0

        run_dir = next(out.glob("spectrum-*"))
        spectrum = json.loads((run_dir / "spectrum.json").read_text())
        assert spectrum["intervals"] == [pytest.approx([-2.0, 2.0])]
        homogeneity = json.loads((run_dir / "homogeneity.json").read_text())
        assert all(homogeneity["passing"])

    def test_version_flag(self, capsys):
        """Test --version prints the tool version."""
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--version"])
        assert exc.value.code == 0
        assert "0.1.0" in capsys.readouterr().out


class TestRun:
    """Test the run function directly."""

    def test_record_digests_match_files(self, tmp_path):
        """Test the run record lists a sha256 for every artifact."""
        config = RunConfig.from_dict({
            **IDS_CONFIG, "task": "ids", "out": str(tmp_path / "out"), "cache": str(tmp_path / "cache"),
        })
        record = run(config)
        run_dir = next((tmp_path / "out").glob("ids-*"))
        for name, digest in record.outputs.items():
            assert hashlib.sha256((run_dir / name).read_bytes()).hexdigest() == digest

    def test_execution_fields_do_not_change_hash(self):
        """Test out, threads and cache are excluded from the config hash."""
        base = RunConfig.from_dict({**IDS_CONFIG, "task": "ids"})
        moved = RunConfig.from_dict({**IDS_CONFIG, "task": "ids", "out": "/elsewhere", "threads": 8, "cache": "/c"})
        changed = RunConfig.from_dict({**IDS_CONFIG, "task": "ids", "seed": 1})
        assert base.config_hash() == moved.config_hash()
        assert base.config_hash() != changed.config_hash()

    def test_every_task_is_routed(self):
        """Test each task name has a registered handler."""
        assert set(registry.routes) == {task.value for task in TaskName}


class TestTaskRouter:
    """Test handler registration."""

    def test_duplicate_registration(self):
        """Test a name can only be registered once."""
        router = TaskRouter()
        router.task("ids")(lambda ctx: None)
        with pytest.raises(ValueError):
            router.task("ids")(lambda ctx: None)

    def test_include_router_conflict(self):
        """Test merging routers with overlapping names fails."""
        first, second = TaskRouter(), TaskRouter()
        first.task("ids")(lambda ctx: None)
        second.task("ids")(lambda ctx: None)
        with pytest.raises(ValueError):
            first.include_router(second)

    def test_unknown_task(self):
        """Test dispatching an unregistered name."""
        with pytest.raises(KeyError):
            TaskRouter().dispatch("missing", None)

    def test_dispatch_calls_handler(self, mocker):
        """Test the handler receives the context."""
        router = TaskRouter(tags=["test"])
        handler = mocker.Mock()
        router.task("ids")(handler)
        ctx = object()
        router.dispatch("ids", ctx)
        handler.assert_called_once_with(ctx)
