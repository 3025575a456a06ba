"""
Integration tests for the tcsim CLI application.
"""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from tcsim import main as cli
from tcsim.config import CONFIG_ENV
from tcsim.errors import PadOverrunError

# Get the project root directory
PROJECT_ROOT = Path(__file__).parent.parent

SMALL_CONFIG = {
    "version": "1.0",
    "uarch": {
        "l1d": {"sets": 8, "ways": 2},
        "l1i": {"sets": 8, "ways": 2},
        "bht": {"index_bits": 4},
    },
}


def fields(text):
    """Parse `label: value` lines into a dict."""
    pairs = (line.split(":", 1) for line in text.splitlines() if ":" in line)
    return {label.strip(): value.strip() for label, value in pairs}


class TestCLIIntegration:
    """Test full CLI workflows."""

    @pytest.fixture(autouse=True)
    def workspace(self, tmp_path):
        self.tmp = tmp_path
        self.config = tmp_path / "small.json"
        self.config.write_text(json.dumps(SMALL_CONFIG))

    def run_tcsim(self, *args, binary=False):
        """Helper to run the tcsim command and return output."""
        cmd = [sys.executable, "-m", "tcsim"] + list(args)
        env = {key: value for key, value in os.environ.items() if key != CONFIG_ENV}
        result = subprocess.run(cmd, cwd=PROJECT_ROOT, capture_output=True, text=not binary, env=env)
        return result.returncode, result.stdout, result.stderr

    def bench(self, name, *extra):
        """Run a small-geometry bench into a CSV file and return its path."""
        path = self.tmp / name
        returncode, _, stderr = self.run_tcsim(
            "channel", "--config", str(self.config), "--samples", "20", "--seed", "42",
            "--out", str(path), *extra,
        )
        assert returncode == 0, stderr
        return path

    def test_help_command(self):
        """Test --help flag works."""
        returncode, stdout, stderr = self.run_tcsim("--help")
        assert returncode == 0
        assert "tcsim - temporal-fence timing-channel lab." in stdout
        assert "Examples:" in stdout

    def test_version_command(self):
        """Test --version flag works."""
        returncode, stdout, stderr = self.run_tcsim("--version")
        assert returncode == 0
        assert "tcsim 1.0.0" in stdout

    def test_no_command(self):
        """Test that running without a command prints help and fails."""
        returncode, stdout, stderr = self.run_tcsim()
        assert returncode == 1
        assert "usage:" in stdout

    def test_channel_to_file(self):
        """Test a bench written to --out with the summary on stdout."""
        path = self.tmp / "m.csv"
        returncode, stdout, stderr = self.run_tcsim(
            "channel", "--config", str(self.config), "--mitigation", "none",
            "--samples", "20", "--seed", "42", "--out", str(path),
        )
        assert returncode == 0
        assert "l1d none: 17 secrets x 20 samples, 17 distinct spy times" in stdout
        lines = path.read_text().splitlines()
        assert lines[0] == "secret,time_cycles,count"
        assert len(lines) == 1 + 17

    def test_channel_to_stdout(self):
        """Test CSV on stdout with the summary moved to stderr."""
        returncode, stdout, stderr = self.run_tcsim(
            "channel", "--config", str(self.config), "--component", "bht",
            "--mitigation", "none", "--samples", "3", "--seed", "1",
        )
        assert returncode == 0
        assert stdout.startswith("secret,time_cycles,count\n0,256,3\n1,268,3\n")
        assert "bht none" in stderr

    def test_channel_reproducible(self):
        """Test that equal seeds give byte-identical matrices."""
        first = self.bench("a.csv", "--mitigation", "none", "--noise", "9")
        second = self.bench("b.csv", "--mitigation", "none", "--noise", "9")
        assert first.read_bytes() == second.read_bytes()

    def test_seed_reported_when_drawn(self):
        """Test that an entropy seed is printed so the run can be repeated."""
        returncode, stdout, stderr = self.run_tcsim(
            "channel", "--config", str(self.config), "--samples", "2",
            "--out", str(self.tmp / "m.csv"),
        )
        assert returncode == 0
        assert "seed: " in stderr

    def test_analyze_leaky(self):
        """Test that an unmitigated channel exits 10 with a leaky report."""
        matrix = self.bench("leaky.csv", "--mitigation", "none")
        report_path = self.tmp / "report.json"
        returncode, stdout, stderr = self.run_tcsim(
            "analyze", str(matrix), "--seed", "3", "--trials", "50", "--out", str(report_path)
        )
        assert returncode == 10
        report = json.loads(stdout)
        assert list(report) == ["mi_millibits", "m0_millibits", "trials", "confidence", "leaky", "sample_count"]
        assert report["leaky"] is True
        assert report["sample_count"] == 17 * 20
        assert report_path.read_text() == stdout

    def test_analyze_fenced(self):
        """Test that fence.t.s closes the channel and exits 0."""
        matrix = self.bench("fenced.csv", "--mitigation", "fence.t.s")
        returncode, stdout, stderr = self.run_tcsim("analyze", str(matrix), "--seed", "3")
        assert returncode == 0
        report = json.loads(stdout)
        assert report["mi_millibits"] == 0.0
        assert report["leaky"] is False

    def test_analyze_malformed(self):
        """Test that a malformed matrix exits 2 naming the line."""
        path = self.tmp / "bad.csv"
        path.write_text("secret,time_cycles,count\n0,abc,1\n")
        returncode, stdout, stderr = self.run_tcsim("analyze", str(path), "--seed", "1")
        assert returncode == 2
        assert "Error: malformed matrix: line 2" in stderr

    def test_analyze_missing_file(self):
        """Test that a missing matrix file is a configuration error."""
        returncode, stdout, stderr = self.run_tcsim("analyze", str(self.tmp / "none.csv"), "--seed", "1")
        assert returncode == 2
        assert "Error: cannot read matrix" in stderr

    def test_heatmap(self):
        """Test that heatmap writes a binary PGM."""
        matrix = self.bench("h.csv", "--mitigation", "none")
        image = self.tmp / "h.pgm"
        returncode, stdout, stderr = self.run_tcsim("heatmap", str(matrix), "--out", str(image))
        assert returncode == 0
        assert image.read_bytes().startswith(b"P5\n17 17\n255\n")

    def test_heatmap_to_stdout(self):
        """Test that the PGM bytes go to stdout unmodified."""
        matrix = self.bench("h.csv", "--mitigation", "fence.t.s")
        returncode, stdout, stderr = self.run_tcsim("heatmap", str(matrix), binary=True)
        assert returncode == 0
        assert stdout == b"P5\n17 1\n255\n" + bytes([255] * 17)

    def test_overhead(self):
        """Test a scaled overhead run."""
        returncode, stdout, stderr = self.run_tcsim(
            "overhead", "--workload", "pointer_chase", "--working-set", "16",
            "--slice", "200000", "--slices", "2", "--scale", "100", "--seed", "3",
        )
        assert returncode == 0, stderr
        report = json.loads(stdout)
        assert report["switches"] == 2
        assert report["direct_cost_percent"] == pytest.approx(7.5)
        assert report["mitigated_cycles"] == (
            report["baseline_cycles"] + report["direct_cost_cycles"] + report["indirect_cost_cycles"]
        )

    def test_overhead_to_file(self):
        """Test that --out writes the JSON report and prints a summary line."""
        path = self.tmp / "overhead.json"
        returncode, stdout, stderr = self.run_tcsim(
            "overhead", "--workload", "pointer_chase", "--working-set", "16",
            "--slice", "200000", "--slices", "2", "--scale", "100", "--seed", "3",
            "--out", str(path),
        )
        assert returncode == 0, stderr
        report = json.loads(path.read_text())
        assert stdout.startswith("pointer_chase: 2 fences, slowdown ")
        assert stdout.rstrip().endswith("direct cost 7.500% of each slice")
        assert f"slowdown {report['slowdown_percent']:.3f}%" in stdout

    def test_overhead_sweep(self):
        """Test that --sweep emits one CSV row per slice length."""
        returncode, stdout, stderr = self.run_tcsim(
            "overhead", "--workload", "pointer_chase", "--working-set", "16",
            "--sweep", "300000,150000", "--slices", "1", "--scale", "100", "--seed", "3",
        )
        assert returncode == 0, stderr
        lines = stdout.splitlines()
        assert lines[0].startswith("slice_cycles,switches,")
        assert [line.split(",")[0] for line in lines[1:]] == ["300000", "150000"]

    def test_overhead_slice_too_short(self):
        """Test that a slice under ten pads exits 2."""
        returncode, stdout, stderr = self.run_tcsim("overhead", "--slice", "100000", "--seed", "1")
        assert returncode == 2
        assert "ten pads" in stderr

    def test_fence_report(self):
        """Test that the worst-case fence hits the analytic bound exactly."""
        returncode, stdout, stderr = self.run_tcsim("fence")
        assert returncode == 0
        report = fields(stdout)
        assert report["variant"] == "fence.t.s"
        assert report["worst-case bound"] == "2554 cycles"
        assert report["adversarial raw"] == "2554 cycles"
        assert report["returned"] == "15000 cycles"
        assert report["corrupted"] == "no"
        assert report["pad"] == "12446 cycles"

    def test_fence_without_pad(self):
        """Test that --no-pad returns the raw cost."""
        returncode, stdout, stderr = self.run_tcsim("fence", "--no-pad")
        assert returncode == 0
        report = fields(stdout)
        assert report["pad target"] == "off"
        assert report["returned"] == "2554 cycles"
        assert "pad" not in report

    def test_pad_below_bound(self):
        """Test that a pad under the worst case is refused with exit 2."""
        returncode, stdout, stderr = self.run_tcsim("fence", "--pad", "2000")
        assert returncode == 2
        assert "2554" in stderr

    def test_bad_config_version(self):
        """Test that a config from another major version exits 2."""
        path = self.tmp / "old.json"
        path.write_text(json.dumps({"version": "0.9"}))
        returncode, stdout, stderr = self.run_tcsim("fence", "--config", str(path))
        assert returncode == 2
        assert stderr.startswith("Error: configuration version 0.9")

    def test_config_from_environment(self):
        """Test that $TCSIM_CONFIG is honoured."""
        cmd = [sys.executable, "-m", "tcsim", "fence"]
        env = dict(os.environ, **{CONFIG_ENV: str(self.config)})
        result = subprocess.run(cmd, cwd=PROJECT_ROOT, capture_output=True, text=True, env=env)
        assert result.returncode == 0
        assert fields(result.stdout)["worst-case bound"] == "1658 cycles"


class TestExitCodes:
    """In-process checks of the error-to-exit-code mapping."""

    def test_pad_overrun_exit(self, monkeypatch, capsys):
        """Test that a pad overrun surfacing from a command exits 3."""

        def overrun(args, config):
            raise PadOverrunError(16_000, 15_000)

        monkeypatch.delenv(CONFIG_ENV, raising=False)
        monkeypatch.setitem(cli.COMMAND_TO_HANDLER, "fence", overrun)
        with pytest.raises(SystemExit) as info:
            cli.main(["fence"])
        assert info.value.code == 3
        assert "Error: fence took 16000 cycles" in capsys.readouterr().err
