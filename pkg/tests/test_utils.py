"""
Tests for utility functions.
"""

import os

import pytest

from tcsim.utils import atomic_write, format_number_clean, format_percent, format_units


class TestFormatNumberClean:
    """Test the format_number_clean utility function."""

    def test_integers(self):
        """Integers and integral floats have no fraction."""
        assert format_number_clean(15000) == "15000"
        assert format_number_clean(2.0) == "2"

    def test_fractions(self):
        """Fractions keep at most three decimals without trailing zeros."""
        assert format_number_clean(2.5) == "2.5"
        assert format_number_clean(0.12345) == "0.123"
        assert format_number_clean(1.10) == "1.1"


class TestFormatUnits:
    """Test the format_units utility function."""

    def test_singular(self):
        """Exactly one takes the singular."""
        assert format_units(1, "cycle") == "1 cycle"
        assert format_units(1.0, "cycle") == "1 cycle"

    def test_plural(self):
        """Everything else is pluralised."""
        assert format_units(0, "cycle") == "0 cycles"
        assert format_units(15000, "cycle") == "15000 cycles"
        assert format_units(2.5, "trial") == "2.5 trials"

    def test_percent(self):
        """Percentages use three decimals."""
        assert format_percent(0.15) == "0.150%"


class TestAtomicWrite:
    """Test atomic_write."""

    def test_writes_text_without_translation(self, tmp_path):
        """Text is written as UTF-8 bytes with LF kept as LF."""
        path = tmp_path / "m.csv"
        atomic_write(str(path), "a,b\n1,2\n")
        assert path.read_bytes() == b"a,b\n1,2\n"

    def test_replaces_existing(self, tmp_path):
        """An existing file is replaced whole."""
        path = tmp_path / "out.pgm"
        path.write_bytes(b"old contents that are longer")
        atomic_write(str(path), b"P5\n")
        assert path.read_bytes() == b"P5\n"

    def test_no_temp_files_left(self, tmp_path):
        """Only the target remains in the directory."""
        atomic_write(str(tmp_path / "x.json"), "{}\n")
        assert os.listdir(tmp_path) == ["x.json"]

    def test_failure_cleans_up(self, tmp_path):
        """A failed rename leaves neither a temp file nor a target."""
        target = tmp_path / "taken"
        target.mkdir()
        (target / "child").write_text("x")
        with pytest.raises(OSError):
            atomic_write(str(target), "data")
        assert sorted(os.listdir(tmp_path)) == ["taken"]
