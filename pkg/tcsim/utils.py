"""
File and number helpers shared by the command-line front end.
"""

import os
import tempfile
from typing import Union


def atomic_write(path: str, data: Union[str, bytes]) -> None:
    """
    Write a file so readers see either the old contents or the new ones.

    The data goes to a temporary file in the target's directory, which is then
    renamed over the target.

    Args:
        path: Destination file
        data: Text (written as UTF-8 with no newline translation) or bytes
    """
    payload = data.encode("utf-8") if isinstance(data, str) else data
    directory = os.path.dirname(os.path.abspath(path))
    handle, temp_path = tempfile.mkstemp(dir=directory, prefix=".tcsim-", suffix=".tmp")
    try:
        with os.fdopen(handle, "wb") as stream:
            stream.write(payload)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise


def format_number_clean(value: Union[int, float]) -> str:
    """Format a number without a pointless fraction; other values keep up to 3 decimals."""
    if isinstance(value, int) or value.is_integer():
        return str(int(value))
    return f"{value:.3f}".rstrip("0").rstrip(".")


def format_units(value: Union[int, float], unit: str) -> str:
    """Format a value with its unit, pluralised unless the shown number is 1.

    Examples:
        format_units(1, "cycle") -> "1 cycle"
        format_units(15000, "cycle") -> "15000 cycles"
        format_units(2.5, "trial") -> "2.5 trials"
    """
    formatted_value = format_number_clean(value)
    plural = "" if formatted_value == "1" else "s"
    return f"{formatted_value} {unit}{plural}"


def format_percent(value: float) -> str:
    return f"{value:.3f}%"
