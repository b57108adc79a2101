"""Result formatter for qgain tables: display, CSV/JSON artifacts and weight files."""

import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .. import __version__

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write to a temp file in the target directory, fsync, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


class ResultFormatter:
    """Formats result tables for the terminal and for artifact files."""

    @staticmethod
    def format_results(
        table: pd.DataFrame,
        command: str,
        max_rows: Optional[int] = None,
    ) -> Dict[str, Any]:
        """
        Format a result table for display.

        Args:
            table: Result rows
            command: The command that produced them
            max_rows: Maximum number of rows to display

        Returns:
            Dictionary containing formatted results
        """
        if table is None or table.empty:
            return {
                "success": True,
                "command": command,
                "row_count": 0,
                "message": f"{command} finished but produced no rows.",
                "dataframe": None,
            }

        if max_rows and len(table) > max_rows:
            df_display = table.head(max_rows)
            truncated = True
        else:
            df_display = table
            truncated = False

        return {
            "success": True,
            "command": command,
            "row_count": len(table),
            "column_count": len(table.columns),
            "columns": list(table.columns),
            "dataframe": df_display,
            "truncated": truncated,
            "message": ResultFormatter._create_summary_message(command, len(table), truncated, max_rows),
        }

    @staticmethod
    def _create_summary_message(command: str, row_count: int, truncated: bool, max_rows: Optional[int]) -> str:
        if row_count == 1:
            return f"{command} produced 1 row."
        if truncated:
            return f"{command} produced {row_count} rows. Displaying first {max_rows} rows."
        return f"{command} produced {row_count} rows."

    @staticmethod
    def format_error(analysis: Dict[str, Any], command: str) -> Dict[str, Any]:
        """
        Format an error analysis for display.

        Args:
            analysis: Output of ErrorAnalyzer.analyze_error
            command: The command that failed
        """
        return {
            "success": False,
            "command": command,
            "error": analysis.get("error_message", ""),
            "error_type": analysis.get("error_type", "UNKNOWN_ERROR"),
            "suggested_fix": analysis.get("suggested_fix", ""),
            "message": f"{command} failed: {analysis.get('error_message', '')}",
        }

    @staticmethod
    def format_for_display(formatted_result: Dict[str, Any]) -> str:
        """Human-readable rendering of format_results() or format_error() output."""
        if not formatted_result["success"]:
            text = f"❌ Error [{formatted_result['error_type']}]: {formatted_result['error']}"
            if formatted_result.get("suggested_fix"):
                text += f"\n   Suggestion: {formatted_result['suggested_fix']}"
            return text

        if formatted_result["row_count"] == 0:
            return f"✅ {formatted_result['message']}"

        output = f"✅ {formatted_result['message']}\n\n"
        if formatted_result["dataframe"] is not None:
            output += formatted_result["dataframe"].to_string(index=False)
        return output

    # -- artifacts ------------------------------------------------------------

    @staticmethod
    def reproducibility_header(config: Dict[str, Any]) -> List[str]:
        """Comment lines embedding the effective config and seed."""
        return [
            f"# qgain {__version__}",
            f"# command: {config.get('command', '')}",
            f"# seed: {config.get('seed', '')}",
            f"# config: {json.dumps(config, sort_keys=True, default=str)}",
        ]

    @staticmethod
    def to_csv(table: pd.DataFrame, config: Optional[Dict[str, Any]] = None) -> str:
        """CSV text with '.' decimals, 17 significant digits and a '#' header."""
        header = ResultFormatter.reproducibility_header(config) if config is not None else []
        body = table.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return "".join(line + "\n" for line in header) + body

    @staticmethod
    def write_csv(table: pd.DataFrame, path: PathLike, config: Optional[Dict[str, Any]] = None) -> Path:
        return atomic_write_text(path, ResultFormatter.to_csv(table, config))

    @staticmethod
    def read_csv(path: PathLike) -> pd.DataFrame:
        return pd.read_csv(path, comment="#")

    @staticmethod
    def to_json(table: pd.DataFrame, config: Dict[str, Any]) -> str:
        """{"config": ..., "records": [...]}; NaN becomes null."""
        records = json.loads(table.to_json(orient="records", double_precision=15))
        return json.dumps({"config": config, "records": records}, indent=2, default=str) + "\n"

    @staticmethod
    def write_json(table: pd.DataFrame, path: PathLike, config: Dict[str, Any]) -> Path:
        return atomic_write_text(path, ResultFormatter.to_json(table, config))

    @staticmethod
    def write_weights(w: np.ndarray, path: PathLike, config: Optional[Dict[str, Any]] = None) -> Path:
        """One weight per line, 17 significant digits."""
        buffer = io.StringIO()
        header = ResultFormatter.reproducibility_header(config) if config is not None else []
        buffer.write("".join(line + "\n" for line in header))
        np.savetxt(buffer, np.asarray(w, dtype=float), fmt=FLOAT_FORMAT)
        return atomic_write_text(path, buffer.getvalue())

    @staticmethod
    def read_weights(path: PathLike) -> np.ndarray:
        return np.loadtxt(path, comments="#", ndmin=1, delimiter=",")
