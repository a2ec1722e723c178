"""This module has functionality to write error reports to the output directory."""

import html
import traceback
from datetime import datetime, timezone
from pathlib import Path

from catpump import config


def write_error_report(directory: str | Path, exception: Exception, process_name: str) -> Path:
    """Writes an HTML error report when an exception occurs.
    The file name is set in the 'config' module.

    Args:
        directory: Directory to place the report in. Created if missing.
        exception: The exception that triggered the error.
        process_name: Name of the run, used as the report title.

    Returns:
        The path of the written report.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    html_message = f"""
    <html>
        <head><title>Error: {html.escape(process_name)}</title></head>
        <body>
            <p>Time: {datetime.now(timezone.utc).isoformat(timespec="seconds")}</p>
            <p>Error type: {html.escape(type(exception).__name__)}</p>
            <p>Error message: {html.escape(str(exception))}</p>
            <pre>{html.escape(traceback.format_exc())}</pre>
        </body>
    </html>
    """

    path = directory / config.ERROR_REPORT_NAME
    path.write_text(html_message, encoding="utf-8")
    return path
