import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from app.config.settings import settings

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Locale-independent text for one CSV cell; floats keep all 17 digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ArtifactWriter:
    """Writes CSV and JSON artifacts that start with a tool/config header."""

    def __init__(self, directory: Path, config_hash: str, version: Optional[str] = None):
        self.directory = Path(directory)
        self.config_hash = config_hash
        self.version = version or settings.APP_VERSION
        self.written: Dict[str, Path] = {}

    @property
    def header_line(self) -> str:
        return f"# {settings.APP_NAME} {self.version} config {self.config_hash}"

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Comma-separated, '.' decimal, LF line endings, header comment first."""
        path = self.directory / name
        lines = [self.header_line, ",".join(columns)]
        lines.extend(",".join(format_value(v) for v in row) for row in rows)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
        self.written[name] = path
        logger.debug(f"Wrote {name} ({len(lines) - 2} rows)")
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """JSON object whose first key is the tool/config header."""
        path = self.directory / name
        document = {
            "header": {"tool": settings.APP_NAME, "version": self.version, "config_hash": self.config_hash},
        }
        document.update(_to_jsonable(payload))
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(document, indent=2) + "\n")
        self.written[name] = path
        return path

    def manifest(self) -> Dict[str, str]:
        """File name → sha256 of everything written so far."""
        return {name: file_digest(path) for name, path in sorted(self.written.items())}
