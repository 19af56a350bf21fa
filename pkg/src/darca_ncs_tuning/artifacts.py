"""
artifacts.py

File and directory helpers for experiment inputs and outputs.
Provides methods to read experiment configs, make sure an output directory
exists, and write the JSON and CSV artifacts every command produces.
Floats are serialized in their shortest round-trip form so that repeated
runs produce byte-identical files.
"""

import csv
import io
import json
import os
from typing import Any, Iterable, Optional, Sequence

import yaml
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger

# Initialize the logger
logger = DarcaLogger(name="artifacts").get_logger()


class ArtifactException(DarcaException):
    """
    Custom exception for artifact I/O errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "ARTIFACT_ERROR",
            metadata=metadata,
            cause=cause,
        )


def format_float(value: float) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(value))


def _jsonable(value: Any) -> Any:
    # numpy scalars and arrays come through as plain Python values
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class ArtifactUtils:
    @staticmethod
    def file_exist(path: str) -> bool:
        """
        Check if a file exists.

        Args:
            path (str): The file path to check.

        Returns:
            bool: True if the file exists, False otherwise.
        """
        exists = os.path.isfile(path)
        logger.debug(f"Checked file existence for '{path}': {exists}")
        return exists

    @staticmethod
    def ensure_directory(path: str) -> bool:
        """
        Create an output directory if it does not exist yet.

        Args:
            path (str): Directory to create.

        Returns:
            bool: True if created or already present.

        Raises:
            ArtifactException: If the directory cannot be created or
                               is not writable.
        """
        try:
            os.makedirs(path, exist_ok=True)
        except Exception as e:
            raise ArtifactException(
                message=f"Failed to create directory: {path}",
                error_code="DIRECTORY_CREATION_ERROR",
                metadata={"path": path},
                cause=e,
            ) from e

        if not os.access(path, os.W_OK):
            raise ArtifactException(
                message=f"Directory is not writable: {path}",
                error_code="DIRECTORY_CREATION_ERROR",
                metadata={"path": path},
            )
        logger.debug(f"Output directory ready: {path}")
        return True

    @staticmethod
    def read_text(file_path: str) -> str:
        """
        Read a UTF-8 text file.

        Raises:
            ArtifactException: If the file does not exist or reading fails.
        """
        if not ArtifactUtils.file_exist(file_path):
            raise ArtifactException(
                message=f"File not found: {file_path}",
                error_code="FILE_NOT_FOUND",
                metadata={"file_path": file_path},
            )

        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = f.read()
            logger.debug("Read text file: %s", file_path)
            return data
        except Exception as e:
            raise ArtifactException(
                message=f"Failed to read file: {file_path}",
                error_code="FILE_READ_ERROR",
                metadata={"file_path": file_path},
                cause=e,
            ) from e

    @staticmethod
    def write_text(file_path: str, content: str) -> bool:
        """
        Write *content* to *file_path*, creating the parent directory.

        Returns
        -------
        bool
            True on success.

        Raises
        ------
        ArtifactException
            For directory creation or write errors.
        """
        directory = os.path.dirname(file_path)
        if directory:
            ArtifactUtils.ensure_directory(directory)

        try:
            with open(file_path, "w", encoding="utf-8", newline="") as f:
                f.write(content)
            logger.debug("Wrote text file: %s", file_path)
            return True
        except Exception as e:
            raise ArtifactException(
                message=f"Failed to write to file: {file_path}",
                error_code="FILE_WRITE_ERROR",
                metadata={"file_path": file_path},
                cause=e,
            ) from e

    @staticmethod
    def load_config(file_path: str) -> dict:
        """
        Load a JSON (or YAML) experiment config into a mapping.

        Raises:
            ArtifactException: If the file is missing or does not parse
                               to a mapping.
        """
        text = ArtifactUtils.read_text(file_path)
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ArtifactException(
                message=f"Config does not parse: {file_path}",
                error_code="CONFIG_PARSE_ERROR",
                metadata={"file_path": file_path},
                cause=e,
            ) from e

        if not isinstance(data, dict):
            raise ArtifactException(
                message=f"Config root must be a mapping: {file_path}",
                error_code="CONFIG_PARSE_ERROR",
                metadata={"file_path": file_path, "type": type(data).__name__},
            )
        logger.debug(f"Loaded config '{file_path}' with keys {sorted(data)}")
        return data

    @staticmethod
    def write_json(file_path: str, data: Any) -> bool:
        """Write *data* as indented JSON with sorted keys."""
        content = json.dumps(_jsonable(data), indent=2, sort_keys=True)
        return ArtifactUtils.write_text(file_path, content + "\n")

    @staticmethod
    def to_csv(
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> str:
        """
        Render rows as CSV text. Floats use the shortest round-trip form,
        booleans are written as ``true``/``false``.
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
        return buffer.getvalue()

    @staticmethod
    def write_csv(
        file_path: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> bool:
        """Write rows under *header* to *file_path*."""
        return ArtifactUtils.write_text(
            file_path, ArtifactUtils.to_csv(header, rows)
        )

    @staticmethod
    def read_csv(file_path: str) -> list:
        """Read a CSV artifact back as a list of dicts (all values str)."""
        text = ArtifactUtils.read_text(file_path)
        return list(csv.DictReader(io.StringIO(text)))


def _csv_cell(value: Optional[Any]) -> str:
    if value is None:
        return ""
    kind = type(value).__name__
    if kind in ("bool", "bool_"):
        return "true" if value else "false"
    if kind.startswith("float"):
        return format_float(value)
    return str(value)
