"""
Storage service for run artifacts on the local filesystem with one folder per command
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from PIL import Image
from pydantic import BaseModel

import src.config.env as env

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"


class StorageService:
    """Writes CSV tables, JSON summaries, text dumps and images under an output root"""

    # Folder per command
    FOLDER_SPECTRUM = "spectrum"
    FOLDER_ENTANGLEMENT = "entanglement-scan"
    FOLDER_QUENCH = "quench"
    FOLDER_DW = "dw"
    FOLDER_AUTOMATON = "automaton"
    FOLDER_FRAGMENTATION = "fragmentation"

    FOLDERS = (
        FOLDER_SPECTRUM,
        FOLDER_ENTANGLEMENT,
        FOLDER_QUENCH,
        FOLDER_DW,
        FOLDER_AUTOMATON,
        FOLDER_FRAGMENTATION,
    )

    CONFIG_SIDECAR = "config.json"

    def __init__(self, root: Optional[Union[str, Path]] = None):
        self.root = Path(root if root is not None else env.OUTPUT_DIR)

    def _get_folder_path(self, command: str) -> Path:
        """
        Folder for a command's artifacts, created on first use

        Args:
            command: Subcommand name

        Returns:
            Path: Existing directory
        """
        if command not in self.FOLDERS:
            raise ValueError(f"unknown command folder '{command}'")
        folder = self.root / command
        folder.mkdir(parents=True, exist_ok=True)
        return folder

    def _write(self, command: str, name: str, payload: Union[str, bytes]) -> Path:
        path = self._get_folder_path(command) / name
        try:
            if isinstance(payload, bytes):
                path.write_bytes(payload)
            else:
                path.write_text(payload, encoding="utf-8")
        except OSError as e:
            logger.error("Error writing %s: %s", path, e)
            raise
        logger.debug("Wrote %s (%d bytes)", path, len(payload))
        return path

    def write_table(self, command: str, name: str, frame: pd.DataFrame) -> Path:
        """CSV with a fixed float format so reruns are byte-identical."""
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._write(command, name, text)

    def write_summary(self, command: str, name: str, summary: BaseModel) -> Path:
        return self._write(command, name, summary.model_dump_json(indent=2) + "\n")

    def write_config(self, command: str, config: BaseModel) -> Path:
        """Sidecar holding the full validated run configuration."""
        return self.write_summary(command, self.CONFIG_SIDECAR, config)

    def write_text(self, command: str, name: str, text: str) -> Path:
        return self._write(command, name, text)

    def write_bytes(self, command: str, name: str, data: bytes) -> Path:
        return self._write(command, name, data)

    def write_image(self, command: str, name: str, image: Image.Image) -> Path:
        """Greyscale images go out as binary PGM when the name ends in .pgm."""
        path = self._get_folder_path(command) / name
        fmt = "PPM" if path.suffix == ".pgm" else None
        try:
            image.save(path, format=fmt)
        except OSError as e:
            logger.error("Error writing %s: %s", path, e)
            raise
        return path

    def read_table(self, command: str, name: str) -> pd.DataFrame:
        path = self.root / command / name
        if not path.exists():
            raise FileNotFoundError(f"Artifact not found: {path}")
        return pd.read_csv(path)

    def artifact_path(self, command: str, name: str) -> Path:
        return self._get_folder_path(command) / name

    def list_artifacts(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        List artifacts, optionally for one command only

        Returns:
            List[Dict[str, Any]]: Name (relative to the root) and size per file
        """
        base = self.root / command if command else self.root
        if not base.exists():
            return []
        return [
            {"name": str(path.relative_to(self.root)), "size": path.stat().st_size}
            for path in sorted(base.rglob("*"))
            if path.is_file()
        ]
