import shlex
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from anytime_ppi import __version__
from anytime_ppi.logger.text_logger import get_logger
from anytime_ppi.utils.utils import ensure_parent_dir, format_float, get_timestamp

logger = get_logger(__name__)

MANIFEST_SUFFIX = ".manifest.txt"


def command_line() -> str:
    return " ".join(shlex.quote(arg) for arg in sys.argv)


@dataclass
class RunManifest:
    """What is needed to reproduce an output file, written as key=value lines."""

    command: str
    config: Dict[str, object]
    seeds: Dict[str, object] = field(default_factory=dict)
    version: str = __version__
    started: str = field(default_factory=get_timestamp)

    @staticmethod
    def _format(value) -> str:
        if value is None:
            return "none"
        if isinstance(value, float):
            return format_float(value)
        if isinstance(value, (list, tuple)):
            return ",".join(RunManifest._format(v) for v in value)
        return str(value)

    def lines(self) -> List[str]:
        lines = [
            f"command={self.command}",
            f"version={self.version}",
            f"started={self.started}",
        ]
        lines += [f"seed.{k}={self._format(v)}" for k, v in self.seeds.items()]
        lines += [f"config.{k}={self._format(v)}" for k, v in self.config.items()]
        return lines

    def write(self, file_path):
        ensure_parent_dir(file_path)
        with open(file_path, "w", encoding="utf-8", newline="\n") as stream:
            stream.write("\n".join(self.lines()) + "\n")

    def emit(self, out: Optional[str], manifest: Optional[str] = None) -> Optional[str]:
        """
        Log the manifest and write it next to ``out`` (or to ``manifest``).
        :return: the path written, None when only logged
        """
        logger.info("Run manifest:\n" + "\n".join(self.lines()))
        path = manifest or (f"{out}{MANIFEST_SUFFIX}" if out and out != "-" else None)
        if path is not None:
            self.write(path)
            logger.info(f"Manifest written to {path}")
        return path
