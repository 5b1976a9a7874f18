import logging
import sys
import traceback
from pathlib import Path
from typing import Optional, TextIO

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "kgbench"


def configure(verbosity: int = 0, stream: TextIO | None = None) -> logging.Logger:
    """
    Attach a single ``RichHandler`` to the package logger.

    :param verbosity: 0 for warnings only, 1 for info, 2 or more for debug.
    :param stream: Where log records go; standard error by default.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    # stderr is looked up on every write, so a RunLog opened later still sees log records
    console = Console(file=stream) if stream is not None else Console(stderr=True)
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.propagate = False
    return logger


class RunLog:
    """
    Mirror stdout and stderr into a run log for the duration of a ``with`` block; an exception
    leaving the block is appended to the log as a traceback.

    The command line opens one per invocation when ``--log FILE`` is given. Run logs hold timings,
    so they never go into a bundle.
    """

    def __init__(self, target: TextIO | str | Path):
        if isinstance(target, (str, Path)):
            self._path: Optional[Path] = Path(target)
            self._log: Optional[TextIO] = None
        else:
            self._path, self._log = None, target
        self._saved: tuple[TextIO, TextIO] = (sys.stdout, sys.stderr)

    @property
    def owns_file(self) -> bool:
        """Whether the log is opened (appending) and closed here rather than by the caller."""
        return self._path is not None

    def __enter__(self) -> "RunLog":
        if self._path is not None:
            self._log = self._path.open("a", encoding="utf-8")
        self._saved = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = (_Mirrored(stream, self._log) for stream in self._saved)
        return self

    def __exit__(self, exc_type, exc_value, tb):
        sys.stdout, sys.stderr = self._saved
        if exc_value is not None:
            self._log.writelines(traceback.format_exception(exc_type, exc_value, tb))
        if self.owns_file:
            self._log.close()
        else:
            self._log.flush()


class _Mirrored:
    def __init__(self, stream: TextIO, log: TextIO):
        self._stream, self._log = stream, log

    def write(self, text: str) -> int:
        self._log.write(text)
        return self._stream.write(text)

    def flush(self):
        self._log.flush()
        self._stream.flush()

    def isatty(self) -> bool:
        # keeps rich from writing colour codes into the log
        return False
