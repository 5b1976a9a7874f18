import io
import logging
import sys

import pytest
from rich.logging import RichHandler

from kgbench.logging import LOGGER_NAME, RunLog, configure
from kgbench.timer import Timer


@pytest.fixture()
def package_logger():
    logger = logging.getLogger(LOGGER_NAME)
    level, handlers, propagate = logger.level, list(logger.handlers), logger.propagate
    yield logger
    logger.setLevel(level)
    logger.handlers[:] = handlers
    logger.propagate = propagate


class TestRunLog:
    def test_copies_both_streams(self, tmp_path, capsys):
        log = tmp_path / "run.log"
        with RunLog(str(log)):
            print("to stdout")
            print("to stderr", file=sys.stderr)
        captured = capsys.readouterr()
        assert captured.out == "to stdout\n"
        assert captured.err == "to stderr\n"
        assert log.read_text(encoding="utf-8") == "to stdout\nto stderr\n"

    def test_appends(self, tmp_path):
        log = tmp_path / "run.log"
        for word in ("one", "two"):
            with RunLog(str(log)):
                print(word)
        assert log.read_text(encoding="utf-8") == "one\ntwo\n"

    def test_records_the_exception(self, tmp_path):
        log = tmp_path / "run.log"
        with pytest.raises(KeyError):
            with RunLog(str(log)):
                raise KeyError("missing")
        assert "KeyError: 'missing'" in log.read_text(encoding="utf-8")

    def test_caller_keeps_its_stream_open(self):
        stream = io.StringIO()
        with RunLog(stream) as run_log:
            print("kept")
            assert not sys.stdout.isatty()
        assert not run_log.owns_file
        assert stream.getvalue() == "kept\n"
        stream.write("still open")

    def test_path_target(self, tmp_path):
        run_log = RunLog(tmp_path / "run.log")
        assert run_log.owns_file
        assert not (tmp_path / "run.log").exists()
        with run_log:
            print("opened on entry")
        assert (tmp_path / "run.log").read_text(encoding="utf-8") == "opened on entry\n"

    def test_restores_the_streams(self, tmp_path):
        stdout, stderr = sys.stdout, sys.stderr
        with RunLog(str(tmp_path / "run.log")):
            assert sys.stdout is not stdout
        assert (sys.stdout, sys.stderr) == (stdout, stderr)


class TestConfigure:
    @pytest.mark.kwparametrize(
        dict(verbosity=0, level=logging.WARNING),
        dict(verbosity=1, level=logging.INFO),
        dict(verbosity=2, level=logging.DEBUG),
        dict(verbosity=5, level=logging.DEBUG),
    )
    def test_levels(self, package_logger, verbosity, level):
        assert configure(verbosity, io.StringIO()).level == level

    def test_single_handler(self, package_logger):
        configure(1, io.StringIO())
        configure(1, io.StringIO())
        assert sum(isinstance(h, RichHandler) for h in package_logger.handlers) == 1

    def test_module_loggers_reach_the_stream(self, package_logger):
        stream = io.StringIO()
        configure(1, stream)
        logging.getLogger("kgbench.miner").info("level %d done", 2)
        logging.getLogger("kgbench.miner").debug("hidden")
        assert "level 2 done" in stream.getvalue()
        assert "hidden" not in stream.getvalue()


class TestTimer:
    def test_named_stage(self):
        messages = []
        with Timer("mine", logger=messages.append):
            pass
        (message,) = messages
        assert message.startswith("stage 'mine' took ")
        assert message.endswith(" seconds")

    def test_unnamed(self):
        messages = []
        with Timer(logger=messages.append):
            pass
        assert messages[0].startswith("elapsed time: ")

    def test_silent(self):
        with Timer("quiet", logger=None) as timer:
            pass
        assert timer.last >= 0
