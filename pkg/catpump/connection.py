"""Connection object handed to every stage of a run: command line arguments, logging and the task queue."""

from __future__ import annotations

import argparse
import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from catpump import config

COMMANDS = ("geometry", "evolve", "cat", "semiclassics", "quasiperiods")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class TaskStatus(enum.Enum):
    """Status of a task in the queue."""
    NEW = "new"
    IN_PROGRESS = "in_progress"
    DONE = "done"
    FAILED = "failed"


@dataclass
class Task:
    """One experiment to run: a command applied to a (possibly preset-modified) config file."""
    id: int
    command: str
    preset: str | None
    status: TaskStatus = TaskStatus.NEW
    message: str = ""

    @property
    def reference(self) -> str:
        """Directory-safe name of the task."""
        return f"{self.preset or 'custom'}/{self.command}"


@dataclass
class RunConnection:
    """Holds everything a run shares between the framework stages."""
    command: str
    config_path: Path
    presets: list[str | None]
    out_dir: Path
    full_scale: bool = False
    threads: int = 1
    started: float | None = None
    process_name: str = "catpump"
    logger: logging.Logger = field(default_factory=lambda: logging.getLogger("catpump"))
    tasks: list[Task] = field(default_factory=list)
    _queue: deque = field(default_factory=deque, repr=False)

    @classmethod
    def create_connection_from_args(cls, argv: list[str] | None = None) -> RunConnection:
        """Parse the command line and create a connection with one task per requested preset."""
        parser = argparse.ArgumentParser(
            prog="catpump",
            description="Qubit topologically coupled to two quantum rotors: evolution, cat splitting and oracles.",
        )
        parser.add_argument("command", choices=COMMANDS)
        parser.add_argument("--config", required=True, type=Path, help="Experiment TOML file.")
        parser.add_argument("--preset", action="append", default=None,
                            help="Built-in preset (fig3a ... fig8, or a descriptive alias). May be repeated.")
        parser.add_argument("--paper-scale", "--full-scale", dest="full_scale", action="store_true",
                            help="Use the full-size truncation.")
        parser.add_argument("--threads", type=int, default=1, help="Worker cap for parameter sweeps.")
        parser.add_argument("--out", type=Path, default=None, help="Output directory.")
        args = parser.parse_args(argv)

        if args.threads < 1:
            parser.error("--threads must be positive")

        connection = cls(
            command=args.command,
            config_path=args.config,
            presets=args.preset or [None],
            out_dir=args.out if args.out is not None else Path("out"),
            full_scale=args.full_scale,
            threads=args.threads,
            process_name=f"catpump {args.command}",
        )
        connection.bulk_create_tasks(args.command, connection.presets)
        return connection

    def configure_logging(self, level: int = logging.INFO) -> None:
        """Attach a stream handler and a log file in the output directory to the catpump logger."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        root = logging.getLogger("catpump")
        root.setLevel(logging.DEBUG)
        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()
        formatter = logging.Formatter(LOG_FORMAT)
        stream = logging.StreamHandler()
        stream.setLevel(level)
        stream.setFormatter(formatter)
        root.addHandler(stream)
        log_file = logging.FileHandler(self.out_dir / config.LOG_FILE_NAME, encoding="utf-8")
        log_file.setLevel(logging.DEBUG)
        log_file.setFormatter(formatter)
        root.addHandler(log_file)

    def log_trace(self, message: str) -> None:
        self.logger.debug(message)

    def log_info(self, message: str) -> None:
        self.logger.info(message)

    def log_error(self, message: str) -> None:
        self.logger.error(message)

    def bulk_create_tasks(self, command: str, presets: list[str | None]) -> None:
        """Queue one task per preset."""
        for preset in presets:
            task = Task(id=len(self.tasks), command=command, preset=preset)
            self.tasks.append(task)
            self._queue.append(task)

    def get_next_task(self) -> Task | None:
        """Pop the next new task, marking it in progress. None when the queue is empty."""
        while self._queue:
            task = self._queue.popleft()
            if task.status is TaskStatus.NEW:
                task.status = TaskStatus.IN_PROGRESS
                return task
        return None

    def set_task_status(self, task: Task, status: TaskStatus, message: str = "") -> None:
        task.status = status
        task.message = message
        self.log_trace(f"Task {task.reference} -> {status.value}")

    def task_dir(self, task: Task) -> Path:
        return self.out_dir / task.reference

    @property
    def failed_tasks(self) -> list[Task]:
        return [task for task in self.tasks if task.status is TaskStatus.FAILED]
