"""This module handles resetting the state of the runner so every task starts with a clean slate."""

import gc
import shutil

from catpump import process
from catpump.connection import RunConnection, TaskStatus


def reset(connection: RunConnection) -> None:
    """Remove partial output of the task in progress and release the worker pools before a new attempt."""
    connection.log_trace("Resetting.")
    for task in connection.tasks:
        directory = connection.task_dir(task)
        if task.status is TaskStatus.IN_PROGRESS and directory.exists():
            shutil.rmtree(directory)
    close_all(connection)
    gc.collect()


def clean_up(connection: RunConnection) -> None:
    """Remove task directories that were never written to."""
    connection.log_trace("Doing cleanup.")
    for task in connection.tasks:
        directory = connection.task_dir(task)
        if directory.is_dir() and not any(directory.iterdir()):
            directory.rmdir()


def close_all(connection: RunConnection) -> None:
    """Gracefully shut down the sweep thread pools."""
    connection.log_trace("Closing all worker pools.")
    process.shutdown_pools()
