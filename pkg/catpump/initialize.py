"""This module defines any initial processes to run when the runner starts."""

import time

from catpump.connection import RunConnection
from catpump.exceptions import ConfigError
from catpump.experiment import load_experiment


def initialize(connection: RunConnection) -> None:
    """Check the output directory, record the start time and resolve every queued task's configuration.

    Raises:
        ConfigError: if the output directory is not a directory or a task's configuration does not resolve.
    """
    connection.log_trace("Initializing.")
    if connection.out_dir.exists() and not connection.out_dir.is_dir():
        raise ConfigError(f"output path {connection.out_dir} is not a directory")
    connection.out_dir.mkdir(parents=True, exist_ok=True)
    connection.started = time.time()
    for task in connection.tasks:
        experiment = load_experiment(connection.config_path, task.preset, connection.full_scale)
        connection.log_info(f"Queued {task.reference} (config {experiment.digest()[:12]})")
