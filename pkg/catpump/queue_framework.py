"""This module is the primary module of the runner framework. It collects the functionality of the rest of the framework."""

import sys

from catpump import config, initialize, process, reset
from catpump.connection import RunConnection, TaskStatus
from catpump.exceptions import PhysicsError, handle_error, log_exception


def main(argv: list[str] | None = None) -> int:
    """The entry point for the framework. Should be called as the first thing when running.

    Returns:
        The process exit code: 0 when every task succeeded, 1 otherwise.
    """
    connection = RunConnection.create_connection_from_args(argv)
    connection.configure_logging()
    sys.excepthook = log_exception(connection)
    connection.log_info("catpump started.")
    initialize.initialize(connection)

    task = None
    error_count = 0
    task_count = 0
    # Retry loop
    for _ in range(config.MAX_RETRY_COUNT):
        try:
            reset.reset(connection)

            # Queue loop
            while task_count < config.MAX_TASK_COUNT:
                task_count += 1
                task = connection.get_next_task()

                if not task:
                    connection.log_info("Queue empty.")
                    break  # Break queue loop

                try:
                    for attempt in range(1, config.QUEUE_ATTEMPTS + 1):
                        try:
                            process.process(connection, task)
                            break
                        except PhysicsError:
                            raise
                        except Exception as e:
                            connection.log_trace(f"Attempt {attempt} failed for task {task.reference}: {e}")
                            if attempt < config.QUEUE_ATTEMPTS:
                                connection.log_trace("Retrying task.")
                                reset.reset(connection)
                            else:
                                connection.log_trace(f"Task failed after {attempt} attempts.")
                                raise
                    connection.set_task_status(task, TaskStatus.DONE)

                except PhysicsError as error:
                    handle_error("Physics Error", error, task, connection)

            break  # Break retry loop

        # We actually want to catch all exceptions possible here.
        # pylint: disable-next = broad-exception-caught
        except Exception as error:
            error_count += 1
            handle_error(f"Process Error #{error_count}", error, task, connection)

    reset.clean_up(connection)
    reset.close_all(connection)

    if config.FAIL_ON_TOO_MANY_ERRORS and error_count == config.MAX_RETRY_COUNT:
        raise RuntimeError("Process failed too many times.")

    failed = connection.failed_tasks
    if failed:
        connection.log_error(f"{len(failed)} of {len(connection.tasks)} tasks failed.")
        return 1
    return 0
