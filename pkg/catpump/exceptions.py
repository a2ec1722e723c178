"""This module contains various functions and classes to handle errors in the framework."""

import traceback

from catpump import error_report
from catpump.connection import RunConnection, Task, TaskStatus


class CatPumpError(Exception):
    """Base class of every error raised by catpump."""


class PhysicsError(CatPumpError):
    """An error caused by breaking a physical or numerical rule. Runs hitting one are not retried."""


class ConfigError(PhysicsError):
    """The experiment configuration is invalid."""


class GaplessPoint(PhysicsError):
    """The two-level field vanishes at an evaluated phase point."""


class EmptyLattice(PhysicsError):
    """The truncation retains no site."""


class NonHermitianAssembly(PhysicsError):
    """An assembled Hamiltonian failed the Hermiticity check."""


class WidthTooSmall(PhysicsError):
    """A Gaussian mode collapsed onto a single site although a finite width was requested."""


class OutOfRange(PhysicsError):
    """A requested number or parameter lies outside its allowed range."""


class TruncationLoss(PhysicsError):
    """Too much probability was lost when placing a state on the lattice."""


class DimensionTooLarge(PhysicsError):
    """The Hamiltonian is too large for full diagonalization."""


class EigensolverFailure(PhysicsError):
    """An eigendecomposition failed or its residuals are too large."""


class DegenerateCut(PhysicsError):
    """An eigenvalue sits on a band cut, so its band cannot be assigned."""


class ZeroState(PhysicsError):
    """An operation needing a nonzero state received a zero vector."""


class BoundaryContamination(PhysicsError):
    """Probability reached the open boundary of the truncated lattice."""


class BoundaryContaminationWarning(UserWarning):
    """Some probability reached the open boundary of the truncated lattice."""


class PerturbativeRegimeWarning(UserWarning):
    """The mode frequencies are not small compared to the qubit gap."""


class SmallWidthWarning(UserWarning):
    """A small-width expansion is evaluated outside its range."""


def handle_error(message: str, error: Exception, task: Task | None, connection: RunConnection) -> None:
    """Handles an error caught during the run.
    Logs an error.
    Marks the task (if any) as failed.
    Writes an error report next to the task output.

    Args:
        message: A message to prepend to the error message.
        error: The exception that should be handled.
        task: The task to fail, if any.
        connection: The connection of the current run.
    """
    error_msg = f"{message}: {repr(error)}\n\nTrace:\n{traceback.format_exc()}"

    connection.log_error(error_msg)
    if task:
        connection.set_task_status(task, TaskStatus.FAILED, error_msg)
    report_dir = connection.task_dir(task) if task else connection.out_dir
    error_report.write_error_report(report_dir, error, connection.process_name)


def log_exception(connection: RunConnection) -> callable:
    """Creates a function to be used as an exception hook that logs any uncaught exception.

    Args:
        connection: The connection of the current run.

    Returns:
        callable: A function that can be assigned to sys.excepthook.
    """
    def inner(exception_type, value, traceback_string):
        connection.log_error(f"Uncaught Exception:\nType: {exception_type}\nValue: {value}\nTrace: {traceback_string}")
    return inner
