"""Shared exception types; the CLI maps them onto exit codes."""


class UserError(Exception):
    """Invalid configuration, paths, or usage (CLI exit code 1)."""


class TrainingDiverged(Exception):
    """Loss became non-finite; diagnostics are dumped next to the run."""
