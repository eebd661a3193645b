import contextlib
from io import StringIO
from typing import Any, Callable

__all__ = ["catch_stdout", "run_click"]


def catch_stdout(func: Callable) -> Callable[..., tuple[Any, str]]:
    """Wrap a function so it returns its result together with everything it printed."""

    def decorator(*args, **kwargs) -> tuple[Any, str]:
        out = StringIO("")

        with contextlib.redirect_stdout(out):
            result = func(*args, **kwargs)

        stdout = out.getvalue()
        out.close()
        return result, stdout

    return decorator


@catch_stdout
def run_click(entry, cmd: list[str] | str) -> int:
    """Run a click command/group with a cmd and return its exit code. The
    wrapped call gives back `(exit_code, stdout)`.

    Args:
        - entry (click.Group | click.Command): The click entry point.
        - cmd (str | list[str]): The command to pass to the click entry point.
    """
    import click

    if not isinstance(entry, (click.Group, click.Command)):
        raise TypeError("Expected click entry point to be a click Group or Command.")

    if isinstance(cmd, str):
        cmd = cmd.replace("  ", " ").split(" ")
    elif not isinstance(cmd, list):
        raise ValueError("Expected args to be a string or a list of strings")

    # Catch end of cli parse (SystemExit), so program doesn't exit
    try:
        entry.main(cmd, prog_name="flowtrack")
    except SystemExit as exit_:
        code = exit_.code
        return code if isinstance(code, int) else (0 if code is None else 1)
    return 0
