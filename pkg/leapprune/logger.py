"""
Leveled console/file logger used by the training harness.

Usage:
    ```py
    from leapprune import Logger

    logging = Logger("LEAP", log_level=5)
    logging.info("step 20 | R=0.41")
    ```

    Log Levels:
    - 0: No logs
    - 1: Info
    - 2: Warning
    - 3: Error
    - 4: Critical
    - 5: Debug
"""

import os
import traceback
from datetime import datetime
from typing import Any, Literal

__all__ = (
    "Logger",
)

LogType = Literal["info", "warning", "error", "critical", "debug"]

LOGGER_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_FILE_NAME_TIME_FORMAT = "%Y-%m-%d %H-%M-%S"
LOG_LEVELS: dict[str, int] = {
    "info": 1,
    "warning": 2,
    "error": 3,
    "critical": 4,
    "debug": 5
}

def _ansi(*codes: int) -> str:
    return "\033[" + ";".join(str(code) for code in codes) + "m"

RESET = _ansi(0)
LEVEL_TAGS: dict[str, str] = {
    "info":     _ansi(1, 34) + "INFO    ",
    "warning":  _ansi(1, 33) + "WARNING ",
    "error":    _ansi(1, 31) + "ERROR   ",
    "critical": _ansi(41, 37) + "CRITICAL",
    "debug":    _ansi(1, 40) + "DEBUG   "
}


class Logger:
    """
    Prints leveled messages to the console and optionally appends them to a log file.

    Parameters:
    - name (str): Name shown in every line (default: "LEAP").
    - logs_folder (str | None): Directory for the log file; None disables file logging.
    - log_level (int): Highest level printed to the console (default: 1, info only).
    - log_file_log_level (int): Highest level written to the log file (default: 5).
    - color (bool): Whether console lines use ANSI colors (default: True).

    Example:
    ```py
    logging = Logger("LEAP", logs_folder="runs/leap/logs", log_level=2)
    logging.warning("target density 1.0 disables the regularizer")
    ```
    """

    def __init__(
        self,
        name: str = "LEAP",
        logs_folder: str | None = None,
        *,
        log_level: int = 1,
        log_file_log_level: int = 5,
        color: bool = True
    ) -> None:
        self.name = str(name)
        self.logs_folder = logs_folder
        self.log_file = self._get_log_file_path(logs_folder) if logs_folder else None
        self.log_level = log_level
        self.log_file_log_level = log_file_log_level
        self.color = color

    def __repr__(self) -> str:
        return f"Logger(name={self.name!r}, logs_folder={self.logs_folder!r}, log_level={self.log_level!r})"

    def _get_log_file_path(self, logs_folder: str) -> str:
        """Pick a not-yet-existing `<name> <timestamp>[ n].log` path inside `logs_folder`."""
        base_name = f"{self.name} {datetime.now().strftime(LOG_FILE_NAME_TIME_FORMAT)}"
        log_file = os.path.join(logs_folder, f"{base_name}.log")
        counter = 1
        while os.path.exists(log_file):
            log_file = os.path.join(logs_folder, f"{base_name} {counter}.log")
            counter += 1
        return log_file

    def _prefix(self, log_type: LogType, color: bool) -> str:
        timestamp = datetime.now().strftime(LOGGER_TIME_FORMAT)
        if color:
            tag = LEVEL_TAGS.get(log_type, "")
            return f"{RESET}{_ansi(1, 30)}{timestamp}{RESET} {tag}{RESET} {_ansi(31)}{self.name}{RESET} "
        return f"{timestamp} {log_type.upper():<8} {self.name} > "

    def log(self, log_type: LogType | int, message: Any, *, do_print: bool = True, do_save: bool = True) -> None:
        """
        Log `message` at `log_type`, which is a level name or its integer.

        Parameters:
        - log_type (str | int): "info", "warning", "error", "critical", "debug" or 1-5.
        - message (Any): Message content to log.
        - do_print (bool): Whether to print to the console (default: True).
        - do_save (bool): Whether to append to the log file (default: True).
        """
        if isinstance(log_type, int):
            level = log_type
            name = next((key for key, value in LOG_LEVELS.items() if value == level), "debug")
        else:
            level = LOG_LEVELS.get(log_type, 5)
            name = log_type

        if do_print and level <= self.log_level:
            print(self._prefix(name, self.color) + str(message), end=(RESET if self.color else "") + "\n", flush=True)  # type: ignore[arg-type]

        if do_save and self.log_file and level <= self.log_file_log_level:
            if self.logs_folder:
                os.makedirs(self.logs_folder, exist_ok=True)
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(self._prefix(name, False) + str(message) + "\n")  # type: ignore[arg-type]

    def info(self, message: Any, **kwargs: Any) -> None:
        self.log("info", message, **kwargs)

    def warning(self, message: Any, **kwargs: Any) -> None:
        self.log("warning", message, **kwargs)

    warn = warning

    def error(self, message: Any, exc_info: BaseException | None = None, **kwargs: Any) -> None:
        """Log an error; with `exc_info` the current traceback is appended."""
        if exc_info:
            message = f"{message}\n{traceback.format_exc()}"
        self.log("error", message, **kwargs)

    err = error

    def critical(self, message: Any, exc_info: BaseException | None = None, **kwargs: Any) -> None:
        if exc_info:
            message = f"{message}\n{traceback.format_exc()}"
        self.log("critical", message, **kwargs)

    crit = critical

    def debug(self, message: Any, **kwargs: Any) -> None:
        self.log("debug", message, **kwargs)
