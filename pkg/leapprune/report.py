"""
Plot-ready outputs: per-matrix density tables from checkpoints, and grid sweeps
that compare the final summaries of several runs.
"""

import os
from dataclasses import dataclass
from typing import Any, Sequence

import pandas as pd

from .           import errors
from .abc        import LoggerProtocol
from .checkpoint import Checkpoint, load_checkpoint
from .config     import RunConfig
from .constants  import sweep_axes
from .logger     import Logger
from .trainer    import run_training
from .types      import DensityRow, SweepRow

__all__ = (
    "LayerDensityReport",
    "report_layer_densities",
    "parse_axis_values",
    "Sweep",
    "sweep"
)

DENSITY_COLUMNS = ["matrix", "layer", "sublayer", "density"]
GROUP_COLUMNS = ["layer", "sublayer", "mean_density"]
SWEEP_COLUMNS = ["axis", "value", "final_accuracy", "final_density", "steps", "error"]

@dataclass(frozen=True)
class LayerDensityReport:
    """
    Attributes:
        rows (pd.DataFrame): One row per matrix: `matrix`, `layer`, `sublayer`, `density`.
        groups (pd.DataFrame): Count-weighted mean density per (`layer`, `sublayer`).
        overall (float): Count-weighted mean over every matrix, i.e. R(σ).
    """

    rows: pd.DataFrame
    groups: pd.DataFrame
    overall: float

    def to_csv(self, path: str) -> tuple[str, str]:
        """Write `<path>` (rows) and `<stem>_groups.csv`; return both paths."""
        stem, _ = os.path.splitext(path)
        groups_path = f"{stem}_groups.csv"
        try:
            self.rows.to_csv(path, index=False)
            self.groups.to_csv(groups_path, index=False)
        except OSError as e:
            raise errors.TrainingError(f"could not write '{path}': {e}") from e
        return path, groups_path

def report_layer_densities(checkpoint: Checkpoint | str) -> LayerDensityReport:
    """
    Tabulate k(σ_i) for every matrix of a checkpoint, with MHA/FC group means per layer.

    Args:
        checkpoint (Checkpoint | str): A checkpoint or the path of one.

    Raises:
        FormatError: If the checkpoint is corrupt or holds no thresholds.

    Example:
        >>> report = report_layer_densities("runs/leap/checkpoint.bin")
        >>> report.groups
           layer sublayer  mean_density
        0      0       fc      0.071...
        1      0      mha      0.180...
    """
    if isinstance(checkpoint, str):
        checkpoint = load_checkpoint(checkpoint)
    densities = checkpoint.densities()
    matrices = checkpoint.matrices
    try:
        rows = [
            DensityRow(matrix=m["name"], layer=int(m["layer"]), sublayer=str(m["sublayer"]), density=float(k))
            for m, k in zip(matrices, densities)
        ]
        counts = [int(m["count"]) for m in matrices]
    except (KeyError, TypeError, ValueError) as e:
        raise errors.FormatError(f"checkpoint matrix table is corrupt: {e}") from e

    table = pd.DataFrame(rows, columns=DENSITY_COLUMNS)
    weighted = table.assign(count=counts, kept=table["density"] * counts)
    grouped = weighted.groupby(["layer", "sublayer"], sort=True)[["kept", "count"]].sum().reset_index()
    grouped["mean_density"] = grouped["kept"] / grouped["count"]
    overall = float(weighted["kept"].sum() / weighted["count"].sum())
    return LayerDensityReport(rows=table, groups=grouped[GROUP_COLUMNS], overall=overall)


_AXIS_TYPES: dict[str, type] = {
    "temperature": float,
    "lambda_max": float,
    "target_density": float,
    "method": str,
    "profile": str,
    "seed": int
}

def parse_axis_values(axis: str, values: str | Sequence[Any]) -> list[Any]:
    """
    Split `v1,v2,...` and convert each value to the axis type.

    Raises:
        UsageError: If the axis is unknown, the list is empty, or a value does not convert.
    """
    if axis not in sweep_axes:
        raise errors.UsageError(f"unknown sweep axis '{axis}'; expected one of {', '.join(sweep_axes)}")
    items = [v.strip() for v in values.split(",")] if isinstance(values, str) else list(values)
    items = [v for v in items if v != ""]
    if not items:
        raise errors.UsageError("a sweep needs at least one value")
    try:
        return [_AXIS_TYPES[axis](v) for v in items]
    except ValueError as e:
        raise errors.UsageError(f"invalid value for axis '{axis}': {e}") from e


class Sweep:
    """
    One training run per axis value, sharing every other setting of the template.

    Children run one after the other in this process; each writes into
    `<template.out>/<axis>=<value>/`. A failing child is recorded in its row and
    the sweep moves on.

    Args:
        template (RunConfig): Settings shared by every run.
        axis (str): The swept field.
        values (str | Sequence[Any]): Values of the swept field, or `v1,v2,...`.
        logger (LoggerProtocol | None, optional): Custom logger. Default: Logger("LEAP-SWEEP")
        debug (bool, optional): Enable debug logging. Sets the logger level to 5. Default: False
    """

    def __init__(
        self,
        template: RunConfig,
        axis: str,
        values: str | Sequence[Any],
        *,
        logger: LoggerProtocol | None = None,
        debug: bool = False
    ) -> None:
        self.template = template
        self.axis = axis
        self.values = parse_axis_values(axis, values)
        self._logger: LoggerProtocol = logger if logger is not None else Logger(
            "LEAP-SWEEP", logs_folder=os.path.join(template.out, "logs")
        )
        if debug and isinstance(self._logger, LoggerProtocol):  # pyright: ignore[reportUnnecessaryIsInstance]
            self._logger.log_level = 5
        self.debug = debug

    @property
    def csv_path(self) -> str:
        return os.path.join(self.template.out, f"sweep_{self.axis}.csv")

    def _child(self, value: Any) -> SweepRow:
        row = SweepRow(axis=self.axis, value=str(value), final_accuracy=None, final_density=None, steps=None, error=None)
        try:
            config = self.template.override(**{
                self.axis: value,
                "out": os.path.join(self.template.out, f"{self.axis}={value}")
            })
            summary = run_training(config, logger=self._logger, debug=self.debug)
        except errors.BaseException as e:
            self._logger.error(f"{self.axis}={value} failed: {e}")
            row["error"] = f"{type(e).__name__}: {e}"
            return row
        row.update(
            final_accuracy=summary["final_accuracy"],
            final_density=summary["final_density"],
            steps=summary["steps"]
        )
        return row

    def run(self) -> pd.DataFrame:
        """
        Run every child and write the comparison CSV.

        Returns:
            pd.DataFrame: One row per value, in the given order.
        """
        rows = []
        for value in self.values:
            self._logger.info(f"Sweep {self.axis}={value}")
            rows.append(self._child(value))
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        os.makedirs(self.template.out, exist_ok=True)
        try:
            frame.to_csv(self.csv_path, index=False)
        except OSError as e:
            raise errors.TrainingError(f"could not write '{self.csv_path}': {e}") from e
        return frame

def sweep(
    template: RunConfig,
    axis: str,
    values: str | Sequence[Any],
    *,
    logger: LoggerProtocol | None = None,
    debug: bool = False
) -> pd.DataFrame:
    """`Sweep(template, axis, values).run()`."""
    return Sweep(template, axis, values, logger=logger, debug=debug).run()
