"""
Reading and writing every on-disk format: dataset CSVs and raw frame logs,
NormStats JSON, model JSON and report tables.

Outputs are written to a temporary file next to the destination and renamed
into place, so a failure never leaves a partial file behind.
"""
from __future__ import annotations

import contextlib
import json
import logging
import os
import pathlib
import tempfile
import time
from collections.abc import Iterable, Iterator
from typing import Any

import npc_io
import polars as pl

from etexshape.dataset import (
    CSV_COLUMNS,
    CSV_HEADER,
    Dataset,
    NormStats,
    ParseError,
    Sample,
    format_frame_line,
    parse_frame_line,
)
from etexshape.kinematics import DEFAULT_LENGTH
from etexshape.nn import Model, ShapeMismatch

logger = logging.getLogger(__name__)

MODEL_FORMAT = "etexshape-model/1"


class SchemaError(ValueError):
    """A JSON file does not have the structure its reader expects."""


def local_path(path: npc_io.PathLike) -> pathlib.Path:
    """Normalize with npc_io and insist on a local file: outputs are renamed into place."""
    upath = npc_io.from_pathlike(path)
    if upath.protocol not in ("", "file", "local"):
        raise ValueError(f"only local files are supported, got {upath.protocol!r}: {upath}")
    return pathlib.Path(upath.path if upath.protocol else upath.as_posix())


@contextlib.contextmanager
def atomic_writer(path: npc_io.PathLike) -> Iterator[Any]:
    """Text file handle whose contents replace `path` only if the block exits cleanly."""
    path = local_path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path: npc_io.PathLike, text: str) -> None:
    with atomic_writer(path) as f:
        f.write(text)


# dataset CSV / frame logs ------------------------------------------------------ #


def _is_header(line: str) -> bool:
    return line.split(",", 1)[0].strip() == CSV_COLUMNS[0]


def parse_frame_lines(
    lines: Iterable[str],
    strict: bool = True,
    length: float = DEFAULT_LENGTH,
) -> tuple[list[Sample], list[ParseError]]:
    """Parse records, skipping blank lines, '#' comments and the header.

    In strict mode the first bad record raises its ParseError (with line number);
    otherwise bad records are collected and returned alongside the good samples.

    Examples:
        >>> samples, errors = parse_frame_lines(["# log", CSV_HEADER, "512," * 16 + "0.0,0.0", "oops"], strict=False)
        >>> len(samples), [e.line_number for e in errors]
        (1, [4])
    """
    samples: list[Sample] = []
    errors: list[ParseError] = []
    for line_number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or _is_header(stripped):
            continue
        try:
            samples.append(parse_frame_line(stripped, length))
        except ParseError as exc:
            error = exc.at_line(line_number)
            if strict:
                raise error from None
            errors.append(error)
    return samples, errors


def read_dataset_csv(
    path: npc_io.PathLike,
    strict: bool = True,
    length: float = DEFAULT_LENGTH,
) -> tuple[Dataset, list[ParseError]]:
    """Dataset CSV or raw frame log -> (Dataset, errors for skipped lines)."""
    path = local_path(path)
    t0 = time.time()
    with path.open(encoding="utf-8") as f:
        samples, errors = parse_frame_lines(f, strict=strict, length=length)
    if samples:
        dataset = Dataset.from_samples(samples)
    else:
        dataset = Dataset(counts=[], kappa=[], phi=[], length=length)
    logger.info(f"read {len(dataset)} samples from {path.name} in {time.time() - t0:.2f} s ({len(errors)} bad lines)")
    return dataset, errors


def dataset_csv_text(dataset: Dataset) -> str:
    return "\n".join([CSV_HEADER, *(format_frame_line(sample) for sample in dataset)]) + "\n"


def write_dataset_csv(dataset: Dataset, path: npc_io.PathLike) -> None:
    write_text(path, dataset_csv_text(dataset))
    logger.info(f"wrote {len(dataset)} samples to {path}")


# JSON ------------------------------------------------------------------------- #


def read_json(path: npc_io.PathLike) -> Any:
    path = local_path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path.name} is not valid JSON: {exc}") from None


def write_json(path: npc_io.PathLike, data: Any) -> None:
    write_text(path, json.dumps(data, indent=2) + "\n")


def read_norm_stats(path: npc_io.PathLike) -> NormStats:
    data = read_json(path)
    try:
        return NormStats.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad NormStats file {path}: {exc!r}") from None


def write_norm_stats(norm: NormStats, path: npc_io.PathLike) -> None:
    write_json(path, norm.to_dict())


def save_model(model: Model, path: npc_io.PathLike) -> None:
    """Spec, flat row-major parameter arrays per layer and the training NormStats."""
    write_json(path, {"format": MODEL_FORMAT, **model.to_dict()})
    logger.info(f"saved {model.spec.notation} ({model.param_count} params) to {path}")


def load_model(path: npc_io.PathLike) -> Model:
    data = read_json(path)
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise SchemaError(f"{path} is not an {MODEL_FORMAT} file")
    try:
        return Model.from_dict(data)
    except (KeyError, TypeError, ValueError, ShapeMismatch) as exc:
        raise SchemaError(f"bad model file {path}: {exc!r}") from None


# tables ----------------------------------------------------------------------- #


def write_table(
    df: pl.DataFrame,
    path: npc_io.PathLike,
    comments: Iterable[str] = (),
    float_precision: int | None = None,
) -> None:
    """CSV with a header row, followed by optional '# ' comment lines."""
    text = df.write_csv(float_precision=float_precision)
    text += "".join(f"# {line}\n" for line in comments)
    write_text(path, text)


def write_tables(
    dfs: Iterable[pl.DataFrame], path: npc_io.PathLike, float_precision: int | None = None
) -> None:
    """Several CSV blocks (each with its own header) separated by a blank line."""
    write_text(path, "\n".join(df.write_csv(float_precision=float_precision) for df in dfs))


if __name__ == "__main__":
    from npc_io import testmod

    testmod()
