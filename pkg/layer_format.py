"""
Text format for SSM layer specs.

One ``key = value`` entry per line, ``#`` starts a comment. Variant tags are
plain words; arrays are written as a shape tuple followed by the row-major
values, e.g. ``output_map.matrix = (2, 3) [0.0, 1.0, 0.5, 0.0, 0.0, 1.0]``.
Floats use ``repr`` so a dump/load cycle is exact.
"""

import re
from dataclasses import fields
from pathlib import Path

import numpy as np
from loguru import logger

from ssm import (
    IDENTITY,
    TRANSITION_VARIANTS,
    AffineInput,
    AffineMap,
    AffineOutput,
    FixedInput,
    FixedOutput,
    S6Input,
    SsmLayerSpec,
)

_INPUT_KINDS = {FixedInput: "fixed", AffineInput: "affine", S6Input: "s6"}
_OUTPUT_KINDS = {FixedOutput: "fixed", AffineOutput: "affine"}

_ARRAY_PATTERN = re.compile(r"^\(([\d,\s]*)\)\s*\[(.*)\]$")


def _array_literal(array: np.ndarray) -> str:
    shape = ", ".join(str(n) for n in array.shape)
    if array.ndim == 1:
        shape += ","
    values = ", ".join(repr(float(v)) for v in array.ravel())
    return f"({shape}) [{values}]"


def _parse_array(key: str, text: str) -> np.ndarray:
    match = _ARRAY_PATTERN.match(text.strip())
    if not match:
        raise ValueError(f"{key}: expected '(shape) [values]', got {text[:40]!r}")

    shape = tuple(int(n) for n in match.group(1).split(",") if n.strip())
    body = match.group(2).strip()
    values = [float(v) for v in body.split(",")] if body else []

    if len(values) != int(np.prod(shape)):
        raise ValueError(f"{key}: shape {shape} needs {int(np.prod(shape))} values, got {len(values)}")
    return np.array(values, dtype=float).reshape(shape)


def _emit(prefix: str, obj, lines: list[str]) -> None:
    for f in fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}.{f.name}"
        if isinstance(value, AffineMap):
            _emit(key, value, lines)
        else:
            lines.append(f"{key} = {_array_literal(np.asarray(value))}")


def dump_layer_spec(spec: SsmLayerSpec) -> str:
    """
    Serialize a layer spec to text.

    Args:
        spec: The layer spec

    Returns:
        Text ending in a newline
    """
    lines = [
        f"input_dim = {spec.input_dim}",
        f"state_dim = {spec.state_dim}",
        f"transition = {TRANSITION_VARIANTS[type(spec.transition)]}",
    ]
    _emit("transition", spec.transition, lines)

    lines.append(f"input_map = {_INPUT_KINDS[type(spec.input_map)]}")
    _emit("input_map", spec.input_map, lines)

    lines.append(f"output_map = {_OUTPUT_KINDS[type(spec.output_map)]}")
    _emit("output_map", spec.output_map, lines)

    if isinstance(spec.passthrough, str):
        lines.append(f"passthrough = {IDENTITY}")
    else:
        lines.append(f"passthrough = {_array_literal(spec.passthrough)}")

    return "\n".join(lines) + "\n"


def _parse_entries(text: str) -> dict[str, str]:
    entries = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Line {number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ValueError(f"Line {number}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _build(cls, prefix: str, entries: dict[str, str]):
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if f"{key}.weight" in entries:
            kwargs[f.name] = _build(AffineMap, key, entries)
        elif key in entries:
            kwargs[f.name] = _parse_array(key, entries[key])
        else:
            raise ValueError(f"Missing key: {key}")
    return cls(**kwargs)


def _lookup(kinds: dict, key: str, entries: dict[str, str]):
    if key not in entries:
        raise ValueError(f"Missing key: {key}")
    for cls, name in kinds.items():
        if name == entries[key]:
            return cls
    raise ValueError(f"Unknown {key} kind: {entries[key]!r}")


def load_layer_spec(text: str) -> SsmLayerSpec:
    """
    Parse a layer spec written by dump_layer_spec.

    Raises:
        ValueError: On malformed lines, missing keys or inconsistent shapes
    """
    entries = _parse_entries(text)

    try:
        input_dim = int(entries["input_dim"])
        state_dim = int(entries["state_dim"])
    except KeyError as e:
        raise ValueError(f"Missing key: {e.args[0]}") from None

    transition_cls = _lookup(TRANSITION_VARIANTS, "transition", entries)
    input_cls = _lookup(_INPUT_KINDS, "input_map", entries)
    output_cls = _lookup(_OUTPUT_KINDS, "output_map", entries)

    passthrough_text = entries.get("passthrough", IDENTITY)
    passthrough = (
        IDENTITY if passthrough_text == IDENTITY else _parse_array("passthrough", passthrough_text)
    )

    return SsmLayerSpec(
        input_dim=input_dim,
        state_dim=state_dim,
        transition=_build(transition_cls, "transition", entries),
        input_map=_build(input_cls, "input_map", entries),
        output_map=_build(output_cls, "output_map", entries),
        passthrough=passthrough,
    )


def save_layer_spec(spec: SsmLayerSpec, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_layer_spec(spec), encoding="utf-8")
    logger.info(f"Saved {spec.variant} layer spec to {path}")
    return path


def read_layer_spec(path: str | Path) -> SsmLayerSpec:
    return load_layer_spec(Path(path).read_text(encoding="utf-8"))
