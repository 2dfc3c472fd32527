"""Load bundled JSON schemas and validate documents against a small subset
of JSON Schema (type, required, properties, items, enum, additionalProperties).
Every JSON artifact written by the CLI is checked before it hits disk.
"""

from __future__ import annotations

import json
from importlib import resources

_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "null": type(None),
}


class SchemaError(ValueError):
    pass


def load_schema(name: str) -> dict:
    text = resources.files("atomcount.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def _check_type(value, expected: str | list, where: str) -> None:
    expected_list = expected if isinstance(expected, list) else [expected]
    for exp in expected_list:
        if exp == "number":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return
        elif exp == "integer":
            if isinstance(value, int) and not isinstance(value, bool):
                return
        elif isinstance(value, _TYPES[exp]):
            return
    raise SchemaError(f"{where}: expected {expected}, got {type(value).__name__}")


def validate(doc, schema: dict, where: str = "$") -> None:
    """Raise SchemaError if doc fails the schema; return None otherwise."""
    if "type" in schema:
        _check_type(doc, schema["type"], where)
    if "enum" in schema and doc not in schema["enum"]:
        raise SchemaError(f"{where}: {doc!r} not one of {schema['enum']}")
    if isinstance(doc, dict):
        props = schema.get("properties", {})
        for key in schema.get("required", []):
            if key not in doc:
                raise SchemaError(f"{where}: missing required key {key!r}")
        if schema.get("additionalProperties") is False:
            extra = set(doc) - set(props)
            if extra:
                raise SchemaError(f"{where}: unexpected keys {sorted(extra)}")
        for key, sub in props.items():
            if key in doc:
                validate(doc[key], sub, f"{where}.{key}")
    elif isinstance(doc, list) and "items" in schema:
        for i, item in enumerate(doc):
            validate(item, schema["items"], f"{where}[{i}]")
