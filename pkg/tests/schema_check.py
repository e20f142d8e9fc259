"""Minimal validator for the JSON schema subset the package ships.

Supports: type (name or list), const, enum, required, properties,
additionalProperties=false, items.  Raises AssertionError with a path
on the first mismatch.
"""

_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "null": type(None),
}


def _type_ok(value, name):
    if name == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if name == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, _TYPES[name])


def validate(instance, schema, path="$"):
    if "const" in schema:
        assert instance == schema["const"], f"{path}: {instance!r} != const {schema['const']!r}"
    if "enum" in schema:
        assert instance in schema["enum"], f"{path}: {instance!r} not in {schema['enum']}"
    if "type" in schema:
        names = schema["type"]
        if isinstance(names, str):
            names = [names]
        assert any(_type_ok(instance, n) for n in names), (
            f"{path}: {type(instance).__name__} is not {names}"
        )
    if isinstance(instance, dict):
        for key in schema.get("required", ()):
            assert key in instance, f"{path}: missing required key {key!r}"
        props = schema.get("properties", {})
        if schema.get("additionalProperties") is False:
            extra = set(instance) - set(props)
            assert not extra, f"{path}: unexpected keys {sorted(extra)}"
        for key, sub in props.items():
            if key in instance:
                validate(instance[key], sub, f"{path}.{key}")
    if isinstance(instance, list) and "items" in schema:
        for i, item in enumerate(instance):
            validate(item, schema["items"], f"{path}[{i}]")
