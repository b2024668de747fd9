"""Flat key=value config files used for params, profiles and scenarios.

Format: one `key = value` pair per line; `#` starts a comment; blank lines
ignored. Values stay strings; callers coerce. Scenario files add INI-style
sections on top of this via configparser.
"""


def parse_kv(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv(fh.read())


def write_kv(mapping, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(mapping):
            fh.write(f"{key} = {mapping[key]}\n")
