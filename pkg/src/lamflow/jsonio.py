"""Deterministic JSON writing.

Keys keep insertion order and floats are always printed with 17 significant
digits, so identical inputs give byte-identical files.
"""

import json
import math

import numpy as np


def _fmt_float(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        # not valid JSON; encode as strings so files stay parseable
        return json.dumps(repr(x))
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, out):
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for n, (k, v) in enumerate(obj.items()):
            if n:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for n, v in enumerate(obj.tolist() if isinstance(obj, np.ndarray) else obj):
            if n:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj):
    out = []
    _encode(obj, out)
    return "".join(out)


def write_json(path, obj):
    with open(path, "w") as f:
        f.write(dumps(obj))
        f.write("\n")


def write_jsonl(path, records):
    with open(path, "w") as f:
        for rec in records:
            f.write(dumps(rec))
            f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
