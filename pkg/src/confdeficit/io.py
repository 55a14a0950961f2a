"""JSON and CSV input/output for maps and reports.

Map files are JSON objects with a ``kind`` key:

``{"kind": "identity", "n": 3}``
    The inclusion of the sphere.
``{"kind": "moebius", "transform": {"O": ..., "xi": ..., "lambda": ...}}``
    A Moebius map.
``{"kind": "power", "k": 2}``
    ``z -> z^k`` on the 2-sphere.
``{"kind": "polynomial", "exponents": ..., "coeffs": ..., "plus_identity": false}``
    A polynomial field, optionally added to the identity.
``{"kind": "nodal", "values": ..., "domain": {...}}``
    Nodal values; ``domain`` is optional and must match the one in use.

Analytic kinds may carry ``"scale"`` and ``"shift"`` entries, applied as
``scale * f + shift``.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .maps import PolynomialField, SphereMap, identity, power_map
from .moebius import MoebiusTransform

__all__ = ["MapFileError", "smooth_from_spec", "map_from_spec", "load_map", "save_map", "to_jsonable",
           "write_json", "read_json", "write_csv"]


class MapFileError(ValueError):
    """A map file that cannot be interpreted."""


def smooth_from_spec(spec):
    """Build the closed-form map described by ``spec`` (``None`` for nodal maps)."""
    kind = spec.get("kind")
    if kind == "identity":
        f = identity(int(spec["n"]))
    elif kind == "moebius":
        f = MoebiusTransform.from_dict(spec["transform"]).as_smooth()
    elif kind == "power":
        f = power_map(int(spec["k"]))
    elif kind == "polynomial":
        f = PolynomialField(spec["exponents"], spec["coeffs"])
        if spec.get("plus_identity"):
            f = identity(f.exponents.shape[1]) + f
    elif kind == "nodal":
        return None
    else:
        raise MapFileError(f"unknown map kind {kind!r}")
    if "scale" in spec:
        f = float(spec["scale"]) * f
    if "shift" in spec:
        f = f + np.asarray(spec["shift"], dtype=float)
    return f


def _spec_dimension(spec):
    kind = spec.get("kind")
    if kind == "identity":
        return int(spec["n"])
    if kind == "moebius":
        return len(spec["transform"]["xi"])
    if kind == "power":
        return 3
    if kind == "polynomial":
        return int(np.asarray(spec["exponents"]).shape[1])
    return None


def map_from_spec(spec, domain):
    """Evaluate a map specification on ``domain``."""
    try:
        dim = _spec_dimension(spec)
        if dim is not None and dim != domain.n:
            raise MapFileError(f"map is defined on R^{dim} but the domain is S^{domain.n - 1} in R^{domain.n}")
        f = smooth_from_spec(spec)
        if f is not None:
            return SphereMap.from_smooth(domain, f)
        values = np.asarray(spec["values"], dtype=float)
    except MapFileError:
        raise
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise MapFileError(f"incomplete map specification: {exc}") from exc
    if values.ndim != 2 or values.shape[0] != domain.n_nodes:
        raise MapFileError(f"nodal values have shape {values.shape}, domain has {domain.n_nodes} nodes")
    return SphereMap(domain, values)


def load_map(path, domain):
    """Read a map file and evaluate it on ``domain``.

    Raises
    ------
    OSError
        If the file cannot be read.
    MapFileError
        If the content is not a valid map specification.
    """
    try:
        spec = read_json(path)
    except json.JSONDecodeError as exc:
        raise MapFileError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(spec, dict):
        raise MapFileError(f"{path}: expected a JSON object")
    return map_from_spec(spec, domain)


def save_map(u, path, include_domain=False):
    """Write the nodal values of ``u``."""
    spec = {"kind": "nodal", "values": u.values.tolist()}
    if include_domain:
        spec["domain"] = u.domain.to_dict()
    write_json(spec, path)


def to_jsonable(obj):
    """Convert numpy scalars and arrays (recursively) to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(rows, path, columns=None):
    """Write a list of dicts; floats are written with ``repr``."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in rows:
            writer.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])
