"""Instance file format: a schema-1 JSON document holding the decision space,
the realized scenario matrices (plain lists or a compact base64 float64
block), and generation provenance. Round-trips are lossless."""

from __future__ import annotations

import base64
import json

import numpy as np

from .model import APP_TAGS, DecisionSpace, Instance, ScenarioSet

SCHEMA_VERSION = 1
# matrices bigger than this many cells are stored as base64 float64 blocks
_B64_CELLS = 20_000


class InstanceFileError(ValueError):
    pass


def _matrix_to_json(a: np.ndarray, compact: bool):
    if compact:
        return {
            "dtype": "float64",
            "shape": list(a.shape),
            "b64": base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode(),
        }
    return [[float(v) for v in row] for row in a]


def _matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, dict):
        if obj.get("dtype") != "float64" or "b64" not in obj or "shape" not in obj:
            raise InstanceFileError("malformed matrix block")
        raw = base64.b64decode(obj["b64"])
        return np.frombuffer(raw, dtype=np.float64).reshape(obj["shape"]).copy()
    return np.asarray(obj, dtype=float)


def instance_to_json(inst: Instance, compact: bool = None) -> dict:
    scen = inst.scenarios
    if compact is None:
        compact = scen.u.size > _B64_CELLS
    space = inst.space
    return {
        "schema": SCHEMA_VERSION,
        "space": {
            "n_options": space.n_options,
            "ineq": [[[float(v) for v in c], float(r)] for c, r in space.ineq],
            "eq": [[[float(v) for v in c], float(r)] for c, r in space.eq],
            "fixed_ones": sorted(int(j) for j in space.fixed_ones),
            "app_tag": space.app_tag,
            "groups": [list(g) for g in space.groups] or None,
        },
        "scenarios": {
            "n": scen.n,
            "u": _matrix_to_json(scen.u, compact),
            "r": _matrix_to_json(scen.r, compact),
        },
        "provenance": _jsonable(inst.provenance),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj]
    return obj


def instance_from_json(doc: dict) -> Instance:
    if doc.get("schema") != SCHEMA_VERSION:
        raise InstanceFileError(f"unsupported schema {doc.get('schema')!r}")
    try:
        sp_doc = doc["space"]
        scen_doc = doc["scenarios"]
    except KeyError as e:
        raise InstanceFileError(f"missing section {e.args[0]!r}") from e
    if sp_doc.get("app_tag") not in APP_TAGS:
        raise InstanceFileError(f"unknown app_tag {sp_doc.get('app_tag')!r}")
    space = DecisionSpace(
        n_options=int(sp_doc["n_options"]),
        ineq=tuple((np.asarray(c, dtype=float), float(r)) for c, r in sp_doc.get("ineq", [])),
        eq=tuple((np.asarray(c, dtype=float), float(r)) for c, r in sp_doc.get("eq", [])),
        fixed_ones=frozenset(int(j) for j in sp_doc.get("fixed_ones", [])),
        app_tag=sp_doc["app_tag"],
        groups=tuple(tuple(g) for g in (sp_doc.get("groups") or ())),
    )
    u = _matrix_from_json(scen_doc["u"])
    r = _matrix_from_json(scen_doc["r"])
    if int(scen_doc.get("n", u.shape[0])) != u.shape[0]:
        raise InstanceFileError("scenario count disagrees with the matrices")
    if u.ndim != 2 or u.shape[1] > 1:
        sorted_u = np.sort(u, axis=1)
        if u.shape[1] > 1 and np.any(np.diff(sorted_u, axis=1) == 0.0):
            raise InstanceFileError("tied utilities within a scenario row; "
                                    "instances are stored after tie repair")
    inst = Instance(space=space, scenarios=ScenarioSet(u=u, r=r),
                    provenance=doc.get("provenance", {}))
    return inst


def save_instance(inst: Instance, path, compact: bool = None):
    with open(path, "w") as fh:
        json.dump(instance_to_json(inst, compact=compact), fh)


def load_instance(path) -> Instance:
    with open(path) as fh:
        doc = json.load(fh)
    return instance_from_json(doc)
