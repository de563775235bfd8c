"""Model files, CSV tables with manifest headers, and JSON records."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .graph_models import (ModelError, RgsModel, build_er_psi, build_sbm_model,
                           five_community_sbm, uniform_stubborn_model)


def _block_matrix(spec: dict, rows: int, cols: int, symmetric: bool) -> np.ndarray:
    rs = spec.get("row_sizes", spec.get("sizes"))
    cs = spec.get("col_sizes", rs)
    pi = np.asarray(spec["pi"], dtype=np.float64)
    if sum(rs) != rows or sum(cs) != cols or pi.shape != (len(rs), len(cs)):
        raise ModelError("block spec sizes do not match the model dimensions")
    out = pi[np.ix_(np.repeat(np.arange(len(rs)), rs), np.repeat(np.arange(len(cs)), cs))]
    if symmetric:
        np.fill_diagonal(out, 0.0)
    return out


def _matrix(spec: Any, rows: int, cols: int, symmetric: bool) -> np.ndarray:
    if isinstance(spec, (int, float)):
        if symmetric:
            return build_er_psi(rows, float(spec))
        return np.full((rows, cols), float(spec))
    if isinstance(spec, dict):
        return _block_matrix(spec, rows, cols, symmetric)
    a = np.asarray(spec, dtype=np.float64)
    return a.reshape(rows, cols)


def model_from_spec(spec: dict) -> RgsModel:
    """Build a model from a JSON-style mapping.

    Accepted forms:

    * ``{n_r, n_s, psi_r, psi_s, description}`` where each psi is a dense
      nested list, a scalar probability, or a block spec
      ``{"sizes": [...], "pi": [[...]]}`` (``row_sizes``/``col_sizes`` for
      ``psi_s``);
    * SBM shorthand ``{sizes, pi, stubborn_flags}``;
    * generators ``{"uniform": {n, c_s, psi?}}`` and
      ``{"five_community": {gamma, c21, c22, ...}}``.
    """
    if "uniform" in spec:
        u = spec["uniform"]
        return uniform_stubborn_model(int(u["n"]), float(u["c_s"]), u.get("psi"))
    if "five_community" in spec:
        return five_community_sbm(**spec["five_community"])
    if "sizes" in spec:
        return build_sbm_model(spec["sizes"], spec["pi"], spec["stubborn_flags"],
                               spec.get("description", ""))
    n_r, n_s = int(spec["n_r"]), int(spec["n_s"])
    psi_r = _matrix(spec["psi_r"], n_r, n_r, True)
    psi_s = _matrix(spec.get("psi_s", []), n_r, n_s, False) if n_s else np.zeros((n_r, 0))
    if "psi_ss" in spec and np.any(np.asarray(spec["psi_ss"], dtype=float) != 0):
        raise ModelError("stubborn-stubborn link probabilities must be zero")
    return RgsModel(psi_r, psi_s, description=spec.get("description", ""))


def load_model(path_or_spec: str | Path | dict) -> RgsModel:
    if isinstance(path_or_spec, dict):
        return model_from_spec(path_or_spec)
    return model_from_spec(json.loads(Path(path_or_spec).read_text()))


def model_to_spec(model: RgsModel) -> dict:
    return {"n_r": model.n_r, "n_s": model.n_s, "psi_r": model.psi_r.tolist(),
            "psi_s": model.psi_s.tolist(), "description": model.description}


def jsonable(v: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def manifest_hash(manifest: dict) -> str:
    canon = json.dumps(jsonable(manifest), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]], mhash: str | None = None) -> str:
    buf = io.StringIO()
    if mhash is not None:
        buf.write(f"# manifest-hash={mhash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
