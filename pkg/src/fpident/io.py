"""File formats: path/control CSVs, JSON configs, manifests and model documents.

Floats are written with 17 significant digits so every CSV round-trips
exactly and reruns with the same seed produce byte-identical files.  Model
documents embed arrays as base64 little-endian float64/int64 blobs.
"""

import base64
import csv
import gzip
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .controls import ControlSpec
from .data import PathDataset
from .density import DensityEvaluation, fit_density
from .fp import FPTrainingSet, model_from_dual
from .kernels import GaussianKernelParams

FORMAT_VERSION = 1


class DataFormatError(ValueError):
    """Malformed input file; the message names the file and the offending cell."""


def _fmt(v):
    return format(float(v), ".17g")


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


# --- path datasets ----------------------------------------------------------------

def _open_text(path, mode):
    """Open plain or gzip text; gzip members carry a zero mtime so reruns are byte-identical."""
    path = Path(path)
    if path.suffix == ".gz":
        raw = open(path, mode + "b")
        if mode == "w":
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0, compresslevel=1)
        else:
            gz = gzip.GzipFile(fileobj=raw, mode="rb")
        return _Closing(io.TextIOWrapper(gz, newline=""), raw)
    return open(path, mode, newline="")


class _Closing:
    def __init__(self, fh, raw):
        self.fh, self.raw = fh, raw

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.close()
        self.raw.close()


_ROWS_PER_CHUNK = 50_000


def write_paths_csv(path, datasets, control_ids=None):
    """Long format ``path_id,time,x1..xn[,control_id]``; a ``.gz`` suffix compresses.

    ``datasets`` is one :class:`PathDataset` or a list aligned with ``control_ids``.
    """
    single = isinstance(datasets, PathDataset)
    datasets = [datasets] if single else list(datasets)
    if control_ids is None and not single:
        control_ids = list(range(len(datasets)))
    n = datasets[0].n
    header = ["path_id", "time"] + [f"x{i + 1}" for i in range(n)]
    if control_ids is not None:
        header.append("control_id")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    row_fmt = "%d" + ",%.17g" * (1 + n)
    with _open_text(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for c, d in enumerate(datasets):
            line = row_fmt + ("" if control_ids is None else "," + str(control_ids[c]).replace("%", "%%"))
            Q, M = d.Q, d.M
            cols = np.empty((Q * M, 2 + n), dtype=object)
            cols[:, 0] = np.repeat(np.arange(Q), M)
            cols[:, 1] = np.tile(d.times, Q)
            cols[:, 2:] = d.paths.reshape(Q * M, n)
            for lo in range(0, Q * M, _ROWS_PER_CHUNK):
                block = cols[lo:lo + _ROWS_PER_CHUNK]
                fh.write(((line + "\n") * block.shape[0]) % tuple(block.ravel().tolist()))


def read_paths_csv(path):
    """Inverse of :func:`write_paths_csv`: a dataset, or ``{control_id: dataset}``."""
    path = Path(path)
    with _open_text(path, "r") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
        if header == [""]:
            raise DataFormatError(f"{path}: empty file")
        if header[:2] != ["path_id", "time"]:
            raise DataFormatError(f"{path}: header must start with path_id,time")
        has_ctrl = header[-1] == "control_id"
        xcols = header[2:len(header) - has_ctrl]
        if not xcols or xcols != [f"x{i + 1}" for i in range(len(xcols))]:
            raise DataFormatError(f"{path}: state columns must be x1..xn, got {xcols}")
        body = fh.read()
    if not body.strip():
        raise DataFormatError(f"{path}: no data rows")
    table, keys = _parse_rows(path, body, len(header), has_ctrl)
    if has_ctrl:
        groups = {key: table[keys == key] for key in dict.fromkeys(keys)}
    else:
        groups = {None: table}
    out = {}
    for key, rows in groups.items():
        pid = rows[:, 0]
        if np.any(pid != np.round(pid)):
            raise DataFormatError(f"{path}: non-integer path_id (control {key})")
        ids = np.unique(pid)
        order = np.argsort(pid, kind="stable")
        rows = rows[order]
        counts = np.bincount(np.searchsorted(ids, rows[:, 0]))
        if np.any(counts != counts[0]):
            raise DataFormatError(f"{path}: paths of control {key} have different lengths")
        arr = rows.reshape(ids.size, counts[0], -1)
        times = arr[0, :, 1]
        if not np.all(arr[:, :, 1] == times[None, :]):
            bad = int(ids[np.argmax(np.any(arr[:, :, 1] != times[None, :], axis=1))])
            raise DataFormatError(f"{path}: path {bad} (control {key}) is on a different time grid")
        try:
            out[key] = PathDataset(times, arr[:, :, 2:], {"source": str(path)})
        except ValueError as exc:
            raise DataFormatError(f"{path}: control {key}: {exc}") from exc
    if not out:
        raise DataFormatError(f"{path}: no data rows")
    if not has_ctrl:
        return out[None]
    return {_ctrl_key(k): v for k, v in sorted(out.items(), key=lambda kv: _ctrl_key(kv[0]))}


def _parse_rows(path, body, ncols, has_ctrl):
    """Numeric table of the data rows plus the control-id column (or ``None``)."""
    lines = body.splitlines()
    nnum = ncols - has_ctrl
    keys = None
    try:
        if has_ctrl:
            split = [ln.rsplit(",", 1) for ln in lines]
            keys = np.array([p[1] if len(p) == 2 else None for p in split], dtype=object)
            num = "\n".join(p[0] for p in split)
        else:
            num = body
        table = np.loadtxt(io.StringIO(num), delimiter=",", ndmin=2)
        if table.shape != (len(lines), nnum):
            raise ValueError("ragged rows")
        if keys is not None and any(k is None for k in keys):
            raise ValueError("missing control_id")
    except ValueError:
        # slow path, only to name the offending line
        for lineno, ln in enumerate(lines, start=2):
            cells = ln.split(",")
            if len(cells) != ncols:
                raise DataFormatError(f"{path}: line {lineno}: expected {ncols} cells, "
                                      f"got {len(cells)}") from None
            for col, v in enumerate(cells[:nnum]):
                try:
                    float(v)
                except ValueError:
                    raise DataFormatError(f"{path}: line {lineno} column {col + 1}: "
                                          f"not a number: {v!r}") from None
        raise DataFormatError(f"{path}: unparseable data") from None
    return table, keys


def _ctrl_key(k):
    try:
        return int(k)
    except ValueError:
        return k


# --- controls ----------------------------------------------------------------------

def write_controls_csv(path, controls, ids=None):
    ids = list(range(len(controls))) if ids is None else list(ids)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["control_id", "family", "p1", "p2", "p3"])
        for cid, u in zip(ids, controls):
            ps = [_fmt(p) for p in u.params] + [""] * (3 - len(u.params))
            w.writerow([cid, u.family] + ps)


def read_controls_csv(path):
    out = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["control_id", "family", "p1", "p2", "p3"]:
            raise DataFormatError(f"{path}: bad header {header}")
        for lineno, row in enumerate(r, start=2):
            try:
                params = [float(p) for p in row[2:] if p != ""]
                out[_ctrl_key(row[0])] = ControlSpec(row[1], tuple(params))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


# --- arrays and models -------------------------------------------------------------

def encode_array(a):
    a = np.asarray(a)
    dt = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    a = np.ascontiguousarray(a, dtype=dt)
    return {"dtype": dt, "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode()}


def decode_array(doc):
    try:
        raw = base64.b64decode(doc["data"])
        return np.frombuffer(raw, dtype=doc["dtype"]).reshape(doc["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"bad array document: {exc}") from exc


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def density_model_doc(model, data_ref=None):
    """Hyperparameters plus either the embedded training paths or, with
    ``data_ref = {"file", "control_id", "sha256"}``, a reference to a path CSV."""
    doc = {"type": "DensityModel", "version": FORMAT_VERSION, "nu": model.nu, "mu": model.mu}
    if data_ref is None:
        doc["times"] = encode_array(model.train.times)
        doc["paths"] = encode_array(model.train.paths)
    else:
        doc["data"] = dict(data_ref)
    return doc


def density_model_from_doc(doc, base_dir=".", _cache=None):
    if doc.get("type") != "DensityModel":
        raise DataFormatError(f"expected a DensityModel document, got {doc.get('type')!r}")
    if "data" in doc:
        ref = doc["data"]
        path = Path(base_dir) / ref["file"]
        if not path.exists():
            raise DataFormatError(f"density model references missing data file {path}")
        cache = {} if _cache is None else _cache
        if path not in cache:
            if file_sha256(path) != ref["sha256"]:
                raise DataFormatError(f"{path} changed since the density model was fitted")
            cache[path] = read_paths_csv(path)
        data = cache[path]
        if ref.get("control_id") is not None:
            data = data[ref["control_id"]]
    else:
        data = PathDataset(decode_array(doc["times"]), decode_array(doc["paths"]))
    return fit_density(data, doc["nu"], doc["mu"])


def fp_model_doc(model):
    tr = model.train
    doc = {"type": "FPModel", "version": FORMAT_VERSION, "lambda": model.lam,
           "gamma": model.kparams.gamma, "n": tr.n, "kappa": model.kappa,
           "points": encode_array(tr.points), "P": encode_array(tr.dens.P),
           "Pi": encode_array(tr.dens.Pi), "Pij": encode_array(tr.dens.Pij),
           "dhat": encode_array(tr.dens.dhat), "constraint_idx": encode_array(tr.constraint_idx),
           "gamma_dual": encode_array(model.gamma_dual),
           "anchors": None if model.anchors is None else encode_array(model.anchors),
           "info": {k: v for k, v in model.info.items()
                    if isinstance(v, (int, float, str)) and not k.endswith("_time")}}
    if tr.source is not None:
        doc["source"] = encode_array(tr.source)
    return doc


def fp_model_from_doc(doc):
    if doc.get("type") != "FPModel":
        raise DataFormatError(f"expected an FPModel document, got {doc.get('type')!r}")
    dens = DensityEvaluation(decode_array(doc["P"]), decode_array(doc["Pi"]),
                             decode_array(doc["Pij"]), decode_array(doc["dhat"]))
    src = decode_array(doc["source"]) if "source" in doc else None
    train = FPTrainingSet(decode_array(doc["points"]), dens, int(doc["n"]),
                          decode_array(doc["constraint_idx"]), src)
    anchors = None if doc.get("anchors") is None else decode_array(doc["anchors"])
    return model_from_dual(train, doc["lambda"], GaussianKernelParams(doc["gamma"]),
                           decode_array(doc["gamma_dual"]), anchors, doc.get("kappa", 0.0))


def ensure_writable_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PermissionError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path
