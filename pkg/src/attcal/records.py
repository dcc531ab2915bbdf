"""CSV/JSON record files exchanged between ``simulate`` and ``fit``."""

import csv
import io
import json
from pathlib import Path

import numpy as np

from .synth import JOULE, PSD_KINDS, IqRecord, PsdTrace, TransientTrace
from .units import dbm_to_watts, watts_to_dbm

PSD_COLUMNS = (
    "drive_power_dbm_or_w", "kind", "f_sig_hz", "f_det_hz",
    "added_psd_w_per_hz", "rbw_hz", "span_hz", "n_averages",
)
TRANSIENT_COLUMNS = ("time_s", "temperature_k", "pulse_on")
IQ_COLUMNS = ("i", "q")
THERMOMETRY_COLUMNS = ("joule_power_w", "temperature_k")


class SchemaError(ValueError):
    """A record file does not follow its schema; the message names file, row and column."""

    def __init__(self, path, message, row=None, column=None):
        where = str(path)
        if row is not None:
            where += f", row {row}"
        if column is not None:
            where += f", column {column!r}"
        super().__init__(f"{where}: {message}")
        self.path, self.row, self.column = path, row, column


def fmt(x):
    """Shortest text that parses back to the same float."""
    return repr(float(x))


def _write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _read_rows(path, header):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(path, "file not found") from None
    except UnicodeDecodeError as exc:
        raise SchemaError(path, f"not UTF-8 text ({exc.reason})") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(path, "file is empty; expected header " + ",".join(header))
    if tuple(rows[0]) != tuple(header):
        raise SchemaError(path, f"header {rows[0]} does not match expected {list(header)}", row=1)
    body = rows[1:]
    if not body:
        raise SchemaError(path, "no data rows")
    for k, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise SchemaError(path, f"expected {len(header)} fields, found {len(row)}", row=k)
    return body


def _num(path, row, column, text, kind=float, allow_empty=False):
    if text == "" and allow_empty:
        return None
    try:
        value = kind(text)
    except ValueError:
        raise SchemaError(path, f"cannot parse {text!r} as {kind.__name__}", row, column) from None
    if kind is float and not np.isfinite(value):
        raise SchemaError(path, f"non-finite value {text!r}", row, column)
    return value


def write_psd(path, traces):
    rows = []
    for tr in traces:
        for d, p in zip(tr.drive, tr.added_psd):
            rows.append([
                fmt(d), tr.kind, "" if tr.f_sig is None else fmt(tr.f_sig), fmt(tr.f_det),
                fmt(p), fmt(tr.rbw), fmt(tr.span), str(int(tr.n_averages)),
            ])
    _write_rows(path, PSD_COLUMNS, rows)


def read_psd(path):
    """Traces in file order, one per contiguous (kind, f_sig, f_det) block."""
    body = _read_rows(path, PSD_COLUMNS)
    groups = {}
    for k, row in enumerate(body, start=2):
        drive = _num(path, k, PSD_COLUMNS[0], row[0])
        kind = row[1]
        if kind not in PSD_KINDS:
            raise SchemaError(path, f"kind {kind!r} not one of {PSD_KINDS}", k, "kind")
        f_sig = _num(path, k, "f_sig_hz", row[2], allow_empty=True)
        if kind != JOULE and f_sig is None:
            raise SchemaError(path, f"{kind} row needs f_sig_hz", k, "f_sig_hz")
        f_det = _num(path, k, "f_det_hz", row[3])
        psd = _num(path, k, "added_psd_w_per_hz", row[4])
        rbw = _num(path, k, "rbw_hz", row[5])
        span = _num(path, k, "span_hz", row[6])
        n_avg = _num(path, k, "n_averages", row[7], kind=int)
        if kind == JOULE and drive < 0:
            raise SchemaError(path, "Joule power must be non-negative watts", k, PSD_COLUMNS[0])
        key = (kind, f_sig, f_det)
        g = groups.setdefault(key, {"drive": [], "psd": [], "meta": (rbw, span, n_avg), "row": k})
        if g["meta"] != (rbw, span, n_avg):
            raise SchemaError(path, "acquisition settings change within one trace", k)
        g["drive"].append(drive)
        g["psd"].append(psd)
    traces = []
    for (kind, f_sig, f_det), g in groups.items():
        drive = np.array(g["drive"])
        if np.any(np.diff(drive) < 0):
            raise SchemaError(path, f"{kind} trace at f_sig={f_sig} is not sorted by drive", g["row"])
        rbw, span, n_avg = g["meta"]
        try:
            traces.append(PsdTrace(kind, drive, np.array(g["psd"]), f_det, f_sig, rbw, span, n_avg))
        except ValueError as exc:
            raise SchemaError(path, str(exc), g["row"]) from None
    return traces


def write_transient(path, trace):
    t_on, t_off = trace.pulse_window
    rows = [[fmt(t), fmt(v), "1" if t_on <= t < t_off else "0"] for t, v in zip(trace.time, trace.value)]
    _write_rows(path, TRANSIENT_COLUMNS, rows)


def read_transient(path):
    body = _read_rows(path, TRANSIENT_COLUMNS)
    t = np.array([_num(path, k, "time_s", r[0]) for k, r in enumerate(body, 2)])
    v = np.array([_num(path, k, "temperature_k", r[1]) for k, r in enumerate(body, 2)])
    on = []
    for k, r in enumerate(body, 2):
        if r[2] not in ("0", "1"):
            raise SchemaError(path, f"pulse_on must be 0 or 1, got {r[2]!r}", k, "pulse_on")
        on.append(r[2] == "1")
    on = np.array(on)
    idx = np.nonzero(on)[0]
    if idx.size == 0:
        raise SchemaError(path, "no sample has pulse_on = 1")
    first, last = idx[0], idx[-1]
    if not np.all(on[first:last + 1]):
        raise SchemaError(path, "pulse_on must form a single contiguous block", int(first) + 2, "pulse_on")
    if last + 1 >= t.size:
        raise SchemaError(path, "trace ends before the pulse switches off", int(last) + 2, "pulse_on")
    try:
        return TransientTrace(t, v, (float(t[first]), float(t[last + 1])))
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def write_iq(path, meta_path, records):
    rows = [[fmt(i), fmt(q)] for rec in records for i, q in rec.samples]
    _write_rows(path, IQ_COLUMNS, rows)
    meta = {"records": [
        {
            "t_int_s": float(rec.t_int),
            "f_sig_hz": float(rec.f_sig),
            "p_sig_dbm": float(watts_to_dbm(rec.p_sig)),
            "digitizer_scale": float(rec.digitizer_scale),
            "n_samples": int(rec.samples.shape[0]),
        }
        for rec in records
    ]}
    write_json(meta_path, meta)


_IQ_META_KEYS = {"t_int_s", "f_sig_hz", "p_sig_dbm", "digitizer_scale", "n_samples"}


def read_iq(path, meta_path):
    body = _read_rows(path, IQ_COLUMNS)
    samples = np.array([[_num(path, k, c, x) for c, x in zip(IQ_COLUMNS, r)] for k, r in enumerate(body, 2)])
    meta = read_json(meta_path)
    entries = meta.get("records") if isinstance(meta, dict) else None
    if not isinstance(entries, list) or not entries:
        raise SchemaError(meta_path, "expected an object with a non-empty 'records' list")
    records, start = [], 0
    for k, m in enumerate(entries):
        if not isinstance(m, dict) or set(m) != _IQ_META_KEYS:
            raise SchemaError(meta_path, f"record {k} must have exactly the keys {sorted(_IQ_META_KEYS)}")
        n = int(m["n_samples"])
        block = samples[start:start + n]
        if block.shape[0] != n:
            raise SchemaError(path, f"record {k} needs {n} rows but the file ends early")
        try:
            records.append(IqRecord(
                block, float(m["t_int_s"]), float(m["f_sig_hz"]),
                float(dbm_to_watts(m["p_sig_dbm"])), float(m["digitizer_scale"]),
            ))
        except ValueError as exc:
            raise SchemaError(meta_path, f"record {k}: {exc}") from None
        start += n
    if start != samples.shape[0]:
        raise SchemaError(path, f"{samples.shape[0] - start} rows not claimed by any sidecar record")
    return records


def write_thermometry(path, power, temperature):
    _write_rows(path, THERMOMETRY_COLUMNS, [[fmt(p), fmt(t)] for p, t in zip(power, temperature)])


def read_thermometry(path):
    body = _read_rows(path, THERMOMETRY_COLUMNS)
    p = np.array([_num(path, k, "joule_power_w", r[0]) for k, r in enumerate(body, 2)])
    t = np.array([_num(path, k, "temperature_k", r[1]) for k, r in enumerate(body, 2)])
    return p, t


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(path, "file not found") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"invalid JSON: {exc.msg}", row=exc.lineno) from None
