"""Input parsing, batch analysis over bins and report emission.

Input is a UTF-8 JSON document. The top level is either a list of bins or
an object ``{"bins": [...], "observables": [...], "options": {...},
"reference_label": "..."}``. Each bin carries

    label          optional unique name (defaults to the kinematic range)
    basis          "helicity" or "beam"
    mtt_gev        [lo, hi]
    abs_cos_theta  [lo, hi]
    coefficients   15 numbers: P1..P3, Pbar1..Pbar3, C11, C12, ..., C33
    covariance     225 numbers row-major, or a 15x15 nested list
    reference      optional {observable: value}

Structured output repeats every input field, so it parses back into the
same request.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Sequence

import numpy as np

from .errors import SchemaError, TtqiError
from .fano import BinKinematics, SpinBasis
from .inference import (
    N_COEFF,
    STANDARD_OBSERVABLES,
    MeasurementRecord,
    ScanOptions,
    ScanResult,
    scan_observable,
    standard_observable,
)
from .observables import DiscordOptions, QuadratureSpec

FORMATS = ("table-text", "csv", "structured", "plot-data")
SIGNIFICANCE_CUTOFF = 3.0
SIGNIFICANCE_SATURATION = 5.0
ASYMMETRY_RTOL = 1e-8
NEGATIVE_EIG_RTOL = 1e-10


class CovarianceSymmetrizedWarning(UserWarning):
    """An input covariance was noticeably asymmetric and has been symmetrized."""


@dataclass(frozen=True)
class AnalysisOptions:
    discord: DiscordOptions = field(default_factory=DiscordOptions)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    scan: ScanOptions = field(default_factory=ScanOptions)


@dataclass(frozen=True)
class AnalysisRequest:
    records: tuple[MeasurementRecord, ...]
    observables: tuple[str, ...] = STANDARD_OBSERVABLES
    options: AnalysisOptions = field(default_factory=AnalysisOptions)
    reference_values: tuple[dict[str, float], ...] = ()
    reference_label: str = "reference"
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.records:
            raise SchemaError("request needs at least one bin")
        if not self.observables:
            raise SchemaError("request needs at least one observable")
        for name in self.observables:
            if name not in STANDARD_OBSERVABLES:
                raise SchemaError(
                    f"unknown observable {name!r}; expected one of {', '.join(STANDARD_OBSERVABLES)}",
                    "observables",
                )
        refs = tuple(self.reference_values) or tuple({} for _ in self.records)
        if len(refs) != len(self.records):
            raise SchemaError("reference_values must have one entry per bin")
        object.__setattr__(self, "reference_values", refs)
        object.__setattr__(self, "observables", tuple(self.observables))

    def record(self, label: str) -> MeasurementRecord:
        for r in self.records:
            if r.label == label:
                return r
        known = ", ".join(r.label for r in self.records)
        raise SchemaError(f"no bin labelled {label!r}; known bins: {known}")


@dataclass(frozen=True)
class ObservableSummary:
    """Scan outcome for one observable in one bin."""

    name: str
    central: float
    ci_low: float
    ci_high: float
    at_boundary_low: bool = False
    at_boundary_high: bool = False
    significance: float = 0.0
    significance_side: str = "above"
    threshold: float | None = None
    threshold_unattainable: bool = False
    reference: float | None = None

    @property
    def err_low(self) -> float:
        return self.central - self.ci_low

    @property
    def err_high(self) -> float:
        return self.ci_high - self.central

    @classmethod
    def from_scan(cls, res: ScanResult, reference: float | None = None) -> "ObservableSummary":
        return cls(
            res.observable_name,
            res.central,
            res.ci68_low,
            res.ci68_high,
            res.at_boundary_low,
            res.at_boundary_high,
            res.significance,
            res.significance_side,
            res.threshold,
            res.threshold_unattainable,
            reference,
        )


@dataclass(frozen=True)
class BinReportRow:
    label: str
    bin: BinKinematics
    basis: SpinBasis
    entries: tuple[ObservableSummary, ...]
    record: MeasurementRecord | None = None
    reference_label: str = "reference"

    def entry(self, name: str) -> ObservableSummary:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


# -- parsing ---------------------------------------------------------------------


def _read_text(source) -> tuple[str, str]:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8"), str(source)
    if isinstance(source, str):
        if source.lstrip().startswith(("{", "[")):
            return source, "<string>"
        return Path(source).read_text(encoding="utf-8"), source
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return text, getattr(source, "name", "<stream>")


def _numbers(value, path: str, count: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"expected numbers ({exc})", path) from None
    if count is not None and arr.size != count:
        raise SchemaError(f"expected {count} numbers, got {arr.size}", path)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("numbers must be finite", path)
    return arr


def _pair(value, path: str) -> tuple[float, float]:
    arr = _numbers(value, path, 2).ravel()
    return float(arr[0]), float(arr[1])


def _covariance(value, path: str, warn: list[str]) -> np.ndarray:
    arr = _numbers(value, path)
    if arr.size != N_COEFF * N_COEFF:
        side = math.isqrt(arr.size)
        shape = f"{side}x{side}" if side * side == arr.size else f"{arr.size} numbers"
        raise SchemaError(
            f"covariance block must be 15x15 (225 numbers), got {shape}", path
        )
    U = arr.reshape(N_COEFF, N_COEFF)
    scale = float(np.max(np.abs(U)))
    asym = float(np.max(np.abs(U - U.T)))
    if scale > 0.0 and asym > ASYMMETRY_RTOL * scale:
        msg = f"{path}: covariance asymmetric by {asym / scale:.3g} (relative); symmetrized"
        warnings.warn(msg, CovarianceSymmetrizedWarning, stacklevel=3)
        warn.append(msg)
    U = 0.5 * (U + U.T)
    lam = np.linalg.eigvalsh(U)
    if lam[-1] <= 0.0:
        raise SchemaError("covariance has no positive eigenvalue", path)
    if lam[0] < -NEGATIVE_EIG_RTOL * lam[-1]:
        raise SchemaError(
            f"covariance eigenvalue {lam[0]:.3g} below -1e-10 x largest ({lam[-1]:.3g})", path
        )
    return U


def _default_label(b: BinKinematics) -> str:
    (lo, hi), (clo, chi) = b.mtt_range, b.abs_costheta_range
    return f"mtt[{lo:g},{hi:g}]_cos[{clo:g},{chi:g}]"


def _options(raw: dict, path: str) -> AnalysisOptions:
    if not isinstance(raw, dict):
        raise SchemaError("options must be an object", path)
    known = {"n_points", "n_sigma", "n_seeds", "polar_order", "azimuthal_order"}
    extra = set(raw) - known
    if extra:
        raise SchemaError(f"unknown option(s) {sorted(extra)}", path)
    try:
        scan = ScanOptions(
            n_points=int(raw.get("n_points", 201)), n_sigma=float(raw.get("n_sigma", 5.0))
        )
        disc = DiscordOptions(n_seeds=int(raw.get("n_seeds", 64)))
        quad = QuadratureSpec(
            int(raw.get("polar_order", 64)), int(raw.get("azimuthal_order", 128))
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), path) from None
    return AnalysisOptions(disc, quad, scan)


def parse_input(source: str | Path | IO) -> AnalysisRequest:
    """Read and validate an analysis request (path, JSON text or stream)."""
    text, name = _read_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, name, f"line {exc.lineno} column {exc.colno}") from None

    top: dict[str, Any] = {"bins": doc} if isinstance(doc, list) else doc
    if not isinstance(top, dict):
        raise SchemaError("top level must be a list of bins or an object", name)
    bins = top.get("bins")
    if not isinstance(bins, list) or not bins:
        raise SchemaError("expected a non-empty list of bins", "bins")

    records, refs, warn = [], [], []
    seen: set[str] = set()
    for i, b in enumerate(bins):
        path = f"bins[{i}]"
        if not isinstance(b, dict):
            raise SchemaError("bin must be an object", path)
        for key in ("basis", "mtt_gev", "abs_cos_theta", "coefficients", "covariance"):
            if key not in b:
                raise SchemaError(f"missing field {key!r}", path)
        try:
            basis = SpinBasis.from_name(b["basis"])
            kin = BinKinematics(
                _pair(b["mtt_gev"], f"{path}.mtt_gev"),
                _pair(b["abs_cos_theta"], f"{path}.abs_cos_theta"),
            )
        except SchemaError:
            raise
        except TtqiError as exc:
            raise SchemaError(str(exc), path) from None
        coeffs = _numbers(b["coefficients"], f"{path}.coefficients", N_COEFF).ravel()
        U = _covariance(b["covariance"], f"{path}.covariance", warn)
        label = str(b.get("label") or _default_label(kin))
        if label in seen:
            raise SchemaError(f"duplicate bin label {label!r}", f"{path}.label")
        seen.add(label)
        try:
            records.append(MeasurementRecord(coeffs, U, kin, basis, label))
        except TtqiError as exc:
            raise SchemaError(str(exc), path) from None
        ref = b.get("reference", {}) or {}
        if not isinstance(ref, dict):
            raise SchemaError("reference must map observable names to numbers", f"{path}.reference")
        try:
            refs.append({str(k): float(v) for k, v in ref.items()})
        except (TypeError, ValueError):
            raise SchemaError("reference values must be numbers", f"{path}.reference") from None

    observables = top.get("observables", list(STANDARD_OBSERVABLES))
    if isinstance(observables, str):
        observables = [s.strip() for s in observables.split(",") if s.strip()]
    options = _options(top.get("options", {}), "options")
    return AnalysisRequest(
        tuple(records),
        tuple(observables),
        options,
        tuple(refs),
        str(top.get("reference_label", "reference")),
        tuple(warn),
    )


# -- batch analysis ----------------------------------------------------------------


def _with_label(exc: Exception, label: str) -> Exception:
    new = copy.copy(exc)
    new.args = (f"bin {label}: {exc}",) + tuple(exc.args[1:])
    new.bin_label = label
    return new


def _analyse_bin(request: AnalysisRequest, index: int) -> BinReportRow:
    record = request.records[index]
    refs = request.reference_values[index]
    opts = request.options
    entries = []
    for name in request.observables:
        obs = standard_observable(name, opts.discord, opts.quadrature)
        try:
            res = scan_observable(record, obs, options=opts.scan)
        except TtqiError as exc:
            raise _with_label(exc, record.label) from exc
        entries.append(ObservableSummary.from_scan(res, refs.get(name)))
    return BinReportRow(
        record.label, record.bin, record.basis, tuple(entries), record, request.reference_label
    )


def run_analysis(request: AnalysisRequest, threads: int = 1) -> list[BinReportRow]:
    """Scan every requested observable in every bin; rows keep input order."""
    idx = range(len(request.records))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: _analyse_bin(request, i), idx))
    return [_analyse_bin(request, i) for i in idx]


# -- formatting --------------------------------------------------------------------


def _decimals(err_low: float, err_high: float, central: float) -> int:
    # two significant digits on the larger error
    err = max(abs(err_low), abs(err_high))
    if err > 0.0 and math.isfinite(err):
        return max(0, 1 - math.floor(math.log10(err)))
    if central != 0.0 and math.isfinite(central):
        return max(0, 3 - math.floor(math.log10(abs(central))))
    return 3


def format_significance(sig: float) -> str:
    """Bracketed significance, empty below 3.0 sigma, saturated above 5."""
    if not sig >= SIGNIFICANCE_CUTOFF:
        return ""
    if sig > SIGNIFICANCE_SATURATION:
        return "[>5σ]"
    return f"[{sig:.1f}σ]"


def format_entry(e: ObservableSummary) -> str:
    """Central value with asymmetric errors, e.g. ``8.55_{-0.65}^{+0.65}[3.6σ]``."""
    d = _decimals(e.err_low, e.err_high, e.central)
    sig = format_significance(e.significance) if e.significance_side == "above" else ""
    return f"{e.central:.{d}f}_{{-{e.err_low:.{d}f}}}^{{+{e.err_high:.{d}f}}}{sig}"


def _bin_text(row: BinReportRow) -> str:
    (lo, hi), (clo, chi) = row.bin.mtt_range, row.bin.abs_costheta_range
    return f"[{lo:g}, {hi:g}] x [{clo:g}, {chi:g}]"


def _table_text(rows: Sequence[BinReportRow]) -> str:
    names = [e.name for e in rows[0].entries]
    header = ["bin (mtt GeV x |cos|)", "basis"] + names
    body = []
    for row in rows:
        cells = [_bin_text(row), row.basis.kind.value]
        for name in names:
            e = row.entry(name)
            cell = format_entry(e)
            if e.reference is not None:
                cell += f" ({row.reference_label} {e.reference:.4g})"
            cells.append(cell)
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    return "\n".join(lines) + "\n"


_CSV_FIELDS = (
    "label",
    "basis",
    "mtt_lo",
    "mtt_hi",
    "abs_cos_lo",
    "abs_cos_hi",
    "observable",
    "central",
    "ci_low",
    "ci_high",
    "err_low",
    "err_high",
    "at_boundary_low",
    "at_boundary_high",
    "threshold",
    "significance",
    "significance_side",
    "threshold_unattainable",
    "reference",
)


def _csv(rows: Sequence[BinReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for row in rows:
        (lo, hi), (clo, chi) = row.bin.mtt_range, row.bin.abs_costheta_range
        for e in row.entries:
            w.writerow(
                [
                    row.label,
                    row.basis.kind.value,
                    repr(lo),
                    repr(hi),
                    repr(clo),
                    repr(chi),
                    e.name,
                    repr(e.central),
                    repr(e.ci_low),
                    repr(e.ci_high),
                    repr(e.err_low),
                    repr(e.err_high),
                    e.at_boundary_low,
                    e.at_boundary_high,
                    "" if e.threshold is None else repr(e.threshold),
                    repr(e.significance),
                    e.significance_side,
                    e.threshold_unattainable,
                    "" if e.reference is None else repr(e.reference),
                ]
            )
    return buf.getvalue()


def _structured(rows: Sequence[BinReportRow]) -> str:
    bins = []
    for row in rows:
        b: dict[str, Any] = {
            "label": row.label,
            "basis": row.basis.kind.value,
            "mtt_gev": list(row.bin.mtt_range),
            "abs_cos_theta": list(row.bin.abs_costheta_range),
        }
        if row.record is not None:
            b["coefficients"] = row.record.observed.tolist()
            b["covariance"] = row.record.covariance.ravel().tolist()
        refs = {e.name: e.reference for e in row.entries if e.reference is not None}
        if refs:
            b["reference"] = refs
        b["results"] = {
            e.name: {
                "central": e.central,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
                "at_boundary_low": e.at_boundary_low,
                "at_boundary_high": e.at_boundary_high,
                "threshold": e.threshold,
                "significance": e.significance,
                "significance_side": e.significance_side,
                "threshold_unattainable": e.threshold_unattainable,
            }
            for e in row.entries
        }
        bins.append(b)
    doc = {
        "observables": [e.name for e in rows[0].entries],
        "reference_label": rows[0].reference_label,
        "bins": bins,
    }
    return json.dumps(doc, indent=1) + "\n"


def _plot_data(rows: Sequence[BinReportRow]) -> str:
    lines = ["# observable label x_mtt x_abs_cos central err_low err_high reference"]
    for name in [e.name for e in rows[0].entries]:
        for row in rows:
            e = row.entry(name)
            x, y = row.bin.midpoint
            ref = "nan" if e.reference is None else repr(e.reference)
            lines.append(
                f"{name} {row.label} {x!r} {y!r} {e.central!r} {e.err_low!r} {e.err_high!r} {ref}"
            )
    return "\n".join(lines) + "\n"


_EMITTERS = {
    "table-text": _table_text,
    "csv": _csv,
    "structured": _structured,
    "plot-data": _plot_data,
}


def emit_report(rows: Sequence[BinReportRow], format: str = "table-text") -> bytes:
    """Render rows as UTF-8 bytes in one of :data:`FORMATS`."""
    if not rows:
        raise ValueError("no rows to emit")
    try:
        emitter = _EMITTERS[format]
    except KeyError:
        raise ValueError(f"unknown format {format!r}; expected one of {', '.join(FORMATS)}") from None
    return emitter(rows).encode("utf-8")


def with_scan_options(request: AnalysisRequest, **changes) -> AnalysisRequest:
    """Copy of ``request`` with scan or penalty settings replaced."""
    opts = request.options
    schedule_keys = {"residual_tol", "physical_tol", "max_nfev"}
    sched = replace(
        opts.scan.schedule, **{k: v for k, v in changes.items() if k in schedule_keys}
    )
    scan = replace(
        opts.scan,
        schedule=sched,
        **{k: v for k, v in changes.items() if k not in schedule_keys},
    )
    return replace(request, options=replace(opts, scan=scan))


__all__ = [
    "FORMATS",
    "AnalysisOptions",
    "AnalysisRequest",
    "BinReportRow",
    "CovarianceSymmetrizedWarning",
    "ObservableSummary",
    "emit_report",
    "format_entry",
    "format_significance",
    "parse_input",
    "run_analysis",
    "with_scan_options",
]
