"""Spectra files, CSV tables and JSON run manifests.

Spectra file layout (``.octspec``)::

    OCTSPEC 1
    m_count=2048
    lambda_min_nm=791.6
    lambda_max_nm=994.0
    a_line_count=3
    encoding=ascii-csv            (or float64-le)
    has_reference=1
    k0=6321106.0311...            (optional, exact grid origin in rad/m)
    delta_k=789.18...             (optional, exact grid step in rad/m)
    END
    <payload>

The payload holds ``a_line_count`` spectra of ``m_count`` samples in row
order, preceded by the reference (emission) spectrum when ``has_reference=1``.
ASCII payloads have one comma-separated row per line; binary payloads are
raw little-endian float64 values.
"""

import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SpectraFormatError
from .forward import EmissionSpectrum, Interferogram
from .grids import WavenumberGrid

MAGIC = "OCTSPEC 1"
ENCODINGS = ("ascii-csv", "float64-le")
MANIFEST_SCHEMA_VERSION = 1
_REQUIRED = ("m_count", "lambda_min_nm", "lambda_max_nm", "a_line_count", "encoding")


@dataclass(frozen=True)
class SpectraHeader:
    m_count: int
    lambda_min_nm: float
    lambda_max_nm: float
    a_line_count: int
    encoding: str
    has_reference: bool = False
    k0: float | None = None
    delta_k: float | None = None

    def k_grid(self) -> WavenumberGrid:
        if self.k0 is not None and self.delta_k is not None:
            grid = WavenumberGrid(self.k0, self.delta_k, self.m_count)
            nominal = WavenumberGrid.from_wavelengths(self.lambda_min_nm * 1e-9, self.lambda_max_nm * 1e-9, self.m_count)
            if abs(grid.k0 - nominal.k0) > 1e-9 * nominal.k0 or abs(grid.k_max - nominal.k_max) > 1e-9 * nominal.k_max:
                raise SpectraFormatError("k0/delta_k disagree with the wavelength bounds in the header")
            return grid
        return WavenumberGrid.from_wavelengths(self.lambda_min_nm * 1e-9, self.lambda_max_nm * 1e-9, self.m_count)


def _parse_header(raw: bytes, path) -> tuple:
    """Return ``(header, payload_offset, first_payload_line)``."""
    offset = 0
    line_no = 0
    fields = {}
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise SpectraFormatError(f"{path}: header not terminated by END (byte {offset}, line {line_no + 1})")
        line_no += 1
        try:
            line = raw[offset:end].decode("ascii").strip()
        except UnicodeDecodeError:
            raise SpectraFormatError(f"{path}: non-ASCII header at line {line_no} (byte {offset})") from None
        where = f"{path}: line {line_no} (byte {offset})"
        offset = end + 1
        if line_no == 1:
            if line != MAGIC:
                raise SpectraFormatError(f"{where}: expected {MAGIC!r}, found {line!r}")
            continue
        if line == "END":
            break
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SpectraFormatError(f"{where}: expected key=value, found {line!r}")
        fields[key.strip()] = (value.strip(), where)

    missing = [k for k in _REQUIRED if k not in fields]
    if missing:
        raise SpectraFormatError(f"{path}: header is missing {', '.join(missing)}")

    def number(key, kind):
        value, where = fields[key]
        try:
            return kind(value)
        except ValueError:
            raise SpectraFormatError(f"{where}: {key} must be {kind.__name__}, got {value!r}") from None

    encoding, where = fields["encoding"]
    if encoding not in ENCODINGS:
        raise SpectraFormatError(f"{where}: encoding must be one of {ENCODINGS}, got {encoding!r}")
    has_ref = fields.get("has_reference", ("0", ""))[0]
    if has_ref not in ("0", "1"):
        raise SpectraFormatError(f"{fields['has_reference'][1]}: has_reference must be 0 or 1")
    header = SpectraHeader(
        m_count=number("m_count", int),
        lambda_min_nm=number("lambda_min_nm", float),
        lambda_max_nm=number("lambda_max_nm", float),
        a_line_count=number("a_line_count", int),
        encoding=encoding,
        has_reference=has_ref == "1",
        k0=number("k0", float) if "k0" in fields else None,
        delta_k=number("delta_k", float) if "delta_k" in fields else None,
    )
    if header.m_count < 2 or header.a_line_count < 0:
        raise SpectraFormatError(f"{path}: m_count must be >= 2 and a_line_count >= 0")
    return header, offset, line_no + 1


def _parse_ascii(payload: bytes, header: SpectraHeader, rows: int, path, first_line: int, base: int):
    out = np.empty((rows, header.m_count))
    lines = payload.split(b"\n")
    offset = base
    row = 0
    for n, line in enumerate(lines):
        where = f"{path}: line {first_line + n} (byte {offset})"
        offset += len(line) + 1
        text = line.decode("ascii", errors="replace").strip()
        if not text:
            continue
        if row >= rows:
            raise SpectraFormatError(f"{where}: more than the {rows} rows declared in the header")
        cells = text.split(",")
        if len(cells) != header.m_count:
            raise SpectraFormatError(f"{where}: row has {len(cells)} values, expected {header.m_count}")
        try:
            out[row] = [float(c) for c in cells]
        except ValueError:
            raise SpectraFormatError(f"{where}: unparsable number in row") from None
        if not np.all(np.isfinite(out[row])):
            raise SpectraFormatError(f"{where}: non-finite value in row")
        row += 1
    if row != rows:
        raise SpectraFormatError(f"{path}: found {row} rows, header declares {rows}")
    return out


def load_spectra(path):
    """Read a spectra file.

    Returns
    -------
    interferograms : list of Interferogram
    reference : EmissionSpectrum or None
        Present when the header sets ``has_reference=1``.

    Raises
    ------
    SpectraFormatError
        With the offending line or byte offset.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise SpectraFormatError(f"{path}: cannot read file ({exc.strerror})") from None
    header, offset, first_line = _parse_header(raw, path)
    rows = header.a_line_count + int(header.has_reference)
    payload = raw[offset:]
    if header.encoding == "float64-le":
        expected = 8 * rows * header.m_count
        if len(payload) != expected:
            raise SpectraFormatError(
                f"{path}: binary payload at byte {offset} has {len(payload)} bytes, expected {expected} "
                f"({rows} rows x {header.m_count} float64)"
            )
        data = np.frombuffer(payload, dtype="<f8").reshape(rows, header.m_count).astype(float)
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            r, c = bad[0]
            raise SpectraFormatError(
                f"{path}: non-finite value at byte {offset + 8 * (r * header.m_count + c)} (row {r}, column {c})"
            )
    else:
        data = _parse_ascii(payload, header, rows, path, first_line, offset)

    try:
        grid = header.k_grid()
    except SpectraFormatError:
        raise
    except ValueError as exc:
        raise SpectraFormatError(f"{path}: invalid wavenumber grid in header: {exc}") from None
    reference = None
    if header.has_reference:
        try:
            reference = EmissionSpectrum(data[0], grid)
        except ValueError as exc:
            raise SpectraFormatError(f"{path}: reference row: {exc}") from None
        data = data[1:]
    return [Interferogram(row, grid, "file") for row in data], reference


def _header_text(grid: WavenumberGrid, count: int, encoding: str, has_reference: bool) -> str:
    lines = [
        MAGIC,
        f"m_count={grid.m_count}",
        f"lambda_min_nm={grid.lambda_min * 1e9!r}",
        f"lambda_max_nm={grid.lambda_max * 1e9!r}",
        f"a_line_count={count}",
        f"encoding={encoding}",
        f"has_reference={int(has_reference)}",
        f"k0={grid.k0!r}",
        f"delta_k={grid.delta_k!r}",
        "END",
    ]
    return "\n".join(lines) + "\n"


def spectra_bytes(interferograms, reference: EmissionSpectrum | None = None, encoding: str = "float64-le") -> bytes:
    if encoding not in ENCODINGS:
        raise SpectraFormatError(f"encoding must be one of {ENCODINGS}")
    interferograms = list(interferograms)
    grids = {i.k_grid for i in interferograms} | ({reference.k_grid} if reference is not None else set())
    if len(grids) != 1:
        raise SpectraFormatError("all spectra must share one wavenumber grid")
    (grid,) = grids
    rows = ([reference.values] if reference is not None else []) + [i.values for i in interferograms]
    data = np.array(rows, dtype=float).reshape(len(rows), grid.m_count)
    head = _header_text(grid, len(interferograms), encoding, reference is not None).encode("ascii")
    if encoding == "float64-le":
        return head + data.astype("<f8").tobytes()
    body = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in data)
    return head + body.encode("ascii")


def save_spectra(path, interferograms, reference: EmissionSpectrum | None = None, encoding: str = "float64-le"):
    """Write spectra atomically. Both encodings round-trip values exactly."""
    return atomic_write(path, spectra_bytes(interferograms, reference, encoding))


def atomic_write(path, data) -> str:
    """Write ``data`` (bytes or str) via a temp file and rename; return its sha256."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def table_text(columns, rows, run_config: dict | None = None) -> str:
    """CSV text with a header row.

    ``run_config`` is embedded as a single leading ``# run-config: {json}``
    comment so each table records the settings that produced it.
    """
    buf = io.StringIO()
    if run_config is not None:
        buf.write("# run-config: " + json.dumps(run_config, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_table(path, columns, rows, run_config: dict | None = None) -> str:
    return atomic_write(path, table_text(columns, rows, run_config))


def read_table(path):
    """Return ``(run_config or None, columns, rows)``; cells are left as strings."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    config = None
    if lines and lines[0].startswith("# run-config: "):
        config = json.loads(lines[0][len("# run-config: "):])
        lines = lines[1:]
    reader = csv.reader(lines)
    columns = next(reader)
    return config, columns, list(reader)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def library_versions() -> dict:
    import scipy

    from . import __version__

    return {
        "octrecon": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def write_manifest(path, command: str, argv, config: dict, seed, outputs: dict) -> str:
    """JSON manifest: schema version, argv, config echo, seed, versions and output hashes."""
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "versions": library_versions(),
        "outputs": dict(sorted(outputs.items())),
    }
    return atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    version = manifest.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise SpectraFormatError(f"{path}: unsupported manifest schema_version {version!r}")
    return manifest
