"""Shared diagnostics table and its CSV encoding."""
import csv
import io
import math

COLUMNS = (
    "t", "mass", "marginal_err", "min_F", "M0", "M1", "r",
    "f_L2", "f_H1", "f0_L2", "f1_L2", "ImPf_mu",
    "residual_mass", "residual_mom", "residual_energy",
)
SCHEMA_VERSION = 1


def _fmt(value):
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


class DiagnosticsSeries:
    """Rows keyed by the fixed column set; missing entries stay empty."""

    def __init__(self):
        self.rows = []

    def append(self, **values):
        unknown = set(values) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown diagnostics columns: {sorted(unknown)}")
        self.rows.append({c: values.get(c) for c in COLUMNS})

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [row[name] for row in self.rows]

    def set(self, index, name, value):
        self.rows[index][name] = value

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read(cls, path):
        series = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"unexpected diagnostics header in {path}")
            for rec in reader:
                series.rows.append({c: (float(v) if v != "" else None) for c, v in zip(COLUMNS, rec)})
        return series
