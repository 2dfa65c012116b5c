"""CSV output with an embedded config hash, and optional plot scripts."""
from __future__ import annotations

import csv
import io
import os
from typing import Iterable, Sequence


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: str, fields: Sequence[str], rows: Iterable[dict], command: str,
              config_hash: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# baasmec {command} config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row.get(f)) for f in fields])
    return path


def read_csv(path: str, drop: Sequence[str] = ()) -> tuple[str, list[dict]]:
    """Return the header comment and the rows, minus the ``drop`` columns."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    first, _, body = text.partition("\n")
    rows = []
    for row in csv.DictReader(io.StringIO(body)):
        for k in drop:
            row.pop(k, None)
        rows.append(row)
    return first, rows


PLOT_TEMPLATE = '''"""Plot {csv_name}; run with python after installing matplotlib."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(lambda: ([], []))
with open({csv_name!r}) as fh:
    next(fh)
    for row in csv.DictReader(fh):
        xs, ys = series[row[{group!r}]]
        xs.append(float(row[{x!r}]))
        ys.append(float(row[{y!r}]))
for name, (xs, ys) in series.items():
    plt.plot(xs, ys, label=name)
plt.xlabel({xlabel!r})
plt.ylabel({ylabel!r})
plt.legend()
plt.savefig({png!r}, dpi=150)
'''


def write_plot_script(csv_path: str, x: str, y: str, group: str = "scheme",
                      xlabel: str = "", ylabel: str = "") -> str:
    base = os.path.splitext(csv_path)[0]
    script = base + "_plot.py"
    with open(script, "w", encoding="utf-8") as fh:
        fh.write(PLOT_TEMPLATE.format(csv_name=os.path.basename(csv_path), group=group, x=x, y=y,
                                      xlabel=xlabel or x, ylabel=ylabel or y,
                                      png=os.path.basename(base) + ".png"))
    return script
