import csv
import errno
import os

from twisted.logger import Logger

log = Logger()

RECORD_DIALECT = 'records'
csv.register_dialect(RECORD_DIALECT, delimiter=',', lineterminator='\n')


def ensure_dir(path):
    try:
        os.makedirs(path)
    except OSError as e:
        if e.errno == errno.EACCES:
            log.error("Can't create output directory {path}: access denied", path=path)
            raise
        if e.errno != errno.EEXIST:
            raise
    return path


def format_table(rows, fields, title=None):
    """Fixed-width text table; floats are printed with 4 significant digits."""
    cells = [[str(f) for f in fields]]
    for row in rows:
        cells.append([_text(row.get(f, '')) for f in fields])
    widths = [max(len(r[i]) for r in cells) for i in range(len(fields))]
    lines = [title] if title else []
    for n, r in enumerate(cells):
        lines.append('  '.join(c.rjust(w) for c, w in zip(r, widths)))
        if n == 0:
            lines.append('  '.join('-' * w for w in widths))
    return '\n'.join(lines) + '\n'


def _text(value):
    if isinstance(value, float):
        return '%.4g' % value
    return str(value)
