"""
Line-delimited record streams: measurements, smoother stats and per-frame graph summaries.
"""
import csv
import json

import numpy as np

from .sim import FrameMeasurements
from .utils import RECORD_DIALECT

MEASUREMENT_FIELDS = ('frame', 'class', 'object_id', 'track_id', 'zx', 'zy', 'zz')
STATS_FIELDS = ('frame', 'wall_ms', 'reelim_vars', 'max_clique', 'avg_clique', 'relinearized', 'total_vars')
SUMMARY_FIELDS = ('frame', 'formulation', 'new_keys_by_kind', 'new_factors_by_kind')

STATIC = 'static'
DYNAMIC = 'dynamic'


def counts_encode(counts):
    return json.dumps(dict((str(k), int(v)) for k, v in counts.items()), sort_keys=True)


def counts_decode(encoded):
    return json.loads(encoded)


def measurement_rows(frames):
    for frame in frames:
        for track, z in frame.static_obs:
            yield [frame.frame, STATIC, 0, track] + ['%.17g' % v for v in z]
        for j in sorted(frame.dynamic_obs):
            for track, z in frame.dynamic_obs[j]:
                yield [frame.frame, DYNAMIC, j, track] + ['%.17g' % v for v in z]


def write_measurements(frames, stream, header=True):
    writer = csv.writer(stream, dialect=RECORD_DIALECT)
    if header:
        writer.writerow(MEASUREMENT_FIELDS)
    for row in measurement_rows(frames):
        writer.writerow(row)


def read_measurements(stream):
    """Inverse of ``write_measurements``; odometry is not part of the stream."""
    frames = {}
    for row in csv.reader(stream, dialect=RECORD_DIALECT):
        if not row or row[0] == MEASUREMENT_FIELDS[0]:
            continue
        k, kind, j, track = int(row[0]), row[1], int(row[2]), int(row[3])
        z = np.array([float(v) for v in row[4:7]])
        frame = frames.setdefault(k, FrameMeasurements(k))
        if kind == STATIC:
            frame.static_obs.append((track, z))
        else:
            frame.dynamic_obs.setdefault(j, []).append((track, z))
    return [frames[k] for k in sorted(frames)]


def write_stats(stats, stream, tagged=False):
    fields = STATS_FIELDS + (('object_id',) if tagged else ())
    writer = csv.writer(stream, dialect=RECORD_DIALECT)
    writer.writerow(fields)
    for s in stats:
        record = s._asdict()
        writer.writerow([_cell(record[f]) for f in fields])


def write_summaries(summaries, stream):
    writer = csv.writer(stream, dialect=RECORD_DIALECT)
    writer.writerow(SUMMARY_FIELDS)
    for s in summaries:
        writer.writerow([s['frame'], s['formulation'], counts_encode(s['new_keys_by_kind']),
                         counts_encode(s['new_factors_by_kind'])])


def write_table(rows, fields, stream):
    writer = csv.writer(stream, dialect=RECORD_DIALECT)
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_cell(row.get(f, '')) for f in fields])


def _cell(value):
    if isinstance(value, float):
        return '%.6g' % value
    return value
