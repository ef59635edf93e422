"""Report files: per-slot CSVs, a JSON summary and columnar plot data.

Layout of an output directory::

    summary.json                        run summary, config echo, regret report
    trajectory_<algorithm>.csv          t,x1_x,x1_y,x2_x,x2_y,d_x,d_y,lambda,dist,loss,rate_bps
    sweep.csv                           one row per excess delay (sweep-delta)
    bounds.csv                          one row per Monte Carlo trial (verify-bounds)
    plot_trajectories.tsv               algorithm,t,x,y,peer_x,peer_y
    plot_rate_vs_delay.tsv              delta,<algorithm>_average_rate_bps,<algorithm>_downloaded_bits...
    plot_terminal_distance_vs_delay.tsv delta,<algorithm>_terminal_distance...
"""

import json
import logging
import re
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from models import RunReport
from settings import settings

logger = logging.getLogger(__name__)

TRAJECTORY_PLOT_COLUMNS = ['algorithm', 't', 'x', 'y', 'peer_x', 'peer_y']


def _plain(value):
    """Convert numpy scalars and containers into JSON-friendly Python values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _safe_name(name: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '_', name)


def summary_text(report: RunReport) -> str:
    return json.dumps(_plain(report.to_dict()), indent=2, sort_keys=True) + "\n"


def write_report(report: RunReport, out_dir: Union[str, Path]) -> List[Path]:
    """Write summary and per-slot tables; returns the written paths"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = settings.float_format
    written = []

    path = out / 'summary.json'
    path.write_text(summary_text(report), encoding='utf-8')
    written.append(path)

    for run in report.runs:
        path = out / f'trajectory_{_safe_name(run.name)}.csv'
        run.records.to_csv(path, index=False, float_format=fmt, lineterminator='\n')
        written.append(path)
    if report.sweep is not None:
        path = out / 'sweep.csv'
        report.sweep.to_csv(path, index=False, float_format=fmt, lineterminator='\n')
        written.append(path)
    if report.bounds is not None:
        path = out / 'bounds.csv'
        report.bounds.to_csv(path, index=False, float_format=fmt, lineterminator='\n')
        written.append(path)
    logger.info("wrote %d report files to %s", len(written), out)
    return written


def trajectory_plot_frame(report: RunReport) -> pd.DataFrame:
    frames = []
    for run in report.runs:
        rec = run.records
        frames.append(pd.DataFrame({
            'algorithm': run.name,
            't': rec['t'],
            'x': rec['x1_x'],
            'y': rec['x1_y'],
            'peer_x': rec['x2_x'],
            'peer_y': rec['x2_y'],
        }))
    if not frames:
        return pd.DataFrame(columns=TRAJECTORY_PLOT_COLUMNS)
    return pd.concat(frames, ignore_index=True)[TRAJECTORY_PLOT_COLUMNS]


def delay_frames(report: RunReport):
    """Rate-vs-delay and terminal-distance-vs-delay tables; None without a sweep"""
    if report.sweep is None:
        return None, None
    sweep = report.sweep
    rate_cols = ['delta'] + [c for c in sweep.columns
                             if c.endswith('_average_rate_bps') or c.endswith('_downloaded_bits')]
    dist_cols = ['delta'] + [c for c in sweep.columns if c.endswith('_terminal_distance')]
    return sweep[rate_cols], sweep[dist_cols]


def emit_plotdata(report: RunReport, out_dir: Union[str, Path]) -> List[Path]:
    """Columnar (tab separated) series behind the trajectory and delay figures"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = settings.float_format
    written = []

    path = out / 'plot_trajectories.tsv'
    trajectory_plot_frame(report).to_csv(path, sep='\t', index=False, float_format=fmt,
                                         lineterminator='\n')
    written.append(path)

    rates, distances = delay_frames(report)
    if rates is not None:
        for name, frame in (('plot_rate_vs_delay.tsv', rates),
                            ('plot_terminal_distance_vs_delay.tsv', distances)):
            path = out / name
            frame.to_csv(path, sep='\t', index=False, float_format=fmt, lineterminator='\n')
            written.append(path)
    return written
