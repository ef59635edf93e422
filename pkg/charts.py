import logging
from pathlib import Path
from typing import List, Union

import plotly.graph_objects as go

from models import RunReport
from reports import delay_frames, trajectory_plot_frame

logger = logging.getLogger(__name__)

ALGORITHM_COLORS = {
    'direct': '#7F7F7F',
    'offline': '#2E86AB',
    'mpc': '#F18F01',
    'ogd': '#C73E1D',
    'benchmark': '#3B1F2B',
}


def _color(name: str) -> str:
    return ALGORITHM_COLORS.get(name.split('_delta')[0], '#6A994E')


def create_trajectory_chart(report: RunReport) -> go.Figure:
    """Overlay of every algorithm's path with the peer positions"""

    frame = trajectory_plot_frame(report)
    fig = go.Figure()
    if frame.empty:
        return fig

    for name, rows in frame.groupby('algorithm', sort=False):
        fig.add_trace(go.Scatter(
            x=rows['x'],
            y=rows['y'],
            mode='lines+markers',
            name=name,
            line=dict(color=_color(name), width=2),
            marker=dict(size=5),
        ))

    first = frame[frame['algorithm'] == frame['algorithm'].iloc[0]]
    fig.add_trace(go.Scatter(
        x=first['peer_x'],
        y=first['peer_y'],
        mode='markers',
        name='peer',
        marker=dict(color='black', size=6, symbol='x'),
    ))

    fig.update_layout(
        title=f"Trajectories ({report.scenario_name})",
        xaxis_title="x (m)",
        yaxis_title="y (m)",
        yaxis=dict(scaleanchor='x', scaleratio=1),
        height=600,
    )
    return fig


def create_delay_chart(report: RunReport, metric: str) -> go.Figure:
    """One line per algorithm of `metric` against the excess delay"""

    rates, distances = delay_frames(report)
    fig = go.Figure()
    if rates is None:
        return fig
    frame = distances if metric == 'terminal_distance' else rates
    suffix = f'_{metric}'

    for column in frame.columns:
        if not column.endswith(suffix):
            continue
        name = column[:-len(suffix)]
        fig.add_trace(go.Scatter(
            x=frame['delta'],
            y=frame[column],
            mode='lines+markers',
            name=name,
            line=dict(color=_color(name), width=3),
            marker=dict(size=8),
        ))

    titles = {
        'average_rate_bps': ("Average rate vs excess delay", "Average rate (bps)"),
        'downloaded_bits': ("Downloaded data vs excess delay", "Downloaded (bits)"),
        'terminal_distance': ("Terminal distance vs excess delay", "Distance to destination (m)"),
    }
    title, y_title = titles.get(metric, (metric, metric))
    fig.update_layout(
        title=title,
        xaxis_title="Excess delay (slots)",
        yaxis_title=y_title,
        hovermode='x unified',
        height=400,
    )
    return fig


def write_figures(report: RunReport, out_dir: Union[str, Path]) -> List[Path]:
    """Render the figures that apply to this report as standalone HTML"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    figures = {}
    if report.runs:
        figures['trajectories.html'] = create_trajectory_chart(report)
    if report.sweep is not None:
        figures['rate_vs_delay.html'] = create_delay_chart(report, 'average_rate_bps')
        figures['terminal_distance_vs_delay.html'] = create_delay_chart(report, 'terminal_distance')

    written = []
    for name, fig in figures.items():
        path = out / name
        fig.write_html(str(path), include_plotlyjs='cdn')
        written.append(path)
    logger.info("wrote %d figures to %s", len(written), out)
    return written
