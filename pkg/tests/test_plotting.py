"""Tests for the SVG figure layouts and run tracking."""

import numpy as np
import pandas as pd
import pytest

from qgain.tools.experiments import fig1_data
from qgain.tracking import end_tracking_session, start_tracking_session
from qgain.utils.plotting import figure_for_table, plot_table, quality_gain_figure


class TestFigureLayouts:
    def test_fig1_lines(self):
        fig = figure_for_table("fig1", fig1_data([2, 4, 10]))
        ax = fig.axes[0]
        assert ax.get_xscale() == "log"
        # four schemes plus the 1/2 reference line
        assert len(ax.get_lines()) == 5

    def test_fig2_groups(self):
        table = pd.DataFrame({
            "N": [10, 10, 100, 100],
            "lambda": [4, 10, 4, 10],
            "scheme": ["optimal"] * 4,
            "sigma_bar_star": [1.0, 2.0, 1.5, 3.0],
        })
        assert len(figure_for_table("fig2", table).axes[0].get_lines()) == 2

    def test_unknown_layout(self):
        with pytest.raises(ValueError, match="no plot layout"):
            figure_for_table("fig4", pd.DataFrame({"x": [1]}))

    def test_svg_is_reproducible(self, tmp_path):
        table = fig1_data([2, 4, 10])
        first = plot_table("fig1", table, tmp_path / "a.svg").read_bytes()
        second = plot_table("fig1", table, tmp_path / "b.svg").read_bytes()
        assert first == second
        assert b"<svg" in first

    def test_explorer_figure(self):
        s = np.linspace(0.0, 2.0, 5)
        fig = quality_gain_figure(s, [("a", s), ("b", -s)], sigma_bar_star=1.0, band=(s - 0.1, s + 0.1))
        labels = [line.get_label() for line in fig.axes[0].get_lines()]
        assert {"a", "b", "σ̄*"} <= set(labels)


class TestTracking:
    def test_session_records_stages(self):
        session = start_tracking_session("qgain_run", {"config": "moments"})
        with session.stage("graph"):
            pass
        ended = end_tracking_session(session, success=False, error="boom")
        assert ended.duration_s >= 0.0
        assert "graph" in ended.stages
        assert not ended.success
        assert ended.error == "boom"

    def test_no_session(self):
        assert end_tracking_session(None) is None
