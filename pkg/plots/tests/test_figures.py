"""Figure rendering against solver-produced CSV files."""

from __future__ import annotations

import pytest

from trim_mpc_plots import (
    MAX_ARROWS,
    FigureSpec,
    SchemaError,
    arrow_stride,
    plot_controls,
    plot_mpc_overview,
    plot_path,
    plot_value_decrease,
    render,
)


def _png_ok(path):
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 1000


def _svg_ok(path):
    data = path.read_bytes()
    assert b"<svg" in data[:1000]
    assert len(data) > 1000


class TestArrowStride:
    @pytest.mark.parametrize("n", [1, 10, 24, 25, 26, 40, 100, 997, 5000])
    def test_at_most_max_arrows(self, n):
        k = arrow_stride(n)
        assert len(range(0, n, k)) <= MAX_ARROWS

    def test_no_thinning_below_cap(self):
        for n in range(1, MAX_ARROWS + 1):
            assert arrow_stride(n) == 1


class TestParkingTrace:
    def test_path_png(self, parking_trace_csv, tmp_path):
        out = tmp_path / "path.png"
        plot_path(parking_trace_csv, out)
        _png_ok(out)

    def test_path_svg(self, parking_trace_csv, tmp_path):
        out = tmp_path / "path.svg"
        plot_path(parking_trace_csv, out)
        _svg_ok(out)

    def test_value_decrease_png(self, parking_trace_csv, tmp_path):
        out = tmp_path / "value.png"
        plot_value_decrease(parking_trace_csv, out)
        _png_ok(out)

    def test_controls_png(self, parking_trace_csv, tmp_path):
        out = tmp_path / "controls.png"
        plot_controls(parking_trace_csv, out)
        _png_ok(out)

    def test_overview_png(self, parking_trace_csv, tmp_path):
        out = tmp_path / "overview.png"
        plot_mpc_overview(parking_trace_csv, out)
        _png_ok(out)

    def test_reruns_are_byte_identical(self, parking_trace_csv, tmp_path):
        first = tmp_path / "a.png"
        second = tmp_path / "b.png"
        plot_path(parking_trace_csv, first)
        plot_path(parking_trace_csv, second)
        assert first.read_bytes() == second.read_bytes()

    def test_svg_reruns_are_byte_identical(self, parking_trace_csv, tmp_path):
        first = tmp_path / "a.svg"
        second = tmp_path / "b.svg"
        plot_value_decrease(parking_trace_csv, first)
        plot_value_decrease(parking_trace_csv, second)
        assert first.read_bytes() == second.read_bytes()

    def test_input_not_mutated(self, parking_trace_csv, tmp_path):
        before = parking_trace_csv.read_bytes()
        plot_path(parking_trace_csv, tmp_path / "p.png")
        assert parking_trace_csv.read_bytes() == before

    def test_overwrite_existing_output(self, parking_trace_csv, tmp_path):
        out = tmp_path / "path.png"
        out.write_text("stale")
        plot_path(parking_trace_csv, out)
        _png_ok(out)


class TestLongTrace:
    def test_dense_trace_plots(self, line_trace_csv, tmp_path):
        out = tmp_path / "line.png"
        plot_path(line_trace_csv, out)
        _png_ok(out)

    def test_dense_value_decrease(self, line_trace_csv, tmp_path):
        out = tmp_path / "line_value.svg"
        plot_value_decrease(line_trace_csv, out)
        _svg_ok(out)


class TestTrajectoryInput:
    def test_path_accepts_trajectory(self, line_trajectory_csv, tmp_path):
        out = tmp_path / "traj.png"
        plot_path(line_trajectory_csv, out)
        _png_ok(out)

    def test_controls_accept_trajectory(self, line_trajectory_csv, tmp_path):
        out = tmp_path / "traj_u.png"
        plot_controls(line_trajectory_csv, out)
        _png_ok(out)

    def test_value_decrease_rejects_trajectory(
        self, line_trajectory_csv, tmp_path
    ):
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError, match="V"):
            plot_value_decrease(line_trajectory_csv, out)
        assert not out.exists()

    def test_overview_rejects_trajectory(self, line_trajectory_csv, tmp_path):
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError):
            plot_mpc_overview(line_trajectory_csv, out)
        assert not out.exists()


class TestBadInputs:
    def test_header_only_rejected(self, header_only_csv, tmp_path):
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError):
            plot_path(header_only_csv, out)
        assert not out.exists()

    def test_missing_file_rejected(self, tmp_path):
        out = tmp_path / "never.png"
        with pytest.raises(SchemaError):
            plot_path(tmp_path / "absent.csv", out)
        assert not out.exists()


class TestDecreaseOverlay:
    def test_staircase_renders(self, mintime_style_csv, tmp_path):
        out = tmp_path / "bound.png"
        spec = FigureSpec(
            csv_path=mintime_style_csv,
            kind="value-decrease",
            out_path=out,
            decrease_rate=1.0,
        )
        render(spec)
        _png_ok(out)


class TestFigureSpec:
    def test_render_dispatch(self, mintime_style_csv, tmp_path):
        for kind in ("path", "controls", "value-decrease", "mpc-overview"):
            out = tmp_path / f"{kind}.png"
            render(FigureSpec(mintime_style_csv, kind, out))
            _png_ok(out)

    def test_bad_kind(self, mintime_style_csv, tmp_path):
        with pytest.raises(ValueError, match="kind"):
            FigureSpec(mintime_style_csv, "histogram", tmp_path / "x.png")

    def test_bad_extension(self, mintime_style_csv, tmp_path):
        with pytest.raises(ValueError, match="must end in"):
            FigureSpec(mintime_style_csv, "path", tmp_path / "x.pdf")

    def test_bad_rate(self, mintime_style_csv, tmp_path):
        with pytest.raises(ValueError, match="decrease rate"):
            FigureSpec(
                mintime_style_csv,
                "value-decrease",
                tmp_path / "x.png",
                decrease_rate=-0.5,
            )
