import numpy as np
import pytest

from artifact.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    RunConfig,
    initial_state,
    main,
    parse_config,
    read_series,
    read_snapshot,
    serialize_config,
    validate_config,
    write_snapshot,
)
from artifact.errors import ConfigError
from artifact.geometry import Box, DistState, SpatialDomain, VelocityGrid
from artifact.maxwellian import charge_density

SMALL = """\
boxes = 0,0,0,1,1,1
h_x = 0.25
n_v = 8
t_end = 0.0625
dt = 0.03125
snapshot_times = 0.0625
"""


class TestParse:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.n_v == 16 and cfg.v_max == 7.0
        assert cfg.R == pytest.approx(4.2)
        assert cfg.l == 3.0  # 3 q with q = 1 for gamma = 0
        assert cfg.dt > 0

    def test_coulomb_resolves_soft_weights(self):
        cfg = parse_config("gamma = -3\n")
        assert cfg.hardness == "soft"
        assert cfg.rq == (4, 7)
        assert cfg.l == 21.0

    def test_odd_n_v_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("# header\nn_v = 23\n")
        assert exc.value.line == 2 and exc.value.key == "n_v"
        assert "line 2" in str(exc.value)

    def test_cfl_violation(self):
        with pytest.raises(ConfigError, match="CFL") as exc:
            parse_config("dt = 1.0\nv_max = 6\nh_x = 0.1\n")
        assert exc.value.key == "dt" and exc.value.line == 1

    @pytest.mark.parametrize(
        "text, key, line",
        [
            ("bogus = 1\n", "bogus", 1),
            ("n_v = 8\nn_v = 8\n", "n_v", 2),
            ("\nn_v = eight\n", "n_v", 2),
            ("nonlinear = maybe\n", "nonlinear", 1),
        ],
    )
    def test_bad_keys(self, text, key, line):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert (exc.value.key, exc.value.line) == (key, line)

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("n_v 8\n")

    def test_eps_must_be_below_R(self):
        with pytest.raises(ConfigError):
            parse_config("eps = 5\nR = 4\n")

    def test_default_dt_divides_t_end(self):
        cfg = parse_config("t_end = 0.2\nh_x = 0.25\n")
        steps = 0.2 / cfg.dt
        assert steps == pytest.approx(round(steps), abs=1e-9)
        assert cfg.dt <= 0.9 * 0.25 / 7.0

    def test_serialize_round_trip(self):
        cfg = parse_config("gamma = -1.5\nboxes = 0,0,0,2,1,1; 2,0,0,3,0.5,1\nsnapshot_times = 0.5,1\nh_x = 0.25\nactive_dims = 2\n")
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert serialize_config(again) == text

    def test_validate_programmatic(self):
        cfg = validate_config(RunConfig(gamma=-2.0))
        assert cfg.l == 3.0 * cfg.rq[1]


class TestSnapshot:
    def test_bit_exact_round_trip(self, tmp_path, rng):
        dom = SpatialDomain([Box((0, 0, 0), (1, 1, 1)), Box((1, 0, 0), (2, 0.5, 1))], 0.25, active_dims=2)
        grid = VelocityGrid(4, 6.0)
        f = rng.standard_normal((2, dom.n_cells) + grid.shape)
        path = write_snapshot(tmp_path / "s.bin", DistState(f, 0.75), dom, grid, {"seed": 3})
        header, g = read_snapshot(path)
        assert header["time"] == 0.75 and header["seed"] == 3
        assert len(header["mask"]) == dom.n_cells
        assert g.tobytes() == f.tobytes()

    def test_truncated_file(self, tmp_path, line_domain, grid8):
        path = write_snapshot(tmp_path / "s.bin", DistState.zeros(line_domain, grid8), line_domain, grid8)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            read_snapshot(path)


class TestInitialData:
    @pytest.mark.parametrize("kind", ["wave", "random"])
    def test_charge_neutral(self, kind, line_domain, grid8):
        s = initial_state(line_domain, grid8, kind, 1e-3, seed=5)
        rho = charge_density(s.f, grid8)
        assert abs(rho.mean()) <= 1e-14 * np.abs(s.f).max()

    def test_zero(self, line_domain, grid8):
        assert not np.any(initial_state(line_domain, grid8, "zero").f)

    def test_random_is_seeded(self, line_domain, grid8):
        a = initial_state(line_domain, grid8, "random", seed=9).f
        b = initial_state(line_domain, grid8, "random", seed=9).f
        c = initial_state(line_domain, grid8, "random", seed=10).f
        np.testing.assert_array_equal(a, b)
        assert np.any(a != c)


class TestMain:
    def test_run_and_inspect(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(SMALL)
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
        series = read_series(out / "series.csv")
        assert series["t"][-1] == pytest.approx(0.0625)
        assert len(series["t"]) == 3
        snaps = sorted(out.glob("snapshot_*.bin"))
        assert len(snaps) == 1
        capsys.readouterr()
        assert main(["inspect", str(snaps[0])]) == EXIT_OK
        text = capsys.readouterr().out
        assert "time = 0.0625" in text and "a_plus" in text

    def test_inspect_zero_snapshot(self, tmp_path, capsys, line_domain, grid8):
        path = write_snapshot(tmp_path / "z.bin", DistState.zeros(line_domain, grid8), line_domain, grid8)
        assert main(["inspect", str(path)]) == EXIT_OK
        lines = [ln for ln in capsys.readouterr().out.splitlines() if "integral" in ln]
        assert len(lines) == 6
        assert all("max|.| = 0.000000e+00  integral = 0.000000e+00" in ln for ln in lines)

    def test_fit_decay(self, tmp_path, capsys):
        t = np.linspace(0, 4, 81)
        rows = ["t,e_plain"] + [f"{a:.17g},{b:.17g}" for a, b in zip(t, 3 * np.exp(-0.5 * t))]
        path = tmp_path / "s.csv"
        path.write_text("\n".join(rows) + "\n")
        assert main(["fit-decay", str(path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "delta = 0.5" in out and "r_squared = 1" in out

    def test_fit_decay_missing_column(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x\n0,1\n")
        assert main(["fit-decay", str(path)]) == EXIT_CONFIG

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("n_v = 23\n")
        assert main(["run", str(cfg)]) == EXIT_CONFIG
        assert "line 1" in capsys.readouterr().err

    def test_missing_files(self, tmp_path):
        assert main(["run", str(tmp_path / "none.cfg")]) == EXIT_CONFIG
        assert main(["inspect", str(tmp_path / "none.bin")]) == EXIT_RUNTIME

    def test_verify_quick(self, capsys):
        assert main(["verify", "--quick"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "properties passed" in out
