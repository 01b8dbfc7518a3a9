"""Tests for the abisim command line"""

import json
import math
import tomllib

import numpy as np
import pytest

from abisim.app.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SCENARIO, main
from abisim.services.artifacts import write_trace
from abisim.services.detectors import TimeSeries
from abisim.services.fitting import fringe_model

BEATING = """\
schema_version = 1

[scenario]
kind = "beating_pd"
seed = 21
"""


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    monkeypatch.delenv('ABISIM_SIM_MODE', raising=False)
    monkeypatch.delenv('ABISIM_LOG_FILE', raising=False)


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / 'beating.toml'
    path.write_text(BEATING, encoding='utf-8')
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


class TestInitAndValidate:
    def test_init_config_to_stdout(self, capsys):
        code, out = run_cli(capsys, 'init-config', '--kind', 'chopped_switch')
        assert code == EXIT_OK
        assert tomllib.loads(out)['scenario']['kind'] == 'chopped_switch'

    def test_init_config_refuses_overwrite(self, capsys, tmp_path):
        target = tmp_path / 'tuner.toml'
        assert run_cli(capsys, 'init-config', '--kind', 'frequency_tuner', '--out', str(target))[0] == EXIT_OK
        assert run_cli(capsys, 'init-config', '--kind', 'frequency_tuner', '--out', str(target))[0] == EXIT_IO

    def test_validate_writes_nothing(self, capsys, scenario, tmp_path):
        before = sorted(tmp_path.iterdir())
        code, out = run_cli(capsys, 'validate', '--config', str(scenario))
        assert code == EXIT_OK
        assert out == 'OK beating_pd\n'
        assert sorted(tmp_path.iterdir()) == before

    def test_validate_reports_bad_field(self, capsys, tmp_path):
        path = tmp_path / 'bad.toml'
        path.write_text(BEATING + '\n[lock.pid]\nkq = 1.0\n', encoding='utf-8')
        assert run_cli(capsys, 'validate', '--config', str(path))[0] == EXIT_CONFIG

    def test_missing_config(self, capsys, tmp_path):
        code, _ = run_cli(capsys, 'run', '--config', str(tmp_path / 'absent.toml'), '--out', str(tmp_path))
        assert code == EXIT_CONFIG


class TestRun:
    def test_writes_artifacts(self, capsys, scenario, tmp_path):
        out_dir = tmp_path / 'run'
        code, out = run_cli(capsys, 'run', '--config', str(scenario), '--out', str(out_dir))
        assert code == EXIT_OK
        assert (out_dir / 'trace.csv').is_file()
        summary = json.loads((out_dir / 'summary.json').read_text())
        assert json.loads(out) == summary
        assert summary['seed'] == 21

    def test_refuses_overwrite(self, capsys, scenario, tmp_path):
        args = ['run', '--config', str(scenario), '--out', str(tmp_path / 'run')]
        assert run_cli(capsys, *args)[0] == EXIT_OK
        assert run_cli(capsys, *args)[0] == EXIT_IO
        assert run_cli(capsys, *args, '--force')[0] == EXIT_OK

    def test_same_seed_same_bytes(self, capsys, scenario, tmp_path):
        for name in ('a', 'b'):
            run_cli(capsys, 'run', '--config', str(scenario), '--out', str(tmp_path / name))
        for artifact in ('trace.csv', 'summary.json'):
            assert (tmp_path / 'a' / artifact).read_bytes() == (tmp_path / 'b' / artifact).read_bytes()

    def test_seed_flag(self, capsys, scenario, tmp_path):
        run_cli(capsys, 'run', '--config', str(scenario), '--out', str(tmp_path / 'r'), '--seed', '5')
        assert json.loads((tmp_path / 'r' / 'summary.json').read_text())['seed'] == 5

    def test_environment_override(self, capsys, scenario, tmp_path, monkeypatch):
        monkeypatch.setenv('ABISIM__PD__NOISE_SIGMA', '0')
        code, out = run_cli(capsys, 'run', '--config', str(scenario), '--out', str(tmp_path / 'r'))
        assert code == EXIT_OK
        summary = json.loads(out)
        assert summary['config']['pd']['noise_sigma'] == 0.0
        assert summary['headline']['v_hat'] == pytest.approx(0.995, abs=1e-9)


class TestFit:
    def test_refit_matches_run(self, capsys, scenario, tmp_path):
        out_dir = tmp_path / 'run'
        _, out = run_cli(capsys, 'run', '--config', str(scenario), '--out', str(out_dir))
        summary = json.loads(out)
        code, out = run_cli(capsys, 'fit', '--csv', str(out_dir / 'trace.csv'),
                            '--delta-omega', repr(summary['delta_omega_rad_s']), '--i-in', '1')
        assert code == EXIT_OK
        fit = json.loads(out)
        for key in ('v_hat', 'eta_hat', 'phi_hat'):
            assert fit[key] == pytest.approx(summary['fit'][key], rel=1e-12)

    def test_empty_csv(self, capsys, tmp_path):
        path = tmp_path / 'trace.csv'
        path.write_text('')
        code, _ = run_cli(capsys, 'fit', '--csv', str(path), '--delta-omega', '1e5', '--i-in', '1')
        assert code == EXIT_CONFIG

    def test_half_fringe(self, capsys, tmp_path):
        dw = 2 * math.pi * 100e3
        t = np.arange(40) * 1e-7
        path = tmp_path / 'trace.csv'
        write_trace(TimeSeries(0.0, 1e-7, fringe_model(t, 0.9, 0.9, 1.0, dw, 1.0)), path)
        code, out = run_cli(capsys, 'fit', '--csv', str(path), '--delta-omega', repr(dw), '--i-in', '1')
        assert code == EXIT_SCENARIO
        assert json.loads(out)['error'] == 'IllConditioned'


class TestSweep:
    def test_writes_sweep(self, capsys, scenario, tmp_path):
        code, out = run_cli(capsys, 'sweep', '--config', str(scenario), '--param', 'interferometer.visibility',
                            '--values', '0.9,0.95', '--out', str(tmp_path / 's'))
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload['points'] == 2
        assert payload['failed_points'] == 0
        assert (tmp_path / 's' / 'sweep.csv').read_text().startswith('interferometer.visibility,')

    def test_unknown_parameter(self, capsys, scenario, tmp_path):
        code, _ = run_cli(capsys, 'sweep', '--config', str(scenario), '--param', 'timing.dutycycle',
                          '--values', '0.5', '--out', str(tmp_path / 's'))
        assert code == EXIT_CONFIG
