"""Tests for scenario files, overrides and process settings"""

import tomllib

import pytest

from abisim.config.scenario import (
    KINDS, SCHEMA_VERSION, build_config, config_to_dict, env_overrides, get_path, has_field,
    load_config, parse_scalar, read_raw, render_init_config, set_path,
)
from abisim.config import settings as settings_module
from abisim.config.settings import Settings, get_settings
from abisim.services.errors import ConfigError


def raw_config(kind='beating_pd', **sections):
    raw = {'schema_version': SCHEMA_VERSION, 'scenario': {'kind': kind}}
    raw.update(sections)
    return raw


class TestBuild:
    @pytest.mark.parametrize('kind', KINDS)
    def test_defaults_for_every_kind(self, kind):
        cfg = build_config(raw_config(kind))
        assert cfg.kind == kind
        assert cfg.schema_version == SCHEMA_VERSION

    def test_kind_defaults_applied(self):
        cfg = build_config(raw_config('beating_pd'))
        assert cfg.drive2.carrier_hz == 79.9e6
        assert cfg.drift.diffusion == 0.0

    def test_file_wins_over_kind_defaults(self):
        cfg = build_config(raw_config('beating_pd', drive2={'carrier_hz': 79.5e6}))
        assert cfg.drive2.carrier_hz == 79.5e6
        assert cfg.interferometer.path_phase == 1.08

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config(lock={'pid': {'kq': 1.0}}))
        assert info.value.path == 'lock.pid.kq'
        assert 'lock.pid.kq' in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config(laser={'power': 1.0}))
        assert info.value.path == 'laser'

    def test_wrong_type_names_path(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config(pd={'noise_sigma': 'loud'}))
        assert info.value.path == 'pd.noise_sigma'

    def test_integer_accepted_as_float(self):
        cfg = build_config(raw_config(pd={'noise_sigma': 0}))
        assert isinstance(cfg.pd.noise_sigma, float)

    def test_bool_is_not_an_integer(self):
        with pytest.raises(ConfigError):
            build_config(raw_config(scenario={'kind': 'beating_pd', 'seed': True}))

    def test_choice_enforced(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config(scenario={'kind': 'beating_pd', 'sim_mode': 'exact'}))
        assert info.value.path == 'scenario.sim_mode'

    def test_range_needs_two_values(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config(pzt={'range_v': [1.0]}))
        assert info.value.path == 'pzt.range_v'

    def test_non_finite_rejected(self):
        with pytest.raises(ConfigError):
            build_config(raw_config(pd={'noise_sigma': float('nan')}))

    @pytest.mark.parametrize('version', [None, 2])
    def test_schema_version(self, version):
        raw = raw_config()
        if version is None:
            del raw['schema_version']
        else:
            raw['schema_version'] = version
        with pytest.raises(ConfigError) as info:
            build_config(raw)
        assert info.value.path == 'schema_version'

    def test_unknown_kind(self):
        with pytest.raises(ConfigError) as info:
            build_config(raw_config('teleporter'))
        assert info.value.path == 'scenario.kind'

    def test_to_dict(self):
        d = config_to_dict(build_config(raw_config('chopped_switch')))
        assert d['lock']['pid']['ki'] == 1.7e5
        assert d['scenario']['kind'] == 'chopped_switch'


class TestPaths:
    def test_set_and_get(self):
        raw = {}
        set_path(raw, 'lock.pid.ki', 2e5)
        assert get_path(raw, 'lock.pid.ki') == 2e5

    def test_set_through_scalar(self):
        with pytest.raises(ConfigError):
            set_path({'lock': 3}, 'lock.pid', 1)

    def test_get_missing(self):
        with pytest.raises(ConfigError):
            get_path({}, 'timing.duty')

    @pytest.mark.parametrize('path,expected', [
        ('timing.duty', True), ('lock.pid.ki', True), ('drive1.gate.ramp_s', True),
        ('timing', False), ('nope.x', False), ('timing.duty.x', False),
    ])
    def test_has_field(self, path, expected):
        assert has_field(path) is expected

    @pytest.mark.parametrize('text,expected', [
        ('0.5', 0.5), ('3', 3), ('true', True), ('envelope', 'envelope'), ('[1, 2]', [1, 2]),
        ('"f"', 'f'),
    ])
    def test_parse_scalar(self, text, expected):
        assert parse_scalar(text) == expected


class TestOverrides:
    def test_env_overrides(self):
        found = env_overrides({'ABISIM__LOCK__PID__KI': '2e5', 'ABISIM_JOBS': '4', 'HOME': '/root'})
        assert found == {'lock.pid.ki': 2e5}

    @pytest.fixture
    def scenario_file(self, tmp_path):
        path = tmp_path / 'scenario.toml'
        path.write_text(
            'schema_version = 1\n[scenario]\nkind = "chopped_switch"\nseed = 7\n', encoding='utf-8'
        )
        return path

    def test_load_with_environment(self, scenario_file):
        cfg, raw = load_config(scenario_file, environ={'ABISIM__TIMING__DUTY': '0.5'})
        assert cfg.timing.duty == 0.5
        assert raw['timing']['duty'] == 0.5

    def test_seed_override(self, scenario_file):
        cfg, _ = load_config(scenario_file, environ={}, seed=99)
        assert cfg.scenario.seed == 99

    def test_default_sim_mode_only_when_absent(self, scenario_file, tmp_path):
        cfg, _ = load_config(scenario_file, environ={}, default_sim_mode='field')
        assert cfg.scenario.sim_mode == 'field'
        explicit = tmp_path / 'explicit.toml'
        explicit.write_text('schema_version = 1\n[scenario]\nkind = "beating_pd"\nsim_mode = "envelope"\n')
        cfg, _ = load_config(explicit, environ={}, default_sim_mode='field')
        assert cfg.scenario.sim_mode == 'envelope'

    def test_override_of_unknown_field(self, scenario_file):
        with pytest.raises(ConfigError) as info:
            load_config(scenario_file, environ={'ABISIM__TIMING__DUTYCYCLE': '0.5'})
        assert info.value.path == 'timing.dutycycle'

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            read_raw(tmp_path / 'absent.toml')

    def test_unparsable_file(self, tmp_path):
        bad = tmp_path / 'bad.toml'
        bad.write_text('schema_version = = 1\n')
        with pytest.raises(ConfigError, match='cannot parse'):
            read_raw(bad)


class TestInitConfig:
    @pytest.mark.parametrize('kind', KINDS)
    def test_round_trip(self, kind):
        text = render_init_config(kind)
        assert build_config(tomllib.loads(text)) == build_config(raw_config(kind))

    def test_every_field_documented(self):
        lines = render_init_config('scan_and_lock').splitlines()
        assignments = [i for i, line in enumerate(lines) if ' = ' in line and not line.startswith('#')]
        assert assignments
        assert all(lines[i - 1].startswith('# ') for i in assignments)
        assert '[lock.pid]' in lines

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            render_init_config('teleporter')


class TestShippedConfigs:
    @pytest.mark.parametrize('kind', KINDS)
    def test_loads(self, configs_dir, kind):
        cfg, _ = load_config(configs_dir / f'{kind}.toml', environ={})
        assert cfg.kind == kind


class TestSettings:
    def test_testing_profile(self):
        assert get_settings('testing') is settings_module.TestSettings
        assert get_settings('unknown') is Settings

    def test_invalid_sim_mode_reported(self):
        class Broken(Settings):
            SIM_MODE = 'exact'
        assert any(msg.startswith('ERROR') for msg in Broken.validate())

    def test_info_rows(self):
        info = Settings.get_info()
        assert {'sim_mode', 'jobs', 'env_prefix', 'log_level'} <= set(info)
