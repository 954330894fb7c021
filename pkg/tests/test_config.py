"""
Tests for config/settings.py and config/system_profile.py
"""

import json
import logging

import pytest
from numpy.testing import assert_allclose

from config.settings import RunSettings, load_settings, setup_logging
from config.system_profile import (SystemProfileModel, load_params, load_profile, resolve_profile_path,
                                   save_params)
from utils.errors import ConfigError

ENV_KEYS = ('COOPRADIO_OUTPUT_DIR', 'COOPRADIO_LOG_LEVEL', 'COOPRADIO_LOG_DIR', 'COOPRADIO_WORKERS',
            'COOPRADIO_ADMM_RHO', 'COOPRADIO_ADMM_EPS', 'COOPRADIO_ADMM_MAX_ITER')


@pytest.fixture
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    return monkeypatch


class TestRunSettings:
    def test_defaults(self, clean_env):
        settings = load_settings()
        assert settings.output_dir == 'outputs'
        assert settings.workers == 1
        assert settings.admm_rho == 0.1
        assert settings.admm_max_iter == 100_000

    def test_environment_overrides(self, clean_env):
        clean_env.setenv('COOPRADIO_WORKERS', '4')
        clean_env.setenv('COOPRADIO_ADMM_EPS', '1e-7')
        clean_env.setenv('COOPRADIO_LOG_LEVEL', 'debug')
        settings = load_settings()
        assert settings.workers == 4
        assert settings.admm_eps == 1e-7
        assert settings.log_level == 'debug'

    def test_malformed_number(self, clean_env):
        clean_env.setenv('COOPRADIO_WORKERS', 'many')
        with pytest.raises(ConfigError) as info:
            RunSettings.from_env()
        assert 'COOPRADIO_WORKERS' in info.value.message

    def test_every_problem_is_reported(self):
        settings = RunSettings(workers=0, admm_rho=0.0, admm_eps=-1.0, admm_max_iter=0,
                               output_dir='', log_level='LOUD')
        with pytest.raises(ConfigError) as info:
            settings.validate()
        assert len(info.value.details['errors']) == 6

    def test_logging_goes_to_file(self, tmp_path):
        settings = RunSettings(log_dir=str(tmp_path / 'logs'), log_level='INFO')
        setup_logging(settings)
        logging.getLogger('coopradio.test').info('hello from the test')
        for handler in logging.getLogger().handlers:
            handler.flush()
        assert 'hello from the test' in (tmp_path / 'logs' / 'coopradio.log').read_text()


class TestSystemProfiles:
    def test_reference_instances(self):
        two_su = load_params('two_su')
        five_su = load_params('five_su')
        assert two_su.num_sus == 2 and five_su.num_sus == 5
        assert_allclose(two_su.power_budget, [0.5, 0.5])
        assert_allclose(five_su.power_budget, [0.15] * 5)
        assert two_su.pu_arrival_rate == 0.3
        assert two_su.name == 'two_su'

    def test_arrival_rate_override(self):
        assert load_params('two_su', 0.55).pu_arrival_rate == 0.55

    def test_round_trip(self, five_su, tmp_path):
        path = save_params(five_su, tmp_path / 'nested' / 'five.json', description='copy')
        loaded = load_params(path)
        for a, b in zip(loaded.coop_success, five_su.coop_success):
            assert_allclose(a, b)
        assert load_profile(path).description == 'copy'

    def test_name_defaults_to_file_stem(self, tmp_path):
        data = json.loads(resolve_profile_path('two_su').read_text())
        del data['name']
        path = tmp_path / 'my_instance.json'
        path.write_text(json.dumps(data))
        assert load_params(path).name == 'my_instance'

    def test_scalar_budget(self):
        profile = SystemProfileModel(num_sus=2, power_levels=[[0, 1], [0, 1]], su_success=[[0, 1], [0, 1]],
                                     coop_success=[[0.4, 0.8], [0.4, 0.8]], solo_success=0.4,
                                     power_budget=0.3)
        assert_allclose(profile.to_params().power_budget, [0.3, 0.3])

    @pytest.mark.parametrize('change', [
        {'extra_key': 1},
        {'num_sus': 3},
        {'su_success': [[0.0, 0.3, 0.5, 0.8], [0.0, 0.3, 0.5, 0.8, 1.0]]},
        {'power_budget': [0.5]},
        {'solo_success': 'high'},
    ])
    def test_schema_violations(self, tmp_path, change):
        data = json.loads(resolve_profile_path('two_su').read_text())
        data.update(change)
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            load_params(path)

    def test_missing_and_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_params(tmp_path / 'absent.json')
        broken = tmp_path / 'broken.json'
        broken.write_text('{')
        with pytest.raises(ConfigError):
            load_params(broken)
