#!/usr/bin/env python3
"""
Configuration Management for the AOM Interferometer Simulator
Handles environment variables and process-wide settings
"""

import os
from pathlib import Path
from typing import List
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings:
    """Process-wide settings (scenario physics lives in scenario files)"""

    # Base directory
    BASE_DIR = Path(__file__).parent.parent.parent

    # ==================================
    # SIMULATION DEFAULTS
    # ==================================

    # Simulation path used when a scenario file does not choose one
    SIM_MODE = os.getenv('ABISIM_SIM_MODE', 'envelope').lower()

    # Parallel workers for sweeps and Monte-Carlo replicas
    JOBS = int(os.getenv('ABISIM_JOBS', '1'))

    # Prefix of environment variables that override scenario fields,
    # e.g. ABISIM__LOCK__PID__KI=2e5
    ENV_PREFIX = os.getenv('ABISIM_ENV_PREFIX', 'ABISIM__')

    CONFIG_DIR = Path(os.getenv('ABISIM_CONFIG_DIR', str(BASE_DIR / 'configs')))

    # ==================================
    # LOGGING
    # ==================================

    LOG_LEVEL = os.getenv('ABISIM_LOG_LEVEL', 'INFO').upper()
    LOG_FILE = os.getenv('ABISIM_LOG_FILE', '')

    @classmethod
    def validate(cls) -> List[str]:
        """
        Validate settings and return list of warnings/errors

        Returns:
            List of validation messages
        """
        messages = []

        if cls.SIM_MODE not in ('envelope', 'field'):
            messages.append(
                f"ERROR: ABISIM_SIM_MODE must be 'envelope' or 'field', got '{cls.SIM_MODE}'"
            )

        if cls.JOBS < 1:
            messages.append(f"WARNING: ABISIM_JOBS={cls.JOBS} is below 1, sweeps will run serially")

        if cls.LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            messages.append(f"WARNING: Unknown log level '{cls.LOG_LEVEL}', falling back to INFO")

        if not cls.CONFIG_DIR.exists():
            messages.append(f"INFO: Example config directory not found: {cls.CONFIG_DIR}")

        return messages

    @classmethod
    def get_info(cls) -> dict:
        """
        Get settings information (safe for logging)

        Returns:
            Dictionary with settings info
        """
        return {
            'sim_mode': cls.SIM_MODE,
            'jobs': cls.JOBS,
            'env_prefix': cls.ENV_PREFIX,
            'config_dir': str(cls.CONFIG_DIR),
            'log_level': cls.LOG_LEVEL,
            'log_file': cls.LOG_FILE or '<stderr only>',
        }


# Development settings
class DevelopmentSettings(Settings):
    """Development-specific settings"""
    LOG_LEVEL = 'DEBUG'


# Production settings
class ProductionSettings(Settings):
    """Production-specific settings"""
    pass


# Test settings
class TestSettings(Settings):
    """Test-specific settings"""
    JOBS = 1
    LOG_LEVEL = 'WARNING'
    LOG_FILE = ''


# Settings mapping
settings_map = {
    'development': DevelopmentSettings,
    'production': ProductionSettings,
    'testing': TestSettings,
}


def get_settings(env: str | None = None) -> type[Settings]:
    """
    Get settings based on environment

    Args:
        env: Environment name (development, production, testing)

    Returns:
        Settings class
    """
    if env is None:
        env = os.getenv('ABISIM_ENV', 'production')

    return settings_map.get(env, Settings)
