"""
Settings Manager
Run configuration: JSON defaults template, optional 'key = value' run file,
command-line overrides
"""

import json
import logging
import os
from typing import Any, Dict, Optional, Tuple

from .charlm import CharLMConfig
from .exceptions import ConfigError
from .training import HeadConfig

logger = logging.getLogger(__name__)


class SettingsManager:
    """Manager for run settings"""

    # Template file in repository
    TEMPLATE_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                 'config', 'settings.json')

    def __init__(self, run_file: Optional[str] = None, template_file: Optional[str] = None):
        """
        Initialize settings manager

        Args:
            run_file: Optional 'key = value' run configuration
            template_file: Defaults template (default: config/settings.json)
        """
        self.template_file = template_file or self.TEMPLATE_FILE
        self.defaults: Dict[str, Any] = self._load_template_settings()
        self.settings: Dict[str, Any] = dict(self.defaults)

        if run_file:
            self.update(self.read_run_file(run_file))
            logger.info(f"Settings loaded from {run_file}")

    def _load_template_settings(self) -> Dict[str, Any]:
        """Load default settings from template file"""
        try:
            if os.path.exists(self.template_file):
                with open(self.template_file, 'r', encoding='utf-8') as f:
                    return json.load(f)
        except Exception as e:
            logger.warning(f"Could not load template settings: {e}")

        # Fallback defaults if template file missing
        defaults: Dict[str, Any] = {
            'seed': 42,
            'log_level': 'INFO',
            'workers': 1,
            'corpus.max_chars': 2000,
            'corpus.split_ratios': '0.8,0.1,0.1',
            'conllu.form_col': 1,
            'conllu.tag_col': 4,
        }
        for key, value in CharLMConfig().to_dict().items():
            defaults[f'lm.{key}'] = value
        for prefix in ('tagger', 'classifier'):
            for key, value in HeadConfig().to_dict().items():
                defaults[f'{prefix}.{key}'] = value
        return defaults

    @staticmethod
    def read_run_file(path: str) -> Dict[str, str]:
        """
        Parse a run configuration file

        Args:
            path: File of 'key = value' lines; '#' starts a comment

        Returns:
            Raw string values by key
        """
        values: Dict[str, str] = {}
        with open(path, 'r', encoding='utf-8') as f:
            for line_no, raw in enumerate(f, start=1):
                line = raw.split('#', 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition('=')
                if not sep or not key.strip():
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
                values[key.strip()] = value.strip()
        return values

    def _coerce(self, key: str, value: Any) -> Any:
        if key not in self.defaults:
            raise ConfigError(f"Unknown setting '{key}'")
        default = self.defaults[key]
        if value is None:
            return default
        try:
            if isinstance(default, bool):
                if isinstance(value, str):
                    return value.strip().lower() in ('1', 'true', 'yes', 'on')
                return bool(value)
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
            return str(value)
        except (TypeError, ValueError):
            raise ConfigError(f"Invalid value for '{key}': {value!r}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get setting value

        Args:
            key: Setting key
            default: Default value if key not found

        Returns:
            Setting value
        """
        return self.settings.get(key, default)

    def set(self, key: str, value: Any):
        """
        Set setting value

        Args:
            key: Setting key
            value: Setting value (coerced to the default's type)
        """
        self.settings[key] = self._coerce(key, value)

    def update(self, settings_dict: Dict[str, Any]):
        """
        Update multiple settings; None values are ignored

        Args:
            settings_dict: Dictionary of settings to update
        """
        for key, value in settings_dict.items():
            if value is not None:
                self.set(key, value)

    def reset_to_defaults(self):
        """Reset all settings to defaults from template"""
        self.settings = dict(self.defaults)

    def get_all(self) -> Dict[str, Any]:
        """Get all settings"""
        return self.settings.copy()

    def section(self, prefix: str) -> Dict[str, Any]:
        """Settings under 'prefix.' with the prefix removed"""
        head = f"{prefix}."
        return {key[len(head):]: value for key, value in self.settings.items() if key.startswith(head)}

    def lm_config(self) -> CharLMConfig:
        return CharLMConfig.from_dict(self.section('lm'))

    def head_config(self, prefix: str) -> HeadConfig:
        return HeadConfig.from_dict(self.section(prefix))

    def split_ratios(self) -> Tuple[float, float, float]:
        raw = self.settings['corpus.split_ratios']
        try:
            parts = tuple(float(p) for p in str(raw).split(','))
        except ValueError:
            raise ConfigError(f"Invalid corpus.split_ratios: {raw!r}")
        if len(parts) != 3:
            raise ConfigError(f"corpus.split_ratios needs three values, got {raw!r}")
        return parts

    def lines(self):
        """Effective settings as 'key = value' lines"""
        return [f"{key} = {value}" for key, value in sorted(self.settings.items())]

    def log_effective(self):
        for line in self.lines():
            logger.info(f"config: {line}")

    def save(self, path: str) -> bool:
        """Save effective settings as a run file"""
        try:
            with open(path, 'w', encoding='utf-8') as f:
                f.write('# effective run configuration\n')
                for line in self.lines():
                    f.write(line + '\n')
            logger.info(f"Settings saved to {path}")
            return True
        except OSError as e:
            logger.error(f"Error saving settings: {e}")
            return False
