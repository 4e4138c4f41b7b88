"""System repository: a trained DeferralSystem as a directory of JSON model files plus a manifest."""

import json
from pathlib import Path
from typing import Any, Optional

from loguru import logger

from src.enums.EMethod import EMethod
from src.exceptions import ConfigError
from src.models.bandit_log import CostFunction
from src.models.deferral_system import DeferralSystem
from src.models.ood_detector import OODDetector
from src.models.propensity_model import AssignmentModel, PropensityModel
from src.models.softmax_model import SoftmaxModel

MANIFEST = "manifest.json"
BUNDLE_VERSION = 1

# component attribute -> (file name, loader)
_COMPONENTS = {
    'policy': ('policy.json', SoftmaxModel.from_dict),
    'router': ('router.json', SoftmaxModel.from_dict),
    'propensity': ('propensity.json', PropensityModel.from_dict),
    'per_human_propensity': ('propensity_human.json', PropensityModel.from_dict),
    'assignment': ('assignment.json', AssignmentModel.from_dict),
    'ood': ('ood.json', OODDetector.from_dict),
}


class SystemRepository:
    """Repository for DeferralSystem bundles."""

    def __init__(self, base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)

    def _dir(self, directory: str | Path) -> Path:
        directory = Path(directory)
        return directory if directory.is_absolute() else self.base_dir / directory

    @staticmethod
    def _write(path: Path, data: Any):
        path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding='utf-8')

    def save(self, system: DeferralSystem, directory: str | Path, extra: Optional[dict] = None) -> Path:
        """
        Write every fitted component and the manifest.

        Args:
            system: Trained system
            directory: Bundle directory (created if missing)
            extra: Additional manifest entries (e.g. OOD tuning scores)

        Returns:
            Bundle directory
        """
        target = self._dir(directory)
        target.mkdir(parents=True, exist_ok=True)
        files = {}
        for attribute, (file_name, _) in _COMPONENTS.items():
            component = getattr(system, attribute)
            stale = target / file_name
            if component is None:
                if stale.exists():
                    stale.unlink()
                continue
            self._write(stale, component.to_dict())
            files[attribute] = file_name

        manifest = {
            'version': BUNDLE_VERSION,
            'method': system.method.value,
            'seed': system.seed,
            'config_hash': system.config_hash,
            'num_humans': system.num_humans,
            'cost': system.cost.to_dict(),
            'trace': system.trace,
            'stopped_epoch': system.stopped_epoch,
            'files': files,
        }
        manifest.update(extra or {})
        self._write(target / MANIFEST, manifest)
        logger.debug(f"Saved {system} to {target}")
        return target

    def load(self, directory: str | Path) -> DeferralSystem:
        """
        Read a bundle written by save().

        Raises:
            ConfigError: If the manifest or a listed component is missing or unreadable
        """
        source = self._dir(directory)
        manifest_path = source / MANIFEST
        if not manifest_path.is_file():
            raise ConfigError(f"No system manifest in {source}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
            components = {}
            for attribute, file_name in manifest['files'].items():
                loader = _COMPONENTS[attribute][1]
                components[attribute] = loader(json.loads((source / file_name).read_text(encoding='utf-8')))
            system = DeferralSystem(
                method=EMethod(manifest['method']),
                cost=CostFunction.from_dict(manifest['cost']),
                num_humans=manifest['num_humans'],
                trace=manifest.get('trace'),
                stopped_epoch=manifest.get('stopped_epoch'),
                seed=manifest['seed'],
                config_hash=manifest.get('config_hash', ""),
                policy=components.get('policy'),
                router=components.get('router'),
                propensity=components.get('propensity'),
                per_human_propensity=components.get('per_human_propensity'),
                assignment=components.get('assignment'),
                ood=components.get('ood'),
            )
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"Cannot load system bundle {source}: {e}")
        logger.debug(f"Loaded {system} from {source}")
        return system

    def manifest(self, directory: str | Path) -> dict:
        manifest_path = self._dir(directory) / MANIFEST
        if not manifest_path.is_file():
            raise ConfigError(f"No system manifest in {manifest_path.parent}")
        return json.loads(manifest_path.read_text(encoding='utf-8'))
