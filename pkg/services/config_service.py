"""
Run Configuration Service.

Parses flat `key = value` run files with dotted keys into RunConfig.
Values are JSON literals, `a:b:step` grids, comma lists or bare words.
"""
import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from errors import ConfigError
from models import RunConfig

logger = logging.getLogger(__name__)

GRID_PATTERN = re.compile(r"^\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*$")

# Dotted file keys to RunConfig field paths
KEY_MAP = {
    "potential.coeffs": ("potential", "coeffs"),
    "potential.table": ("potential", "table"),
    "lambda.kind": ("lambda", "kind"),
    "lambda.support": ("lambda", "support"),
    "lambda.plateau": ("lambda", "plateau"),
    "lambda.height": ("lambda", "height"),
    "lambda.coeffs": ("lambda", "coeffs"),
    "lambda.smoothness": ("lambda", "smoothness"),
    "n": ("n",),
    "t.grid": ("t_grid",),
    "s": ("s",),
    "seed": ("seed",),
    "count": ("count",),
    "out": ("out",),
    "edge": ("edge",),
    "mode": ("mode",),
    "kernel.mode": ("kernel_mode",),
    "kernel.t": ("kernel_t",),
    "kernel.s": ("kernel_s",),
    "kernel.theta1": ("theta1",),
    "kernel.theta2": ("theta2",),
    "routes": ("routes",),
    "s_steps": ("s_steps",),
    "verify.suites": ("verify_suites",),
    "verify.n": ("verify_n",),
    "threads": ("threads",),
    "svg": ("svg",),
    "xlsx": ("xlsx",),
}

LIST_FIELDS = {"n", "t_grid", "routes", "verify_suites", "verify_n"}


class ConfigService:
    """
    Service for reading run configurations.
    """

    def parse_grid(self, text: str) -> Optional[List[float]]:
        """
        Inclusive grid a, a+step, ..., b. Returns None when text is not a grid.
        """
        match = GRID_PATTERN.match(text)
        if match is None:
            return None
        try:
            a, b, step = (float(g) for g in match.groups())
        except ValueError:
            return None
        if step == 0.0 or (b - a) / step < 0.0:
            raise ConfigError(f"grid {text!r} does not reach its end point")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        values = a + step * np.arange(count)
        return [round(float(v), 12) for v in values]

    def parse_value(self, text: str) -> Any:
        text = text.strip()
        if not text:
            raise ConfigError("empty value")
        grid = self.parse_grid(text)
        if grid is not None:
            return grid
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            pass
        if "," in text:
            return [self.parse_value(part) for part in text.split(",") if part.strip()]
        return text

    def parse_text(self, text: str, base_dir: Optional[Path] = None) -> Dict[str, Any]:
        """Nested dict of RunConfig inputs from the lines of a run file"""
        data: Dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                parsed = self.parse_value(value)
            except ConfigError as e:
                raise ConfigError(f"line {lineno} ({key}): {e}")
            self.assign(data, key, parsed)
        table = data.get("potential", {}).get("table")
        if table is not None and base_dir is not None and not Path(table).is_absolute():
            data["potential"]["table"] = str(base_dir / table)
        return data

    def assign(self, data: Dict[str, Any], key: str, value: Any) -> None:
        if key not in KEY_MAP:
            raise ConfigError(f"unknown configuration key {key!r}")
        path = KEY_MAP[key]
        if path[-1] in LIST_FIELDS and not isinstance(value, list):
            value = [value]
        target = data
        for part in path[:-1]:
            target = target.setdefault(part, {})
        target[path[-1]] = value

    def lambda_overrides(self, text: Optional[str]) -> Dict[str, Any]:
        """
        Dotted overrides from a --lambda flag KIND:R_LO:R_HI[:HEIGHT],
        e.g. bump:0.1:0.9 or const:0:0:2.5.
        """
        if not text:
            return {}
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ConfigError(f"--lambda expects KIND:R_LO:R_HI[:HEIGHT], got {text!r}")
        kind = parts[0].strip()
        out: Dict[str, Any] = {"lambda.kind": kind}
        try:
            if kind != "const":
                out["lambda.support"] = [float(parts[1]), float(parts[2])]
            if len(parts) == 4 and parts[3].strip():
                out["lambda.height"] = float(parts[3])
        except ValueError:
            raise ConfigError(f"--lambda radii and height must be numbers, got {text!r}")
        return out

    def build(self, data: Dict[str, Any]) -> RunConfig:
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"invalid configuration: {problems}")

    def load(self, path: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Read a run file (if given) and apply CLI overrides, keyed by the same
        dotted names as the file. None-valued overrides are ignored.
        """
        data: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"cannot read configuration {path}: {e}")
            data = self.parse_text(text, base_dir=path.parent)
            logger.info("Loaded configuration %s", path)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if isinstance(value, str) and key not in ("out", "potential.table"):
                value = self.parse_value(value)
            self.assign(data, key, value)
        if "potential" not in data:
            raise ConfigError("configuration has no potential (set potential.coeffs or potential.table)")
        config = self.build(data)
        logger.debug("Run configuration: %s", config.model_dump(by_alias=True))
        return config


# Global service instance
config_service = ConfigService()
