#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Application settings and configuration
"""

from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Data Configuration
    data_dir: Optional[Path] = None  # overrides where relative data paths resolve

    # Output Configuration
    output_dir: Path = Path("reports")

    # Logging Configuration
    log_level: str = "INFO"

    # Application Configuration
    project_name: str = "Chain FL Robustness"
    debug: bool = False

    def resolve_data_path(self, path: Path) -> Path:
        """Resolve a config data path against DATA_DIR when it is relative"""
        if path.is_absolute() or self.data_dir is None:
            return path
        return self.data_dir / path

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore"
    }


# Global settings instance
settings = Settings()
