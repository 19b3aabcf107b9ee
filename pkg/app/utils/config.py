"""Application Configuration
=========================
Defines and validates process-level settings: environment, default output
directory, logging, optional error reporting and tracing, and campaign
parallelism, leveraging Pydantic for type safety and environment variable
support (prefix ``DMCANC_``).
"""

from pathlib import Path
from typing import Literal

from pydantic import Field, HttpUrl, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="DMCANC_",
        env_file=".env",
        env_ignore_empty=True,
        extra="ignore",
    )
    PROJECT_NAME: str = "dmcanc"
    ENVIRONMENT: Literal["local", "development", "staging", "production"] = "local"

    # Where run artifacts go when neither the scenario nor --out-dir says otherwise
    OUTPUT_DIR: Path = Path("runs")

    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    LOG_FORMAT: Literal["console", "json"] = "console"

    SENTRY_DSN: HttpUrl | None = None
    LOGFIRE_TOKEN: str | None = None

    # Records the stage order of every simulated sample and fails on violations
    STAGE_AUDIT: bool = False

    MAX_JOBS: int = Field(default=1, ge=1)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def remote_reporting(self) -> bool:
        return self.ENVIRONMENT not in ("local", "development")


settings = Settings()
