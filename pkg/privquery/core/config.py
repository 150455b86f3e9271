"""
Configuration management for privquery.

Handles environment-based settings for logging, tracing, parallelism
and output locations. Experiment parameters live in config files and are
validated by the models in ``privquery.models.experiment``.
"""

from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

SUPPORTED_SCHEMA_VERSION = 1


class Settings(BaseSettings):
    """Process-wide settings read from ``PRIVQUERY_*`` environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PRIVQUERY_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Settings
    app_name: str = Field("privquery", description="Application name")
    app_version: str = Field("1.0.0", description="Application version")
    debug: bool = Field(False, description="Debug mode")
    environment: str = Field("production", description="Environment (development/testing/production)")

    # Experiment Execution
    workers: int = Field(1, description="Number of worker processes used to run trials")
    default_seed: int = Field(20240601, description="Base seed used when a config omits one")
    schema_version: int = Field(SUPPORTED_SCHEMA_VERSION, description="Config schema version understood by this build")
    output_dir: Path = Field(Path("runs"), description="Directory receiving traces, tables and manifests")

    # Monitoring and Logging
    log_level: str = Field("INFO", description="Log level")
    log_format: str = Field("console", description="Log format (json/console)")
    trace_noise: bool = Field(False, description="Log every Laplace/Gumbel noise draw")

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        """Validate environment value."""
        allowed_environments = ["development", "testing", "production"]
        if v not in allowed_environments:
            raise ValueError(f"environment must be one of {allowed_environments}")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level value."""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"log_level must be one of {allowed_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        """Validate log format value."""
        if v not in ("json", "console"):
            raise ValueError("log_format must be 'json' or 'console'")
        return v

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers must be at least 1")
        return v

    @field_validator("default_seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("default_seed must be a 64-bit unsigned integer")
        return v


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()


# Global settings instance
settings = get_settings()
