"""
MTGrow — Application Configuration
Loads process-level settings from environment variables with validation.

Experiment-level knobs (languages, plans, schedules) live in the JSON
experiment manifest; only deployment-sensitive values are kept here.
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """
    Centralized configuration loaded from environment.
    Every machine-specific value is externalized.
    """

    # ------- Outputs -------
    # Root directory under which every manifest's output_dir is resolved
    OUTPUT_ROOT: str = "./runs"

    # ------- Logging -------
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # ------- Execution -------
    # Thread count for per-direction evaluation and probes
    EVAL_WORKERS: int = 1
    SHOW_PROGRESS: bool = False

    # ------- Manifest defaults -------
    # Used when a manifest omits vocab.size or seed
    DEFAULT_VOCAB_SIZE: int = 512
    DEFAULT_SEED: int = 1234

    # ------- Provenance -------
    CODE_VERSION: str = "1.0.0"

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
