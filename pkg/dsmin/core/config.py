from pydantic_settings import BaseSettings
from typing import List, Optional


class Settings(BaseSettings):
    """Application settings"""
    
    # Project
    PROJECT_NAME: str = "dsmin"
    VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    
    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    
    # Experiments
    DSMIN_OUT: Optional[str] = None
    DEFAULT_WORKERS: int = 1
    DEFAULT_SEEDS: str = "42,43,44"
    
    # Oracle and verification caps
    ORACLE_MAX_D: int = 20
    EXACT_INNER_MAX_D: int = 16
    VERIFY_FAST_MAX_D: int = 8
    VERIFY_FULL_MAX_D: int = 12
    
    # Plot data
    PLOT_GAP_FLOOR: float = 1e-12
    
    @property
    def seeds(self) -> List[int]:
        """Parse default seeds from comma-separated string"""
        return [int(seed.strip()) for seed in self.DEFAULT_SEEDS.split(",") if seed.strip()]
    
    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
