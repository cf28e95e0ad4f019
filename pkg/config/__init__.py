from .settings import CheckConfig, EngineConfig, OutputConfig
