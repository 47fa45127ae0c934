import pydantic as pd


class Settings(pd.BaseSettings):
    """
    Process-wide settings read from the environment.

    :param force_std_xml: use xml.etree even if lxml is installed
    :param workers: simulation worker processes (1 runs in-process)
    :param chunk_size: trials per worker task
    :param log_level: default cli log level
    """

    force_std_xml: bool = False
    workers: int = pd.Field(1, ge=1)
    chunk_size: int = pd.Field(256, ge=1)
    log_level: str = 'WARNING'

    class Config:
        env_prefix = 'CELLSEARCH_'


settings = Settings()

FORCE_STD_XML = settings.force_std_xml
