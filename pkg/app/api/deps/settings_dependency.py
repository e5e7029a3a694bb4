from core.config import DevSettings, settings


def get_settings() -> DevSettings:
    return settings


def get_workers(requested, current_settings: DevSettings) -> int:
    return requested or current_settings.WORKERS
